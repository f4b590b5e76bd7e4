//! Word-embedding store: word2vec-format loading, cosine neighbors, and
//! POS-matched random sampling.

use super::tagger::{tag_family, Tagger};
use super::{Candidate, LexicalError};
use crate::domain::SourceTier;
use rand::Rng;
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// Immutable vocabulary of fixed-dimension vectors; rank is load order,
/// which in word2vec files is descending corpus frequency.
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f32>,
    exact: HashMap<String, usize>,
    lowercase: HashMap<String, usize>,
}

impl std::fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("words", &self.words.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl EmbeddingStore {
    fn from_entries(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Self {
        let mut words = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        let mut exact = HashMap::new();
        let mut lowercase = HashMap::new();
        for (word, vector) in entries {
            if exact.contains_key(&word) {
                continue; // keep the earliest (most frequent) duplicate
            }
            let rank = words.len();
            exact.insert(word.clone(), rank);
            lowercase.entry(word.to_lowercase()).or_insert(rank);
            words.push(word);
            vectors.extend_from_slice(&vector);
        }
        Self {
            dim,
            words,
            vectors,
            exact,
            lowercase,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Frequency rank of a word: exact-case hit first, lowercase fallback.
    pub fn rank(&self, word: &str) -> Option<usize> {
        self.exact
            .get(word)
            .or_else(|| self.lowercase.get(&word.to_lowercase()))
            .copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.rank(word)
            .map(|rank| &self.vectors[rank * self.dim..(rank + 1) * self.dim])
    }

    fn vector_at(&self, rank: usize) -> &[f32] {
        &self.vectors[rank * self.dim..(rank + 1) * self.dim]
    }

    /// Mean of the vectors of the term's in-vocabulary whitespace-split
    /// words; None when every word is out of vocabulary.
    pub fn query_vector(&self, term: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0f64; self.dim];
        let mut found = 0usize;
        for word in term.split_whitespace() {
            if let Some(vector) = self.vector(word) {
                for (acc, &v) in sum.iter_mut().zip(vector) {
                    *acc += v as f64;
                }
                found += 1;
            }
        }
        if found == 0 {
            return None;
        }
        for value in &mut sum {
            *value /= found as f64;
        }
        Some(sum)
    }
}

fn cosine(a: &[f64], b: &[f32]) -> Option<f64> {
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let y = y as f64;
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return None;
    }
    Some(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Loads a word-vector file. Text layout: header "vocab_size dim", then one
/// "word v1 .. vd" line per entry. A `.bin` extension selects the
/// equivalent binary layout (header line, then per entry the word bytes, a
/// space, and dim little-endian f32 values). `limit` keeps only the most
/// frequent entries.
pub fn load_embeddings(path: &Path, limit: Option<usize>) -> Result<EmbeddingStore, LexicalError> {
    if path.extension().is_some_and(|e| e == "bin") {
        load_binary(path, limit)
    } else {
        load_text(path, limit)
    }
}

fn parse_header(line: &str, path: &Path) -> Result<(usize, usize), LexicalError> {
    let mut parts = line.split_whitespace();
    let vocab = parts.next().and_then(|v| v.parse::<usize>().ok());
    let dim = parts.next().and_then(|v| v.parse::<usize>().ok());
    match (vocab, dim, parts.next()) {
        (Some(vocab), Some(dim), None) if dim > 0 => Ok((vocab, dim)),
        _ => Err(LexicalError::MalformedHeader {
            path: path.display().to_string(),
            message: format!("expected \"vocab_size dim\", got {line:?}"),
        }),
    }
}

fn load_text(path: &Path, limit: Option<usize>) -> Result<EmbeddingStore, LexicalError> {
    let raw = std::fs::read_to_string(path).map_err(|e| LexicalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut lines = raw.lines();
    let header = lines.next().ok_or_else(|| LexicalError::MalformedHeader {
        path: path.display().to_string(),
        message: "empty file".to_string(),
    })?;
    let (vocab, dim) = parse_header(header, path)?;
    let keep = limit.unwrap_or(vocab).min(vocab);

    let mut entries = Vec::with_capacity(keep);
    for (line_index, line) in lines.enumerate() {
        if entries.len() >= keep {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default().to_string();
        let values: Result<Vec<f32>, _> = parts.map(|v| v.parse::<f32>()).collect();
        let line_number = line_index + 2; // header is line 1
        let values = values.map_err(|e| LexicalError::DimensionMismatch {
            line: line_number,
            expected: dim,
            actual: 0,
            message: e.to_string(),
        })?;
        if values.len() != dim {
            return Err(LexicalError::DimensionMismatch {
                line: line_number,
                expected: dim,
                actual: values.len(),
                message: format!("word {word:?}"),
            });
        }
        entries.push((word, values));
    }
    Ok(EmbeddingStore::from_entries(dim, entries))
}

fn load_binary(path: &Path, limit: Option<usize>) -> Result<EmbeddingStore, LexicalError> {
    let bytes = std::fs::read(path).map_err(|e| LexicalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LexicalError::MalformedHeader {
            path: path.display().to_string(),
            message: "no header line".to_string(),
        })?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|e| {
        LexicalError::MalformedHeader {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    })?;
    let (vocab, dim) = parse_header(header, path)?;
    let keep = limit.unwrap_or(vocab).min(vocab);

    let mut entries = Vec::with_capacity(keep);
    let mut cursor = header_end + 1;
    for entry_index in 0..keep {
        while cursor < bytes.len() && (bytes[cursor] == b'\n' || bytes[cursor] == b' ') {
            cursor += 1;
        }
        if cursor >= bytes.len() {
            break;
        }
        let word_start = cursor;
        while cursor < bytes.len() && bytes[cursor] != b' ' {
            cursor += 1;
        }
        let word = String::from_utf8_lossy(&bytes[word_start..cursor]).into_owned();
        cursor += 1; // the separating space
        let need = dim * 4;
        if cursor + need > bytes.len() {
            return Err(LexicalError::DimensionMismatch {
                line: entry_index + 2,
                expected: dim,
                actual: (bytes.len().saturating_sub(cursor)) / 4,
                message: format!("truncated vector for word {word:?}"),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for chunk in bytes[cursor..cursor + need].chunks_exact(4) {
            values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        cursor += need;
        entries.push((word, values));
    }
    Ok(EmbeddingStore::from_entries(dim, entries))
}

/// True iff the word's frequency rank is strictly below the threshold.
pub fn is_high_frequency(word: &str, store: &EmbeddingStore, threshold_rank: usize) -> bool {
    store.rank(word).is_some_and(|rank| rank < threshold_rank)
}

/// Top-`num` vocabulary words by cosine similarity to the term's mean
/// vector, excluding the term and its constituent words; ties break toward
/// the more frequent word. Out-of-vocabulary terms produce an empty list.
pub fn find_candidates_by_embedding(
    term: &str,
    num: usize,
    store: &EmbeddingStore,
) -> Vec<Candidate> {
    if num == 0 {
        return Vec::new();
    }
    let Some(query) = store.query_vector(term) else {
        return Vec::new();
    };
    let term_lower = term.to_lowercase();
    let constituents: HashSet<String> =
        term.split_whitespace().map(|w| w.to_lowercase()).collect();

    let mut scored: Vec<(f64, usize)> = Vec::new();
    for rank in 0..store.len() {
        let word = &store.words()[rank];
        let lower = word.to_lowercase();
        if lower == term_lower || constituents.contains(&lower) {
            continue;
        }
        if let Some(cos) = cosine(&query, store.vector_at(rank)) {
            scored.push((cos, rank));
        }
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(num)
        .map(|(cos, rank)| Candidate {
            text: store.words()[rank].clone(),
            source_tier: SourceTier::EmbeddingSimilar,
            score: Some(cos),
        })
        .collect()
}

/// Deterministic partial Fisher-Yates draw of `num` items.
pub fn sample_without_replacement<T: Clone, R: Rng>(items: &[T], num: usize, rng: &mut R) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let k = num.min(items.len());
    for i in 0..k {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
    }
    order[..k].iter().map(|&i| items[i].clone()).collect()
}

/// Uniform sample (without replacement) of vocabulary words whose tag
/// family matches the term's; seeded, hence a pure function of its inputs.
pub fn find_candidates_by_pos<R: Rng>(
    term: &str,
    num: usize,
    store: &EmbeddingStore,
    tagger: &Tagger,
    rng: &mut R,
) -> Vec<Candidate> {
    if num == 0 {
        return Vec::new();
    }
    let Some(term_tag) = last_word_tag(term, tagger) else {
        return Vec::new();
    };
    let family = tag_family(&term_tag);
    let matching: Vec<&String> = store
        .words()
        .iter()
        .filter(|word| {
            last_word_tag(word, tagger).is_some_and(|tag| tag_family(&tag) == family)
        })
        .collect();
    sample_without_replacement(&matching, num, rng)
        .into_iter()
        .map(|word| Candidate {
            text: word.clone(),
            source_tier: SourceTier::PosRandom,
            score: None,
        })
        .collect()
}

/// Tag of a term's final non-punctuation token (the head of a noun phrase).
fn last_word_tag(term: &str, tagger: &Tagger) -> Option<String> {
    tagger
        .tokenize_and_tag(term)
        .into_iter()
        .filter(|t| !t.is_punctuation())
        .next_back()
        .map(|t| t.pos)
}
