//! BM25 inverted index over a passage corpus, with on-disk persistence.

use super::FactCheckError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;

/// One retrievable passage in the DPR dump layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub title: String,
}

/// Lowercased alphanumeric tokens over `title + text`.
pub fn index_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    k1: f64,
    b: f64,
    doc_count: usize,
    avg_doc_length: f64,
}

/// Inverted index with the log-saturated non-negative idf variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    postings: BTreeMap<String, Vec<(String, u32)>>,
    doc_lengths: BTreeMap<String, u32>,
    passages: BTreeMap<String, Passage>,
    avg_doc_length: f64,
    doc_count: usize,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> (f64, f64) {
        (self.k1, self.b)
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passages.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.doc_lengths.contains_key(id)
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        if df == 0.0 {
            return 0.0;
        }
        let n = self.doc_count as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_frequency(&self, term: &str, passage_id: &str) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.iter()
                    .find(|(id, _)| id == passage_id)
                    .map(|(_, tf)| *tf)
            })
            .unwrap_or(0)
    }

    fn term_score(&self, idf: f64, tf: u32, doc_length: u32) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let tf = tf as f64;
        let norm = 1.0 - self.b + self.b * doc_length as f64 / self.avg_doc_length;
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }

    /// Saves the index as a directory: a manifest plus the index body.
    pub fn save(&self, dir: &Path) -> Result<(), FactCheckError> {
        std::fs::create_dir_all(dir).map_err(|e| FactCheckError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            k1: self.k1,
            b: self.b,
            doc_count: self.doc_count,
            avg_doc_length: self.avg_doc_length,
        };
        let write = |name: &str, body: String| -> Result<(), FactCheckError> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| FactCheckError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        write("manifest.json", serde_json::to_string_pretty(&manifest).unwrap())?;
        write("index.json", serde_json::to_string(self).unwrap())
    }

    pub fn load(dir: &Path) -> Result<Self, FactCheckError> {
        let read = |name: &str| -> Result<String, FactCheckError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| FactCheckError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let manifest: Manifest =
            serde_json::from_str(&read("manifest.json")?).map_err(|e| {
                FactCheckError::BadManifest {
                    message: e.to_string(),
                }
            })?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(FactCheckError::BadManifest {
                message: format!(
                    "format version {} unsupported (expected {})",
                    manifest.format_version, INDEX_FORMAT_VERSION
                ),
            });
        }
        let index: Bm25Index =
            serde_json::from_str(&read("index.json")?).map_err(|e| FactCheckError::BadManifest {
                message: e.to_string(),
            })?;
        if index.doc_count != manifest.doc_count {
            return Err(FactCheckError::BadManifest {
                message: "manifest/doc_count disagreement".to_string(),
            });
        }
        Ok(index)
    }
}

/// Builds the index from a passage stream. Duplicate ids are malformed.
pub fn build_index<I>(corpus: I, k1: f64, b: f64) -> Result<Bm25Index, FactCheckError>
where
    I: IntoIterator<Item = Passage>,
{
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    let mut doc_lengths: BTreeMap<String, u32> = BTreeMap::new();
    let mut passages: BTreeMap<String, Passage> = BTreeMap::new();
    let mut total_length: u64 = 0;
    let mut row = 0usize;

    for passage in corpus {
        row += 1;
        if doc_lengths.contains_key(&passage.id) {
            return Err(FactCheckError::MalformedRow {
                row,
                message: format!("duplicate passage id {:?}", passage.id),
            });
        }
        let tokens = index_tokens(&format!("{} {}", passage.title, passage.text));
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for token in &tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings
                .entry(term.to_string())
                .or_default()
                .push((passage.id.clone(), tf));
        }
        doc_lengths.insert(passage.id.clone(), tokens.len() as u32);
        total_length += tokens.len() as u64;
        passages.insert(passage.id.clone(), passage);
    }

    if row == 0 {
        return Err(FactCheckError::EmptyCorpus);
    }
    Ok(Bm25Index {
        postings,
        doc_lengths,
        passages,
        avg_doc_length: total_length as f64 / row as f64,
        doc_count: row,
        k1,
        b,
    })
}

/// BM25 score of one passage for a term list. Terms absent from the
/// passage (or corpus) contribute zero.
pub fn bm25_score(
    query_terms: &[String],
    passage_id: &str,
    index: &Bm25Index,
) -> Result<f64, FactCheckError> {
    let Some(&doc_length) = index.doc_lengths.get(passage_id) else {
        return Err(FactCheckError::UnknownPassage(passage_id.to_string()));
    };
    let mut score = 0.0;
    for term in query_terms {
        let idf = index.idf(term);
        if idf == 0.0 {
            continue;
        }
        score += index.term_score(idf, index.term_frequency(term, passage_id), doc_length);
    }
    Ok(score)
}

/// Scores every passage sharing at least one term with the query; callers
/// sort and truncate. Contributions accumulate in query-term order, so the
/// result equals [`bm25_score`] exactly.
pub(super) fn score_all(query_terms: &[String], index: &Bm25Index) -> BTreeMap<String, f64> {
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for term in query_terms {
        let idf = index.idf(term);
        if idf == 0.0 {
            continue;
        }
        if let Some(list) = index.postings.get(term) {
            for (passage_id, tf) in list {
                let doc_length = index.doc_lengths[passage_id];
                *scores.entry(passage_id.clone()).or_insert(0.0) +=
                    index.term_score(idf, *tf, doc_length);
            }
        }
    }
    scores
}

/// Reads a DPR-layout corpus: TSV rows `id<TAB>text<TAB>title`, optionally
/// gzip-compressed; a literal `id\ttext\ttitle` header row is skipped.
pub fn read_corpus_tsv(path: &Path) -> Result<Vec<Passage>, FactCheckError> {
    let file = std::fs::File::open(path).map_err(|e| FactCheckError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut passages = Vec::new();
    for (index, line) in BufReader::new(reader).lines().enumerate() {
        let row = index + 1;
        let line = line.map_err(|e| FactCheckError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        if row == 1 && line == "id\ttext\ttitle" {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(text), Some(title)) if !id.is_empty() => passages.push(Passage {
                id: id.to_string(),
                text: text.to_string(),
                title: title.to_string(),
            }),
            _ => {
                return Err(FactCheckError::MalformedRow {
                    row,
                    message: format!("expected id<TAB>text<TAB>title, got {line:?}"),
                })
            }
        }
    }
    Ok(passages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn passage(id: &str, text: &str) -> Passage {
        Passage {
            id: id.to_string(),
            text: text.to_string(),
            title: String::new(),
        }
    }

    #[test]
    fn one_word_passages() {
        let index = build_index(
            vec![passage("1", "cat"), passage("2", "dog"), passage("3", "eel")],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        assert_eq!(index.doc_count(), 3);
        assert_eq!(index.avg_doc_length(), 1.0);
    }

    #[test]
    fn duplicate_id_is_malformed() {
        let err = build_index(
            vec![passage("1", "cat"), passage("1", "dog")],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap_err();
        match err {
            FactCheckError::MalformedRow { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            build_index(Vec::new(), DEFAULT_K1, DEFAULT_B),
            Err(FactCheckError::EmptyCorpus)
        ));
    }

    #[test]
    fn hand_computed_score() {
        // corpus {d1: "cat cat", d2: "dog"}: df=1, N=2, tf=2, len=2, avg=1.5
        let index = build_index(
            vec![passage("d1", "cat cat"), passage("d2", "dog")],
            0.9,
            0.4,
        )
        .unwrap();
        let score = bm25_score(&["cat".to_string()], "d1", &index).unwrap();
        let idf = (1.0f64 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let expected = idf * 2.0 * (0.9 + 1.0) / (2.0 + 0.9 * (1.0 - 0.4 + 0.4 * 2.0 / 1.5));
        assert!((score - expected).abs() < 1e-12, "got {score}, want {expected}");
    }

    #[test]
    fn absent_term_contributes_zero() {
        let index = build_index(
            vec![passage("d1", "cat cat"), passage("d2", "dog")],
            0.9,
            0.4,
        )
        .unwrap();
        assert_eq!(bm25_score(&["zebra".to_string()], "d1", &index).unwrap(), 0.0);
        let with = bm25_score(&["cat".to_string(), "zebra".to_string()], "d1", &index).unwrap();
        let without = bm25_score(&["cat".to_string()], "d1", &index).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn unknown_passage_errors() {
        let index = build_index(vec![passage("d1", "cat")], 0.9, 0.4).unwrap();
        assert!(matches!(
            bm25_score(&["cat".to_string()], "missing", &index),
            Err(FactCheckError::UnknownPassage(_))
        ));
    }

    #[test]
    fn idf_grows_with_clone_count() {
        let mut previous = 0.0;
        for clones in [1usize, 2, 3] {
            let mut corpus = vec![passage("cat", "cat")];
            for i in 0..clones {
                corpus.push(passage(&format!("dog{i}"), "dog"));
            }
            let index = build_index(corpus, 0.9, 0.4).unwrap();
            let idf = index.idf("cat");
            assert!(idf > previous, "idf should grow as N grows");
            previous = idf;
        }
    }

    #[test]
    fn save_load_round_trip_preserves_scores() {
        let index = build_index(
            vec![
                passage("d1", "the cat sat on the mat"),
                passage("d2", "a dog chased the cat"),
                passage("d3", "completely unrelated text"),
            ],
            0.9,
            0.4,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        index.save(dir.path()).unwrap();
        let loaded = Bm25Index::load(dir.path()).unwrap();
        assert_eq!(index, loaded);
        let query: Vec<String> = ["the", "cat", "dog"].iter().map(|s| s.to_string()).collect();
        for id in ["d1", "d2", "d3"] {
            assert_eq!(
                bm25_score(&query, id, &index).unwrap(),
                bm25_score(&query, id, &loaded).unwrap()
            );
        }
    }

    #[test]
    fn corpus_tsv_reader_handles_header_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("corpus.tsv");
        std::fs::write(&plain, "id\ttext\ttitle\n1\tcat text\tCat\n2\tdog text\tDog\n").unwrap();
        let passages = read_corpus_tsv(&plain).unwrap();
        assert_eq!(passages.len(), 2);
        assert_eq!(passages[0].title, "Cat");

        let gz = dir.path().join("corpus.tsv.gz");
        let mut encoder = flate2::write::GzEncoder::new(
            std::fs::File::create(&gz).unwrap(),
            flate2::Compression::default(),
        );
        std::io::Write::write_all(&mut encoder, b"1\tcat text\tCat\n").unwrap();
        encoder.finish().unwrap();
        let passages = read_corpus_tsv(&gz).unwrap();
        assert_eq!(passages.len(), 1);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        std::fs::write(&path, "1\tcat\tCat\nno tabs here\n").unwrap();
        match read_corpus_tsv(&path) {
            Err(FactCheckError::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Brute-force oracle: recompute tf/df/lengths by rescanning raw
    /// passages, then apply the formula directly.
    fn oracle_score(query: &[String], passage_id: &str, corpus: &[Passage], k1: f64, b: f64) -> f64 {
        let docs: Vec<(String, Vec<String>)> = corpus
            .iter()
            .map(|p| (p.id.clone(), index_tokens(&format!("{} {}", p.title, p.text))))
            .collect();
        let n = docs.len() as f64;
        let avg = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
        let target = docs.iter().find(|(id, _)| id == passage_id).unwrap();
        let len = target.1.len() as f64;
        let mut score = 0.0;
        for term in query {
            let df = docs.iter().filter(|(_, t)| t.contains(term)).count() as f64;
            if df == 0.0 {
                continue;
            }
            let tf = target.1.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
        }
        score
    }

    #[test]
    fn randomized_corpora_match_oracle() {
        let vocabulary = [
            "cat", "dog", "fish", "bird", "tree", "rock", "wind", "fire", "rain", "snow", "sun",
            "moon", "star", "leaf", "root", "seed", "wolf", "bear", "fox", "owl",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..25 {
            let doc_count = rng.gen_range(2..=50);
            let corpus: Vec<Passage> = (0..doc_count)
                .map(|i| {
                    let len = rng.gen_range(1..=12);
                    let words: Vec<&str> = (0..len)
                        .map(|_| vocabulary[rng.gen_range(0..vocabulary.len())])
                        .collect();
                    passage(&format!("p{i}"), &words.join(" "))
                })
                .collect();
            let index = build_index(corpus.clone(), 0.9, 0.4).unwrap();
            let query: Vec<String> = (0..rng.gen_range(1..=5))
                .map(|_| vocabulary[rng.gen_range(0..vocabulary.len())].to_string())
                .collect();
            for target in corpus.iter().take(5) {
                let fast = bm25_score(&query, &target.id, &index).unwrap();
                let slow = oracle_score(&query, &target.id, &corpus, 0.9, 0.4);
                assert!(
                    (fast - slow).abs() < 1e-9,
                    "divergence: fast {fast}, oracle {slow}"
                );
            }
        }
    }
}
