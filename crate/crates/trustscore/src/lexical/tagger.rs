//! Deterministic tokenizer and part-of-speech tagger.
//!
//! Tokenization tiles the input left to right: maximal word runs (letters,
//! digits, internal apostrophes/hyphens, and digit-internal `.`/`,`) and
//! single punctuation characters, with whitespace as separator. Tagging is
//! lexicon-first with suffix fallbacks over a frozen model file; golden
//! tests pin its outputs.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

const LEXICON_TSV: &str = include_str!("../../assets/tagger_lexicon.tsv");
const STOPWORDS_TXT: &str = include_str!("../../assets/stopwords.txt");

/// One token with its tag and byte span into the source string.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    pub char_span: (usize, usize),
    pub is_stopword: bool,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        matches!(self.pos.as_str(), "." | "," | ":" | "-LRB-" | "-RRB-" | "SYM")
    }
}

/// Frozen-lexicon tagger.
pub struct Tagger {
    lexicon: HashMap<String, String>,
    stopwords: HashSet<String>,
}

impl Default for Tagger {
    fn default() -> Self {
        Self::new()
    }
}

fn shared() -> &'static Tagger {
    static TAGGER: OnceLock<Tagger> = OnceLock::new();
    TAGGER.get_or_init(Tagger::new)
}

impl Tagger {
    pub fn new() -> Self {
        let mut lexicon = HashMap::new();
        for line in LEXICON_TSV.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some((word, tag)) = line.split_once('\t') {
                lexicon
                    .entry(word.to_lowercase())
                    .or_insert_with(|| tag.to_string());
            }
        }
        let stopwords = STOPWORDS_TXT
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Self { lexicon, stopwords }
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    fn suffix_tag(word: &str) -> Option<&'static str> {
        let w = word.to_lowercase();
        let rules: [(&str, &str, usize); 13] = [
            ("ing", "VBG", 5),
            ("ed", "VBD", 4),
            ("ly", "RB", 4),
            ("tion", "NN", 5),
            ("sion", "NN", 5),
            ("ment", "NN", 5),
            ("ness", "NN", 5),
            ("ity", "NN", 5),
            ("ship", "NN", 5),
            ("ous", "JJ", 4),
            ("ful", "JJ", 4),
            ("ive", "JJ", 4),
            ("able", "JJ", 5),
        ];
        for (suffix, tag, min_len) in rules {
            if w.len() >= min_len && w.ends_with(suffix) {
                return Some(tag);
            }
        }
        if w.len() >= 4 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
            return Some("NNS");
        }
        None
    }

    fn tag_word(&self, word: &str, sentence_initial: bool) -> String {
        if is_numeric_token(word) {
            return "CD".to_string();
        }
        let capitalized = word.chars().next().is_some_and(|c| c.is_uppercase());
        // Mid-sentence capitalization is a strong proper-noun signal.
        if capitalized && !sentence_initial {
            return "NNP".to_string();
        }
        if let Some(tag) = self.lexicon.get(&word.to_lowercase()) {
            return tag.clone();
        }
        if let Some(tag) = Self::suffix_tag(word) {
            return tag.to_string();
        }
        if capitalized {
            return "NNP".to_string();
        }
        "NN".to_string()
    }

    /// Tokenizes and tags. Total and deterministic; numbers come out CD;
    /// joining surfaces with the original whitespace reconstructs the input.
    pub fn tokenize_and_tag(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut sentence_initial = true;
        for (start, end) in token_spans(text) {
            let surface = &text[start..end];
            let pos = if surface.chars().all(|c| !c.is_alphanumeric()) {
                punct_tag(surface).to_string()
            } else {
                self.tag_word(surface, sentence_initial)
            };
            let is_stopword = self.is_stopword(surface);
            if matches!(pos.as_str(), "." | ":") {
                sentence_initial = true;
            } else if !matches!(pos.as_str(), "," | "-LRB-" | "-RRB-" | "SYM") {
                sentence_initial = false;
            }
            tokens.push(Token {
                surface: surface.to_string(),
                pos,
                char_span: (start, end),
                is_stopword,
            });
        }
        tokens
    }
}

/// Module-level convenience over a shared tagger instance.
pub fn tokenize_and_tag(text: &str) -> Vec<Token> {
    shared().tokenize_and_tag(text)
}

pub fn is_stopword(word: &str) -> bool {
    shared().is_stopword(word)
}

fn is_numeric_token(word: &str) -> bool {
    let mut saw_digit = false;
    for c in word.chars() {
        if c.is_ascii_digit() {
            saw_digit = true;
        } else if !matches!(c, '.' | ',' | '-' | '/') {
            return false;
        }
    }
    saw_digit
}

fn punct_tag(surface: &str) -> &'static str {
    match surface {
        "." | "!" | "?" => ".",
        "," => ",",
        ";" | ":" => ":",
        "(" | "[" | "{" => "-LRB-",
        ")" | "]" | "}" => "-RRB-",
        _ => "SYM",
    }
}

/// Byte spans of tokens. A word char is alphanumeric, an apostrophe, a
/// hyphen, or a `.`/`,` squeezed between digits.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let is_word_char = |idx: usize| {
            let c = chars[idx].1;
            if c.is_alphanumeric() || c == '\'' || c == '\u{2019}' || c == '-' {
                return true;
            }
            if c == '.' || c == ',' {
                let prev_digit = idx > 0 && chars[idx - 1].1.is_ascii_digit();
                let next_digit = idx + 1 < chars.len() && chars[idx + 1].1.is_ascii_digit();
                return prev_digit && next_digit;
            }
            false
        };
        if is_word_char(i) {
            let mut j = i;
            while j + 1 < chars.len() && !chars[j + 1].1.is_whitespace() && is_word_char(j + 1) {
                j += 1;
            }
            let end = if j + 1 < chars.len() {
                chars[j + 1].0
            } else {
                text.len()
            };
            spans.push((byte, end));
            i = j + 1;
        } else {
            let end = if i + 1 < chars.len() {
                chars[i + 1].0
            } else {
                text.len()
            };
            spans.push((byte, end));
            i += 1;
        }
    }
    spans
}

/// Coarse tag family used for POS-matched sampling and term partitioning.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TagFamily {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Number,
    Other(String),
}

pub fn tag_family(tag: &str) -> TagFamily {
    if tag == "CD" {
        TagFamily::Number
    } else if tag.starts_with("NN") {
        TagFamily::Noun
    } else if tag.starts_with("VB") {
        TagFamily::Verb
    } else if tag.starts_with("JJ") {
        TagFamily::Adjective
    } else if tag.starts_with("RB") {
        TagFamily::Adverb
    } else {
        TagFamily::Other(tag.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_is_cd() {
        let tokens = tokenize_and_tag("All night long came out in 1983.");
        let year = tokens.iter().find(|t| t.surface == "1983").unwrap();
        assert_eq!(year.pos, "CD");
        let dot = tokens.last().unwrap();
        assert_eq!(dot.pos, ".");
    }

    #[test]
    fn empty_input_yields_nothing() {
        assert!(tokenize_and_tag("").is_empty());
    }

    #[test]
    fn golden_tags_for_solomon_sentence() {
        let tokens = tokenize_and_tag("King Solomon built the first temple for god in jerusalem.");
        let tags: Vec<(&str, &str)> = tokens
            .iter()
            .map(|t| (t.surface.as_str(), t.pos.as_str()))
            .collect();
        assert_eq!(
            tags,
            vec![
                ("King", "NNP"),
                ("Solomon", "NNP"),
                ("built", "VBD"),
                ("the", "DT"),
                ("first", "JJ"),
                ("temple", "NN"),
                ("for", "IN"),
                ("god", "NN"),
                ("in", "IN"),
                ("jerusalem", "NN"),
                (".", "."),
            ]
        );
    }

    #[test]
    fn spans_reconstruct_the_input() {
        let text = "The movie, \"the glass castle\", was filmed in Welch, West Virginia in 2017.";
        let tokens = tokenize_and_tag(text);
        let mut rebuilt = String::new();
        let mut cursor = 0;
        for token in &tokens {
            rebuilt.push_str(&text[cursor..token.char_span.0]);
            assert_eq!(&text[token.char_span.0..token.char_span.1], token.surface);
            rebuilt.push_str(&token.surface);
            cursor = token.char_span.1;
        }
        rebuilt.push_str(&text[cursor..]);
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn numbers_with_separators_stay_whole() {
        let tokens = tokenize_and_tag("about 1,000.5 things");
        let num = tokens.iter().find(|t| t.surface == "1,000.5").unwrap();
        assert_eq!(num.pos, "CD");
    }

    #[test]
    fn apostrophes_stay_inside_words() {
        let tokens = tokenize_and_tag("what is the tiger's name in life of pi?");
        assert!(tokens.iter().any(|t| t.surface == "tiger's"));
        assert_eq!(tokens.last().unwrap().surface, "?");
    }

    #[test]
    fn stopwords_are_flagged() {
        let tokens = tokenize_and_tag("The cat was on a mat");
        let the = &tokens[0];
        assert!(the.is_stopword);
        let cat = tokens.iter().find(|t| t.surface == "cat").unwrap();
        assert!(!cat.is_stopword);
    }

    #[test]
    fn mid_sentence_capitalization_is_proper_noun() {
        let tokens = tokenize_and_tag("he visited Florida yesterday");
        let florida = tokens.iter().find(|t| t.surface == "Florida").unwrap();
        assert_eq!(florida.pos, "NNP");
    }

    #[test]
    fn suffix_rules_fire_for_unknown_words() {
        let tokens = tokenize_and_tag("the zorging zorgly zorged zorgs");
        let tags: Vec<&str> = tokens.iter().map(|t| t.pos.as_str()).collect();
        assert_eq!(tags, vec!["DT", "VBG", "RB", "VBD", "NNS"]);
    }

    #[test]
    fn determinism() {
        let text = "Mary Kom was the first lady nominated member of the rajya sabha.";
        assert_eq!(tokenize_and_tag(text), tokenize_and_tag(text));
    }
}
