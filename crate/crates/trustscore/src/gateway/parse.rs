//! Completion parsing for multiple-choice and entailment replies.

use crate::domain::FcRelation;
use serde::{Deserialize, Serialize};

/// A resolved option letter. `Unparseable` compares unequal to every
/// concrete letter, so it always counts as "did not select the response".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptionLetter {
    A,
    B,
    C,
    D,
    E,
    Unparseable,
}

impl OptionLetter {
    pub fn from_index(index: usize) -> Option<Self> {
        [Self::A, Self::B, Self::C, Self::D, Self::E]
            .get(index)
            .copied()
    }

    pub fn index(self) -> Option<usize> {
        match self {
            Self::A => Some(0),
            Self::B => Some(1),
            Self::C => Some(2),
            Self::D => Some(3),
            Self::E => Some(4),
            Self::Unparseable => None,
        }
    }

    pub fn as_char(self) -> Option<char> {
        self.index().map(|i| (b'A' + i as u8) as char)
    }

    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Self::A),
            'B' => Some(Self::B),
            'C' => Some(Self::C),
            'D' => Some(Self::D),
            'E' => Some(Self::E),
            _ => None,
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Positions where a standalone A-E letter sits in an accepted context:
/// string start, right after an "Answer:" marker, or followed by ")".
fn letter_candidates(raw: &str, case_sensitive: bool) -> Option<OptionLetter> {
    let chars: Vec<char> = raw.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let is_letter = if case_sensitive {
            c.is_ascii_uppercase() && ('A'..='E').contains(&c)
        } else {
            ('A'..='E').contains(&c.to_ascii_uppercase()) && c.is_ascii_alphabetic()
        };
        if !is_letter {
            continue;
        }
        let standalone = (i == 0 || !is_word_char(chars[i - 1]))
            && (i + 1 == chars.len() || !is_word_char(chars[i + 1]));
        if !standalone {
            continue;
        }
        let at_start = i == 0;
        let after_marker = {
            let before: String = chars[..i].iter().collect();
            before.trim_end().to_lowercase().ends_with("answer:")
        };
        let before_paren = chars.get(i + 1) == Some(&')');
        if at_start || after_marker || before_paren {
            return OptionLetter::from_char(c);
        }
    }
    None
}

/// Resolves a raw multi-choice completion to an option letter.
///
/// Rules, in order: (1) the first standalone A-E at string start, after an
/// "Answer:" marker, or followed by ")" wins, uppercase first with a
/// case-insensitive retry; (2) a reply quoting exactly one option's full
/// text verbatim resolves to that option; (3) otherwise `Unparseable`.
pub fn parse_choice(raw: &str, options: Option<&[String; 5]>) -> OptionLetter {
    let trimmed = raw.trim();
    if let Some(letter) = letter_candidates(trimmed, true) {
        return letter;
    }
    if let Some(letter) = letter_candidates(trimmed, false) {
        return letter;
    }
    if let Some(options) = options {
        let containing: Vec<usize> = options
            .iter()
            .enumerate()
            .filter(|(_, text)| !text.is_empty() && trimmed.contains(text.as_str()))
            .map(|(i, _)| i)
            .collect();
        if containing.len() == 1 {
            return OptionLetter::from_index(containing[0]).unwrap_or(OptionLetter::Unparseable);
        }
    }
    OptionLetter::Unparseable
}

/// Case-insensitive keyword vote over "support" / "contradict" / "neutral";
/// anything other than exactly one keyword family falls back to Neutral.
pub fn parse_relation(raw: &str) -> FcRelation {
    let lower = raw.to_lowercase();
    let families = [
        ("support", FcRelation::Support),
        ("contradict", FcRelation::Contradict),
        ("neutral", FcRelation::Neutral),
    ];
    let mut found = None;
    let mut count = 0;
    for (keyword, relation) in families {
        if lower.contains(keyword) {
            count += 1;
            found = Some(relation);
        }
    }
    match (count, found) {
        (1, Some(relation)) => relation,
        _ => FcRelation::Neutral,
    }
}
