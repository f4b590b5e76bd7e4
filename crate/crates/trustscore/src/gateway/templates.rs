//! Prompt templates for the three prompt families.
//!
//! The default texts, including all five few-shot exemplars of the QA and
//! multi-choice families, are pinned verbatim; golden tests compare them
//! byte-for-byte against independent transcriptions.

use std::collections::BTreeMap;
use thiserror::Error;

/// The default closed-book question-answering prompt.
pub const CLOSED_BOOK_QA_PROMPT: &str = "\
INSTRUCTION: Please give answers to the following questions about knowledge.

Question: who has been ranked no. 1 in the latest football rankings announced by fifa?
Answer: Germany has been ranked no. 1 in the latest football rankings announced by fifa.

Question: who sings i just want to use your love tonight?
Answer: English rock band the Outfield sings i just want to use your love tonight.

Question: where was the movie the glass castle filmed?
Answer: The movie the glass castle was filmed in Welch, West Virginia.

Question: who was the first lady nominated member of the rajya sabha?
Answer: Mary Kom was the first lady nominated member of the rajya sabha.

Question: what is the tiger's name in life of pi?
Answer: Richard Parker is the tiger's name in life of pi.

Question: {Q}
Answer:";

/// The default behavior-consistency multiple-choice prompt.
pub const BEHAVIOR_CONSISTENCY_PROMPT: &str = "\
INSTRUCTION: Please give answers to the following multi-choice questions about knowledge.

Question: who has been ranked no. 1 in the latest football rankings announced by fifa?
A) Germany has been ranked no. 1 in the latest football rankings announced by fifa.
B) India has been ranked no. 1 in the latest football rankings announced by fifa.
C) Canada has been ranked no. 1 in the latest football rankings announced by fifa.
D) Austria has been ranked no. 1 in the latest football rankings announced by fifa.
E) None of above.
Answer: E

Question: who sings i just want to use your love tonight?
A) Latin rock band the Outfield sings i just want to use your love tonight.
B) English Power pop band the Outfield sings i just want to use your love tonight.
C) English rock band the Outfield sings i just want to use your love tonight.
D) English melodic sensibility band the Outfield sings i just want to use your love tonight.
E) None of above.
Answer: C

Question: where was the movie the glass castle filmed?
A) The movie the glass castle was filmed in London.
B) The movie the glass castle was filmed in Welch, West Virginia.
C) The movie the glass castle was filmed in Philadelphia.
D) The movie the glass castle was filmed in Budapest.
E) None of above.
Answer: B

Question: who was the first lady nominated member of the rajya sabha?
A) William Randolph Hearst was the first lady nominated member of the rajya sabha.
B) Jesse Speight was the first lady nominated member of the rajya sabha.
C) Thurlow Weed was the first lady nominated member of the rajya sabha.
D) Mary Kom was the first lady nominated member of the rajya sabha.
E) None of above.
Answer: D

Question: what is on a mcchicken sandwich from mcdonalds?
A) A breaded chicken patty is on a mcchicken sandwich from mcdonalds.
B) A Hot dog chicken patty is on a mcchicken sandwich from mcdonalds.
C) A breaded Bacon is on a mcchicken sandwich from mcdonalds.
D) A breaded Teriyaki chicken is on a mcchicken sandwich from mcdonalds.
E) None of above.
Answer: A

Question: {Q}
{options}
Answer:";

/// The default fact-checking prompt.
pub const FACT_CHECKING_PROMPT: &str = "\
INSTRUCTION: Assess whether the provided evidence aligns with or contradicts the given question-answer pair, and categorize the relationship as either 'support', 'contradict', or 'neutral'.
Evidence: {evidence}
Question: {Q}
Answer: {answer}
Relation:";

/// Which prompt family a template belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateName {
    ClosedBookQa,
    BehaviorConsistency,
    FactChecking,
}

/// A prompt template with named `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
}

impl PromptTemplate {
    pub fn closed_book_qa() -> Self {
        Self {
            name: TemplateName::ClosedBookQa,
            text: CLOSED_BOOK_QA_PROMPT.to_string(),
        }
    }

    pub fn behavior_consistency() -> Self {
        Self {
            name: TemplateName::BehaviorConsistency,
            text: BEHAVIOR_CONSISTENCY_PROMPT.to_string(),
        }
    }

    pub fn fact_checking() -> Self {
        Self {
            name: TemplateName::FactChecking,
            text: FACT_CHECKING_PROMPT.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
}

/// Pure single-pass substitution of `{name}` placeholders. No escaping, no
/// reflowing; identical inputs yield byte-identical output.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<&str, &str>,
) -> Result<String, RenderError> {
    let text = &template.text;
    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if after[..close].chars().all(|c| c.is_alphanumeric() || c == '_') => {
                let name = &after[..close];
                match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => return Err(RenderError::MissingBinding(name.to_string())),
                }
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
