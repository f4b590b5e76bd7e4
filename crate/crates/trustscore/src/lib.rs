//! Trustworthiness scoring for closed-book LLM answers.
//!
//! The pipeline scores a model's answer three ways: a behavioral-consistency
//! probe (does the model keep re-selecting its own answer among generated
//! distractors?), a fact-checking pass (does retrieved evidence support the
//! answer?), and a combined score on a six-point lattice. Baseline lexical
//! metrics and correlation statistics round out harness-level evaluation.

pub mod distractor;
pub mod domain;
pub mod lexical;
pub mod fact_check;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod trust_bc;
