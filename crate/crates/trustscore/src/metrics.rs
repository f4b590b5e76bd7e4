//! Score combination, baseline reference-based metrics, and correlation
//! statistics.
//!
//! [`combine_trust`] is the six-row scoring table that merges the two
//! evaluators. The baseline metrics (exact match, BLEU, ROUGE-L, METEOR)
//! and the statistics (Pearson's r, Cohen's kappa) exist for harness-level
//! comparison against human labels.

use crate::domain::FcRelation;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction is empty")]
    EmptyPrediction,
    #[error("reference list is empty")]
    EmptyReferences,
    #[error("length mismatch: x has {x_len} values, y has {y_len} (need equal lengths >= 2)")]
    LengthMismatch { x_len: usize, y_len: usize },
}

/// An overall trust score, guaranteed to sit on the six-point lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvScore(f64);

impl OvScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// The scoring table merging behavioral and factual consistency.
///
/// Support rows sit above all Neutral rows, which sit above all Contradict
/// rows; within a relation the consistent response outranks the
/// inconsistent one.
pub fn combine_trust(bc: u8, fc: FcRelation) -> OvScore {
    let consistent = bc != 0;
    let value = match (consistent, fc) {
        (true, FcRelation::Support) => 1.0,
        (false, FcRelation::Support) => 0.8,
        (true, FcRelation::Neutral) => 0.6,
        (false, FcRelation::Neutral) => 0.4,
        (true, FcRelation::Contradict) => 0.2,
        (false, FcRelation::Contradict) => 0.0,
    };
    OvScore(value)
}

/// Numeric convention for correlating fact-check verdicts with labels.
/// Never feeds [`combine_trust`].
pub fn fc_numeric(relation: FcRelation) -> f64 {
    match relation {
        FcRelation::Support => 1.0,
        FcRelation::Neutral => 0.5,
        FcRelation::Contradict => 0.0,
    }
}

/// Lowercased alphanumeric tokens; everything else is a separator.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Answer normalization for exact match: lowercase, drop articles and
/// punctuation, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    metric_tokens(text)
        .into_iter()
        .filter(|t| t != "a" && t != "an" && t != "the")
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized prediction equals any normalized gold answer.
pub fn exact_match(prediction: &str, golds: &[String]) -> u8 {
    let normalized = normalize_answer(prediction);
    golds
        .iter()
        .any(|g| normalize_answer(g) == normalized)
        .into()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

const BLEU_EPSILON: f64 = 1e-9;

/// Sentence BLEU with clipped modified n-gram precisions, a geometric mean
/// over n = 1..=max_n, brevity penalty when the prediction is shorter than
/// the (closest-length) reference, and epsilon smoothing of zero precisions.
pub fn bleu(prediction: &str, references: &[String], max_n: usize) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::EmptyReferences);
    }
    let pred = metric_tokens(prediction);
    if pred.is_empty() {
        return Err(MetricsError::EmptyPrediction);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r)).collect();

    // Orders longer than the prediction have no n-grams and do not
    // participate in the geometric mean.
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n {
        let pred_counts = ngram_counts(&pred, n);
        let total: usize = pred_counts.values().sum();
        if total == 0 {
            continue;
        }
        let mut clipped = 0usize;
        for (gram, &count) in &pred_counts {
            let max_ref = refs
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        let precision = if clipped == 0 {
            BLEU_EPSILON / total as f64
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
        orders += 1;
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let geo_mean = (log_sum / orders as f64).exp();

    // Effective reference length: closest to the prediction, ties to shorter.
    let pred_len = pred.len() as f64;
    let ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - pred.len() as i64).abs(), len))
        .unwrap() as f64;
    let brevity = if pred_len < ref_len {
        (1.0 - ref_len / pred_len).exp()
    } else {
        1.0
    };
    Ok(brevity * geo_mean)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    dp[a.len()][b.len()]
}

/// LCS-based F-measure over lowercased tokens; 0 when nothing aligns.
pub fn rouge_l(prediction: &str, reference: &str) -> f64 {
    let pred = metric_tokens(prediction);
    let reference = metric_tokens(reference);
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(&pred, &reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / pred.len() as f64;
    let recall = lcs / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Deterministic suffix-stripping stemmer used by METEOR's second
/// alignment stage. Rules apply in order, first match wins.
pub fn stem(word: &str) -> String {
    let w = word;
    if w.len() > 5 && w.ends_with("ing") {
        return w[..w.len() - 3].to_string();
    }
    if w.len() > 4 && w.ends_with("ed") {
        return w[..w.len() - 2].to_string();
    }
    if w.len() > 4 && w.ends_with("ly") {
        return w[..w.len() - 2].to_string();
    }
    if w.len() > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..w.len() - 3]);
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
        return w[..w.len() - 1].to_string();
    }
    w.to_string()
}

/// Greedy two-stage unigram alignment: exact matches first, then stem
/// matches over the leftovers. Each prediction position claims the earliest
/// still-unmatched reference position. Returns (pred_idx, ref_idx) pairs.
fn meteor_alignment(pred: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut pred_matched = vec![false; pred.len()];
    let mut ref_matched = vec![false; reference.len()];
    let mut pairs = Vec::new();

    for exact_stage in [true, false] {
        for (i, p) in pred.iter().enumerate() {
            if pred_matched[i] {
                continue;
            }
            let key = if exact_stage { p.clone() } else { stem(p) };
            for (j, r) in reference.iter().enumerate() {
                if ref_matched[j] {
                    continue;
                }
                let candidate = if exact_stage { r.clone() } else { stem(r) };
                if key == candidate {
                    pred_matched[i] = true;
                    ref_matched[j] = true;
                    pairs.push((i, j));
                    break;
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        match prev {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((i, j));
    }
    chunks
}

/// METEOR with exact+stem matching (no synonym module): recall-weighted
/// harmonic mean damped by a fragmentation penalty.
pub fn meteor(prediction: &str, reference: &str) -> f64 {
    let pred = metric_tokens(prediction);
    let reference = metric_tokens(reference);
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = meteor_alignment(&pred, &reference);
    let matches = pairs.len() as f64;
    if matches == 0.0 {
        return 0.0;
    }
    let precision = matches / pred.len() as f64;
    let recall = matches / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let chunks = count_chunks(&pairs) as f64;
    let penalty = 0.5 * (chunks / matches).powi(3);
    f_mean * (1.0 - penalty)
}

/// A correlation value, or the undefined case a constant input produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    /// Reported as the string "NAN" downstream.
    Undefined,
}

impl Correlation {
    pub fn as_report_string(&self) -> String {
        match self {
            Correlation::Defined(v) => format!("{v:.4}"),
            Correlation::Undefined => "NAN".to_string(),
        }
    }

    pub fn defined(&self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(*v),
            Correlation::Undefined => None,
        }
    }
}

/// Sample Pearson correlation; undefined when either vector is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::LengthMismatch {
            x_len: x.len(),
            y_len: y.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined(cov / (var_x * var_y).sqrt()))
}

/// Two-sided p-value for a Pearson correlation via the t approximation.
/// None when the correlation is undefined or n <= 2. Reported, never gating.
pub fn pearson_p_value(r: &Correlation, n: usize) -> Option<f64> {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let r = r.defined()?;
    if n <= 2 {
        return None;
    }
    if (1.0 - r * r) <= 0.0 {
        return Some(0.0);
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(2.0 * (1.0 - dist.cdf(t)))
}

/// One doubly-annotated item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPair {
    pub annotator_a: String,
    pub annotator_b: String,
}

impl LabelPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            annotator_a: a.into(),
            annotator_b: b.into(),
        }
    }
}

/// Cohen's kappa with marginal-product chance agreement. Perfect agreement
/// on a single label (p_e = 1) counts as kappa 1. NaN on empty input.
pub fn cohens_kappa(pairs: &[LabelPair]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let n = pairs.len() as f64;
    let observed = pairs
        .iter()
        .filter(|p| p.annotator_a == p.annotator_b)
        .count() as f64
        / n;

    let mut count_a: HashMap<&str, usize> = HashMap::new();
    let mut count_b: HashMap<&str, usize> = HashMap::new();
    for pair in pairs {
        *count_a.entry(pair.annotator_a.as_str()).or_insert(0) += 1;
        *count_b.entry(pair.annotator_b.as_str()).or_insert(0) += 1;
    }
    let mut expected = 0.0;
    for (label, &a_count) in &count_a {
        if let Some(&b_count) = count_b.get(label) {
            expected += (a_count as f64 / n) * (b_count as f64 / n);
        }
    }
    if (1.0 - expected).abs() < 1e-15 {
        return if (observed - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 };
    }
    (observed - expected) / (1.0 - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_trust_matches_all_six_rows() {
        assert_eq!(combine_trust(1, FcRelation::Support).value(), 1.0);
        assert_eq!(combine_trust(0, FcRelation::Support).value(), 0.8);
        assert_eq!(combine_trust(1, FcRelation::Neutral).value(), 0.6);
        assert_eq!(combine_trust(0, FcRelation::Neutral).value(), 0.4);
        assert_eq!(combine_trust(1, FcRelation::Contradict).value(), 0.2);
        assert_eq!(combine_trust(0, FcRelation::Contradict).value(), 0.0);
    }

    #[test]
    fn exact_match_normalizes_articles_and_case() {
        assert_eq!(exact_match("The Cat", &["cat".into()]), 1);
        assert_eq!(exact_match("same", &["same".into()]), 1);
        // Long-form answers do not match short golds.
        assert_eq!(
            exact_match(
                "Richard Parker is the tiger's name in life of pi.",
                &["Richard Parker".into()]
            ),
            0
        );
    }

    #[test]
    fn bleu_identity_is_one() {
        let score = bleu("the cat sat", &["the cat sat".into()], 4).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty_example() {
        // p1 = 1, BP = exp(1 - 3/2)
        let score = bleu("the cat", &["the cat sat".into()], 1).unwrap();
        let expected = (1.0f64 - 1.5).exp();
        assert!((score - expected).abs() < 1e-12, "got {score}");
    }

    #[test]
    fn bleu_zero_overlap_hits_smoothing_floor() {
        let score = bleu(
            "alpha beta gamma delta epsilon",
            &["one two three four five".into()],
            4,
        )
        .unwrap();
        assert!(score < 1e-2, "got {score}");
        assert!(score > 0.0);
    }

    #[test]
    fn bleu_empty_prediction_errors() {
        assert_eq!(
            bleu("", &["x".into()], 1),
            Err(MetricsError::EmptyPrediction)
        );
        assert_eq!(bleu("x", &[], 1), Err(MetricsError::EmptyReferences));
    }

    #[test]
    fn rouge_l_hand_example() {
        assert!((rouge_l("the cat sat", "the cat") - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l("aa bb", "cc dd"), 0.0);
        assert!((rouge_l("same words here", "same words here") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_hand_example() {
        // pred "the cat sat", ref "the cat sat on": m=3, chunks=1, P=1, R=3/4
        let p: f64 = 1.0;
        let r: f64 = 0.75;
        let f_mean = 10.0 * p * r / (r + 9.0 * p);
        let penalty = 0.5 * (1.0f64 / 3.0).powi(3);
        let expected = f_mean * (1.0 - penalty);
        assert!((meteor("the cat sat", "the cat sat on") - expected).abs() < 1e-12);
    }

    #[test]
    fn meteor_identity_uses_single_chunk_penalty() {
        let m = 3.0f64;
        let expected = 1.0 * (1.0 - 0.5 * (1.0 / m).powi(3));
        assert!((meteor("one two three", "one two three") - expected).abs() < 1e-12);
    }

    #[test]
    fn meteor_zero_matches_is_zero() {
        assert_eq!(meteor("aa bb cc", "dd ee ff"), 0.0);
    }

    #[test]
    fn pearson_identity_and_constant() {
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(pearson_r(&x, &x).unwrap(), Correlation::Defined(1.0));
        let constant = vec![5.0, 5.0, 5.0];
        assert_eq!(pearson_r(&constant, &x).unwrap(), Correlation::Undefined);
        assert_eq!(
            Correlation::Undefined.as_report_string(),
            "NAN".to_string()
        );
    }

    #[test]
    fn pearson_hand_example() {
        // x=[1,2,3], y=[1,2,4] -> 9/(2*sqrt(21))
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let expected = 9.0 / (2.0 * 21.0f64.sqrt());
        match r {
            Correlation::Defined(v) => assert!((v - expected).abs() < 1e-12),
            Correlation::Undefined => panic!("expected defined"),
        }
    }

    #[test]
    fn pearson_length_mismatch() {
        assert!(matches!(
            pearson_r(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson_r(&[1.0], &[1.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kappa_perfect_agreement_is_one() {
        let pairs = vec![
            LabelPair::new("1", "1"),
            LabelPair::new("0", "0"),
            LabelPair::new("1", "1"),
        ];
        assert_eq!(cohens_kappa(&pairs), 1.0);
    }

    #[test]
    fn kappa_hand_example_is_zero() {
        // a=[1,1,0,0], b=[1,0,0,1] -> p_o=0.5, p_e=0.5
        let pairs = vec![
            LabelPair::new("1", "1"),
            LabelPair::new("1", "0"),
            LabelPair::new("0", "0"),
            LabelPair::new("0", "1"),
        ];
        assert_eq!(cohens_kappa(&pairs), 0.0);
    }

    #[test]
    fn kappa_from_confusion_matrix() {
        // [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5, kappa = 0.4
        let mut pairs = Vec::new();
        for _ in 0..20 {
            pairs.push(LabelPair::new("1", "1"));
        }
        for _ in 0..5 {
            pairs.push(LabelPair::new("1", "0"));
        }
        for _ in 0..10 {
            pairs.push(LabelPair::new("0", "1"));
        }
        for _ in 0..15 {
            pairs.push(LabelPair::new("0", "0"));
        }
        assert!((cohens_kappa(&pairs) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn kappa_all_same_label_perfect() {
        let pairs = vec![LabelPair::new("x", "x"), LabelPair::new("x", "x")];
        assert_eq!(cohens_kappa(&pairs), 1.0);
    }

    #[test]
    fn fc_numeric_endpoints() {
        assert_eq!(fc_numeric(FcRelation::Support), 1.0);
        assert_eq!(fc_numeric(FcRelation::Neutral), 0.5);
        assert_eq!(fc_numeric(FcRelation::Contradict), 0.0);
    }

    #[test]
    fn integration_principles_hold() {
        for bc in [0u8, 1] {
            let support = combine_trust(bc, FcRelation::Support).value();
            let neutral = combine_trust(bc, FcRelation::Neutral).value();
            let contradict = combine_trust(bc, FcRelation::Contradict).value();
            assert!(support > neutral && neutral > contradict);
        }
        for fc in [FcRelation::Support, FcRelation::Neutral, FcRelation::Contradict] {
            assert!(combine_trust(1, fc).value() > combine_trust(0, fc).value());
        }
        // Factual consistency dominates behavioral consistency.
        assert!(combine_trust(0, FcRelation::Support).value() > combine_trust(1, FcRelation::Neutral).value());
        assert!(combine_trust(0, FcRelation::Neutral).value() > combine_trust(1, FcRelation::Contradict).value());
    }
}
