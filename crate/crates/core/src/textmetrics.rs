//! Token normalization and ROUGE-L scoring.
//!
//! Used by fluency evaluation, divergence classification, and the reference
//! re-planner. Tokenization is whitespace-based on purpose: no stemming, no
//! linguistic resources, fully deterministic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextMetricError {
    #[error("reference token sequence is empty")]
    EmptyReference,
}

/// A normalized token sequence. Only produced by [`normalize_text`];
/// tokens are lowercase and non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercase, split on whitespace, strip leading/trailing punctuation per
/// token, drop tokens that end up empty. Interior punctuation survives, so
/// "1/4" stays one token.
pub fn normalize_text(s: &str) -> TokenSeq {
    let tokens = s
        .split_whitespace()
        .map(|raw| {
            raw.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect();
    TokenSeq(tokens)
}

/// Sentence-level normalization used wherever two pieces of guidance text are
/// compared for equality: lowercase, collapse whitespace runs, strip terminal
/// punctuation.
pub fn normalize_match(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_lowercase()
}

/// Length of the longest common subsequence, O(|a|*|b|) dynamic program.
pub fn lcs_length(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (a, b) = (a.tokens(), b.tokens());
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // Single-row DP keeps memory at O(|b|).
    let mut row = vec![0usize; b.len() + 1];
    for tok_a in a {
        let mut diag = 0;
        for (j, tok_b) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if tok_a == tok_b {
                diag + 1
            } else {
                above.max(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-score (beta = 1): P = LCS/|candidate|, R = LCS/|reference|,
/// F = 2PR/(P+R). An empty candidate scores 0; an empty reference is an error.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> Result<f64, TextMetricError> {
    if reference.is_empty() {
        return Err(TextMetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(candidate, reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Convenience wrapper: normalize both sides, then score.
pub fn rouge_l_text(candidate: &str, reference: &str) -> Result<f64, TextMetricError> {
    rouge_l(&normalize_text(candidate), &normalize_text(reference))
}
