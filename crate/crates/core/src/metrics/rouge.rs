use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TokenSeq;
use crate::error::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RougeVariant {
    Rouge1,
    Rouge2,
    RougeL,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub variant: RougeVariant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Build from a match count and the two sides' totals; zero totals give zeros.
    pub fn from_overlap(variant: RougeVariant, overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(overlap, candidate_total);
        let recall = ratio(overlap, reference_total);
        RougeScore { variant, precision, recall, f1: f1(precision, recall) }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn histogram(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N for n = 1 or 2: multiset n-gram overlap.
pub fn rouge_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize) -> Result<RougeScore, MetricError> {
    let variant = match n {
        1 => RougeVariant::Rouge1,
        2 => RougeVariant::Rouge2,
        other => return Err(MetricError::InvalidOrder(other)),
    };
    let cand = histogram(candidate.tokens(), n);
    let refs = histogram(reference.tokens(), n);
    let overlap = cand.iter().map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0))).sum();
    Ok(RougeScore::from_overlap(
        variant,
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    ))
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L with beta = 1.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> RougeScore {
    let l = lcs_len(candidate.tokens(), reference.tokens());
    RougeScore::from_overlap(RougeVariant::RougeL, l, candidate.len(), reference.len())
}
