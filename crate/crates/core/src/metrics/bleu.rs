use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TokenSeq;
use crate::error::MetricError;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Add one to numerator and denominator for orders >= 2 with no matches.
    #[default]
    AddOne,
}

impl std::str::FromStr for Smoothing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(Smoothing::None),
            "add_one" => Ok(Smoothing::AddOne),
            other => Err(format!("unknown smoothing {other:?} (expected none or add_one)")),
        }
    }
}

/// Clipped match and total n-gram counts, poolable across sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NgramCounts {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl std::ops::AddAssign for NgramCounts {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
        self.candidate_len += rhs.candidate_len;
        self.reference_len += rhs.reference_len;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    /// Modified precisions p1..p4 after smoothing.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub candidate_len: u64,
    pub reference_len: u64,
    /// The candidate had no tokens; the score is 0 and the brevity penalty is reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty_candidate: bool,
}

fn ngram_histogram(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Closest reference length to `candidate_len`; ties go to the shorter one.
pub fn effective_reference_len(candidate_len: usize, references: &[TokenSeq]) -> usize {
    references
        .iter()
        .map(TokenSeq::len)
        .min_by_key(|&r| (r.abs_diff(candidate_len), r))
        .unwrap_or(0)
}

pub fn ngram_counts(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<NgramCounts, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let cand = candidate.tokens();
    let mut counts = NgramCounts {
        candidate_len: cand.len() as u64,
        reference_len: effective_reference_len(cand.len(), references) as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let cand_hist = ngram_histogram(cand, n);
        let mut max_ref: HashMap<&[String], u64> = HashMap::new();
        for reference in references {
            for (gram, c) in ngram_histogram(reference.tokens(), n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        counts.matches[n - 1] = cand_hist
            .iter()
            .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        counts.totals[n - 1] = cand.len().saturating_sub(n - 1) as u64;
    }
    Ok(counts)
}

/// Turn (possibly pooled) counts into a score.
pub fn score_counts(counts: &NgramCounts, smoothing: Smoothing) -> BleuScore {
    if counts.candidate_len == 0 {
        return BleuScore {
            score: 0.0,
            precisions: [0.0; MAX_ORDER],
            brevity_penalty: 0.0,
            candidate_len: 0,
            reference_len: counts.reference_len,
            empty_candidate: true,
        };
    }
    let mut precisions = [0.0; MAX_ORDER];
    for (n, p) in precisions.iter_mut().enumerate() {
        let (m, t) = (counts.matches[n], counts.totals[n]);
        *p = if m == 0 && n >= 1 && smoothing == Smoothing::AddOne {
            1.0 / (t + 1) as f64
        } else if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        };
    }
    let (c, r) = (counts.candidate_len as f64, counts.reference_len as f64);
    let brevity_penalty = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        brevity_penalty * mean_log.exp()
    };
    BleuScore {
        score,
        precisions,
        brevity_penalty,
        candidate_len: counts.candidate_len,
        reference_len: counts.reference_len,
        empty_candidate: false,
    }
}

/// Sentence-level BLEU-4 against one or more references.
pub fn bleu4(candidate: &TokenSeq, references: &[TokenSeq], smoothing: Smoothing) -> Result<BleuScore, MetricError> {
    Ok(score_counts(&ngram_counts(candidate, references)?, smoothing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_tokens(s.split(' '))
    }

    #[test]
    fn identity_scores_one() {
        let s = seq("we look at the area of a triangle");
        let b = bleu4(&s, std::slice::from_ref(&s), Smoothing::None).unwrap();
        assert_eq!(b.score, 1.0);
        assert_eq!(b.precisions, [1.0; 4]);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_unigrams() {
        let b = bleu4(&seq("the the the the"), &[seq("the cat")], Smoothing::None).unwrap();
        assert_eq!(b.precisions[0], 0.25);
        assert_eq!(b.score, 0.0);
    }

    #[test]
    fn zero_four_gram_unsmoothed_is_zero() {
        let b = bleu4(&seq("a b c d e"), &[seq("a b c x d e")], Smoothing::None).unwrap();
        assert!(b.precisions[0] > 0.0 && b.precisions[3] == 0.0);
        assert_eq!(b.score, 0.0);
        let smoothed = bleu4(&seq("a b c d e"), &[seq("a b c x d e")], Smoothing::AddOne).unwrap();
        assert!(smoothed.score > 0.0);
        assert_eq!(smoothed.precisions[3], 1.0 / 3.0);
    }

    #[test]
    fn brevity_penalty_and_reference_choice() {
        // candidate 3 tokens, references of length 2 and 4: both at distance 1, shorter wins
        assert_eq!(effective_reference_len(3, &[seq("a b c d"), seq("a b")]), 2);
        let b = bleu4(&seq("a b"), &[seq("a b c d")], Smoothing::AddOne).unwrap();
        assert!((b.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors_and_empty() {
        assert_eq!(bleu4(&seq("a"), &[], Smoothing::None), Err(MetricError::NoReferences));
        let e = bleu4(&TokenSeq::default(), &[seq("a")], Smoothing::AddOne).unwrap();
        assert!(e.empty_candidate);
        assert_eq!(e.score, 0.0);
    }

    #[test]
    fn reference_order_invariant() {
        let refs = [seq("the cat sat on the mat"), seq("a cat was on the mat"), seq("there is a cat")];
        let cand = seq("the cat is on the mat");
        let a = bleu4(&cand, &refs, Smoothing::AddOne).unwrap();
        let mut rev = refs.to_vec();
        rev.reverse();
        assert_eq!(a, bleu4(&cand, &rev, Smoothing::AddOne).unwrap());
    }
}
