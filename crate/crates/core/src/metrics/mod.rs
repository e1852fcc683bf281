//! BLEU-4 and ROUGE-1/2/L over a shared tokenizer, with corpus-level reports.

mod bleu;
mod rouge;
mod tokenize;

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::exec::{map_ordered, Execution};

pub use bleu::{bleu4, effective_reference_len, ngram_counts, score_counts, BleuScore, NgramCounts, Smoothing, MAX_ORDER};
pub use rouge::{f1, lcs_len, rouge_l, rouge_n, RougeScore, RougeVariant};
pub use tokenize::{is_cjk, tokenize, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "bleu4")]
    Bleu4,
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Bleu4, Metric::Rouge1, Metric::Rouge2, Metric::RougeL];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Bleu4 => "bleu4",
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown metric {s:?} (expected bleu4, rouge1, rouge2 or rougeL)"))
    }
}

/// One candidate with its reference texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<BleuScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge1: Option<RougeScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge2: Option<RougeScore>,
    #[serde(rename = "rougeL", skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<RougeScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub n_pairs: usize,
    /// Corpus BLEU from pooled counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<BleuScore>,
    /// ROUGE values are macro-averages over pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge1: Option<RougeScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge2: Option<RougeScore>,
    #[serde(rename = "rougeL", skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<RougeScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub aggregate: AggregateScores,
    pub per_pair: Vec<PairScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub metrics: Vec<Metric>,
    pub smoothing: Smoothing,
    pub exec: Execution,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { metrics: Metric::ALL.to_vec(), smoothing: Smoothing::AddOne, exec: Execution::default() }
    }
}

struct PairWork {
    scores: PairScores,
    counts: Option<NgramCounts>,
}

/// Best-F1 score over several references; ties keep the earliest reference.
fn best_rouge(refs: &[TokenSeq], score: impl Fn(&TokenSeq) -> RougeScore) -> RougeScore {
    refs.iter()
        .map(score)
        .reduce(|best, s| if s.f1 > best.f1 { s } else { best })
        .expect("references are non-empty")
}

fn score_pair(pair: &EvalPair, opts: &ReportOptions) -> PairWork {
    let cand = tokenize(&pair.candidate);
    let refs: Vec<TokenSeq> = pair.references.iter().map(|r| tokenize(r)).collect();
    let wants = |m| opts.metrics.contains(&m);
    let counts = wants(Metric::Bleu4).then(|| ngram_counts(&cand, &refs).expect("references checked"));
    let rouge = |n: usize| best_rouge(&refs, |r| rouge_n(&cand, r, n).expect("order is 1 or 2"));
    PairWork {
        scores: PairScores {
            id: pair.id.clone(),
            bleu4: counts.map(|c| score_counts(&c, opts.smoothing)),
            rouge1: wants(Metric::Rouge1).then(|| rouge(1)),
            rouge2: wants(Metric::Rouge2).then(|| rouge(2)),
            rouge_l: wants(Metric::RougeL).then(|| best_rouge(&refs, |r| rouge_l(&cand, r))),
        },
        counts,
    }
}

fn mean_rouge(scores: &[&RougeScore]) -> Option<RougeScore> {
    let first = scores.first()?;
    let n = scores.len() as f64;
    Some(RougeScore {
        variant: first.variant,
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    })
}

/// Score every pair and aggregate: BLEU by count pooling, ROUGE by macro-average.
///
/// Pairs may be scored in parallel; aggregation runs over the ordered
/// per-pair results so the output does not depend on the execution mode.
pub fn corpus_report(pairs: &[EvalPair], opts: &ReportOptions) -> Result<MetricReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    if pairs.iter().any(|p| p.references.is_empty()) {
        return Err(MetricError::NoReferences);
    }
    let work = map_ordered(pairs, opts.exec, |_, pair| score_pair(pair, opts));

    let bleu4 = opts.metrics.contains(&Metric::Bleu4).then(|| {
        let mut pooled = NgramCounts::default();
        for w in &work {
            pooled += w.counts.expect("counted when bleu4 requested");
        }
        score_counts(&pooled, opts.smoothing)
    });
    let collect = |pick: fn(&PairScores) -> Option<&RougeScore>| {
        mean_rouge(&work.iter().filter_map(|w| pick(&w.scores)).collect::<Vec<_>>())
    };
    let aggregate = AggregateScores {
        n_pairs: pairs.len(),
        bleu4,
        rouge1: collect(|s| s.rouge1.as_ref()),
        rouge2: collect(|s| s.rouge2.as_ref()),
        rouge_l: collect(|s| s.rouge_l.as_ref()),
    };
    Ok(MetricReport { aggregate, per_pair: work.into_iter().map(|w| w.scores).collect() })
}

/// JSON formatter writing every float with exactly six decimals.
#[derive(Debug, Clone, Copy, Default)]
pub struct SixDecimals;

impl serde_json::ser::Formatter for SixDecimals {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.6}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.6}")
    }
}

/// Serialize compactly with six-decimal floats.
pub fn to_json_six_decimals<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SixDecimals);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, c: &str, r: &[&str]) -> EvalPair {
        EvalPair { id: id.into(), candidate: c.into(), references: r.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn single_pair_aggregate_equals_pair() {
        let p = pair("1", "Let's try calculating the area together.", &["Now, let's try calculating the area of these triangles together."]);
        let report = corpus_report(&[p], &ReportOptions::default()).unwrap();
        let per = &report.per_pair[0];
        assert_eq!(report.aggregate.bleu4, per.bleu4);
        assert_eq!(report.aggregate.rouge1, per.rouge1);
        assert_eq!(report.aggregate.rouge2, per.rouge2);
        assert_eq!(report.aggregate.rouge_l, per.rouge_l);
    }

    #[test]
    fn duplicated_pair_is_homogeneous() {
        let p = pair("1", "we will learn the area of a triangle today", &["today we will learn the area of a triangle"]);
        let one = corpus_report(std::slice::from_ref(&p), &ReportOptions::default()).unwrap();
        let two = corpus_report(&[p.clone(), p], &ReportOptions::default()).unwrap();
        let (a, b) = (one.aggregate.bleu4.unwrap(), two.aggregate.bleu4.unwrap());
        assert!((a.score - b.score).abs() < 1e-12);
        assert_eq!(one.aggregate.rouge_l, two.aggregate.rouge_l);
    }

    #[test]
    fn errors() {
        assert_eq!(corpus_report(&[], &ReportOptions::default()), Err(MetricError::EmptyBatch));
        assert_eq!(corpus_report(&[pair("x", "a", &[])], &ReportOptions::default()), Err(MetricError::NoReferences));
    }

    #[test]
    fn metric_selection() {
        let opts = ReportOptions { metrics: vec![Metric::RougeL], ..Default::default() };
        let r = corpus_report(&[pair("x", "a b", &["a b"])], &opts).unwrap();
        assert!(r.aggregate.bleu4.is_none() && r.aggregate.rouge1.is_none());
        assert_eq!(r.aggregate.rouge_l.unwrap().f1, 1.0);
        assert_eq!("rougel".parse::<Metric>().unwrap(), Metric::RougeL);
        assert!("meteor".parse::<Metric>().is_err());
    }

    #[test]
    fn multi_reference_rouge_takes_best() {
        let r = corpus_report(&[pair("x", "a b c", &["x y z", "a b c"])], &ReportOptions::default()).unwrap();
        assert_eq!(r.per_pair[0].rouge1.unwrap().f1, 1.0);
    }

    #[test]
    fn execution_modes_agree() {
        let pairs: Vec<_> = (0..50)
            .map(|i| pair(&i.to_string(), &format!("the area of triangle {i} is half base times height"), &["the area of a triangle is half the base times the height"]))
            .collect();
        let seq = corpus_report(&pairs, &ReportOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
        let par = corpus_report(&pairs, &ReportOptions { exec: Execution::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn six_decimal_json() {
        let v = serde_json::json!({"a": 0.75, "b": 1.0, "c": [2.0f64 / 3.0], "n": 3});
        assert_eq!(to_json_six_decimals(&v), r#"{"a":0.750000,"b":1.000000,"c":[0.666667],"n":3}"#);
    }
}
