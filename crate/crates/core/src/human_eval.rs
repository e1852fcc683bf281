//! The three-dimension teacher questionnaire: ratings, storage and summaries.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::RatingError;

pub const SCALE_MIN: i64 = 1;
pub const SCALE_MAX: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Alignment,
    ContentQuality,
    EngagementClarity,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Alignment, Dimension::ContentQuality, Dimension::EngagementClarity];

    pub fn key(self) -> &'static str {
        match self {
            Dimension::Alignment => "alignment",
            Dimension::ContentQuality => "content_quality",
            Dimension::EngagementClarity => "engagement_clarity",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Dimension::Alignment => "Alignment with Instructional Principles",
            Dimension::ContentQuality => "Content Quality",
            Dimension::EngagementClarity => "Engagement and Clarity",
        }
    }

    /// Question shown to raters.
    pub fn prompt(self) -> &'static str {
        match self {
            Dimension::Alignment => "How well does the dialogue fit its instructional event?",
            Dimension::ContentQuality => {
                "Is the dialogue pedagogically sound, mathematically accurate and consistent with the curriculum standard?"
            }
            Dimension::EngagementClarity => {
                "Would the dialogue capture students' interest and communicate the concept clearly?"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionnaireItem {
    pub dimension: Dimension,
    pub title: &'static str,
    pub prompt: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Questionnaire {
    pub items: [QuestionnaireItem; 3],
    pub scale_min: i64,
    pub scale_max: i64,
}

impl Questionnaire {
    pub fn standard() -> Self {
        Questionnaire {
            items: Dimension::ALL.map(|dimension| QuestionnaireItem {
                dimension,
                title: dimension.title(),
                prompt: dimension.prompt(),
            }),
            scale_min: SCALE_MIN,
            scale_max: SCALE_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub template_id: String,
    pub rater_id: String,
    pub scores: BTreeMap<Dimension, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub submitted_at: DateTime<Utc>,
}

impl RatingRecord {
    pub fn key(&self) -> (String, String) {
        (self.template_id.clone(), self.rater_id.clone())
    }

    pub fn score(&self, dimension: Dimension) -> i64 {
        self.scores[&dimension]
    }
}

pub fn validate_rating(record: &RatingRecord) -> Result<(), RatingError> {
    if record.rater_id.trim().is_empty() {
        return Err(RatingError::EmptyRater);
    }
    let missing: Vec<&str> = Dimension::ALL
        .iter()
        .filter(|d| !record.scores.contains_key(d))
        .map(|d| d.key())
        .collect();
    if !missing.is_empty() {
        return Err(RatingError::IncompleteScores(missing.join(", ")));
    }
    if let Some((d, &v)) = record.scores.iter().find(|(_, v)| !(SCALE_MIN..=SCALE_MAX).contains(*v)) {
        return Err(RatingError::OutOfRangeScore { dimension: d.key().into(), value: v });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAck {
    pub replaced: bool,
}

/// Ratings keyed by (template_id, rater_id); a resubmission replaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingStore {
    records: BTreeMap<(String, String), RatingRecord>,
}

impl RatingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        record: RatingRecord,
        template_exists: impl Fn(&str) -> bool,
    ) -> Result<RatingAck, RatingError> {
        if !template_exists(&record.template_id) {
            return Err(RatingError::UnknownTemplate(record.template_id));
        }
        validate_rating(&record)?;
        Ok(self.upsert(record))
    }

    /// Insert without validation; used when replaying persisted ratings.
    pub fn upsert(&mut self, record: RatingRecord) -> RatingAck {
        let replaced = self.records.insert(record.key(), record).is_some();
        RatingAck { replaced }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RatingRecord> {
        self.records.values()
    }

    pub fn summarize(&self, scope: &RatingScope) -> Result<RatingSummary, RatingError> {
        summarize(self.iter().filter(|r| scope.contains(&r.template_id)))
    }
}

/// Which templates a summary covers. A "system" is named by the set of templates it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatingScope {
    All,
    Template(String),
    System { tag: String, template_ids: BTreeSet<String> },
}

impl RatingScope {
    pub fn contains(&self, template_id: &str) -> bool {
        match self {
            RatingScope::All => true,
            RatingScope::Template(id) => id == template_id,
            RatingScope::System { template_ids, .. } => template_ids.contains(template_id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub per_dimension: BTreeMap<Dimension, DimensionStats>,
    pub n_ratings: usize,
    pub n_raters: usize,
    /// Mean pairwise linear-weighted kappa; absent with fewer than two raters
    /// or when no pair of raters scored a common item.
    pub weighted_kappa: Option<f64>,
    pub sd_kind: String,
}

/// Summarize ratings. Integer accumulation keeps the result independent of input order.
pub fn summarize<'a>(ratings: impl IntoIterator<Item = &'a RatingRecord>) -> Result<RatingSummary, RatingError> {
    let ratings: Vec<&RatingRecord> = ratings.into_iter().collect();
    if ratings.is_empty() {
        return Err(RatingError::NoRatings);
    }
    let n = ratings.len() as i64;
    let per_dimension = Dimension::ALL
        .into_iter()
        .map(|d| {
            let sum: i64 = ratings.iter().map(|r| r.score(d)).sum();
            let sum_sq: i64 = ratings.iter().map(|r| r.score(d).pow(2)).sum();
            let mean = sum as f64 / n as f64;
            let var = (n * sum_sq - sum * sum) as f64 / (n * n) as f64;
            (d, DimensionStats { mean, sd: var.max(0.0).sqrt() })
        })
        .collect();

    // rater -> (template, dimension) -> score
    let mut by_rater: BTreeMap<&str, BTreeMap<(&str, Dimension), i64>> = BTreeMap::new();
    for r in &ratings {
        let items = by_rater.entry(r.rater_id.as_str()).or_default();
        for d in Dimension::ALL {
            items.insert((r.template_id.as_str(), d), r.score(d));
        }
    }
    let raters: Vec<_> = by_rater.values().collect();
    let mut kappas = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            let paired: Vec<(i64, i64)> = raters[i]
                .iter()
                .filter_map(|(k, &a)| raters[j].get(k).map(|&b| (a, b)))
                .collect();
            if !paired.is_empty() {
                kappas.push(linear_weighted_kappa(&paired));
            }
        }
    }
    let weighted_kappa = (!kappas.is_empty()).then(|| kappas.iter().sum::<f64>() / kappas.len() as f64);

    Ok(RatingSummary {
        per_dimension,
        n_ratings: ratings.len(),
        n_raters: raters.len(),
        weighted_kappa,
        sd_kind: "population".into(),
    })
}

/// Linear-weighted Cohen's kappa on the 1..=5 scale.
///
/// When chance disagreement is zero (both raters constant on the same
/// value) the result is 1.0.
pub fn linear_weighted_kappa(pairs: &[(i64, i64)]) -> f64 {
    const K: usize = (SCALE_MAX - SCALE_MIN + 1) as usize;
    let idx = |v: i64| (v.clamp(SCALE_MIN, SCALE_MAX) - SCALE_MIN) as usize;
    let n = pairs.len() as f64;
    let mut observed = [[0.0f64; K]; K];
    let mut row = [0.0f64; K];
    let mut col = [0.0f64; K];
    for &(a, b) in pairs {
        observed[idx(a)][idx(b)] += 1.0 / n;
        row[idx(a)] += 1.0 / n;
        col[idx(b)] += 1.0 / n;
    }
    let (mut obs_dis, mut exp_dis) = (0.0, 0.0);
    for i in 0..K {
        for j in 0..K {
            let w = i.abs_diff(j) as f64 / (K - 1) as f64;
            obs_dis += w * observed[i][j];
            exp_dis += w * row[i] * col[j];
        }
    }
    if exp_dis <= 1e-15 {
        1.0
    } else {
        1.0 - obs_dis / exp_dis
    }
}

pub const CSV_HEADER: [&str; 7] =
    ["template_id", "rater_id", "alignment", "content_quality", "engagement_clarity", "comment", "submitted_at"];

pub fn ratings_csv<'a>(ratings: impl IntoIterator<Item = &'a RatingRecord>) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for r in ratings {
        writer.write_record([
            r.template_id.clone(),
            r.rater_id.clone(),
            r.score(Dimension::Alignment).to_string(),
            r.score(Dimension::ContentQuality).to_string(),
            r.score(Dimension::EngagementClarity).to_string(),
            r.comment.clone().unwrap_or_default(),
            r.submitted_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn rating(template: &str, rater: &str, s: (i64, i64, i64)) -> RatingRecord {
        RatingRecord {
            template_id: template.into(),
            rater_id: rater.into(),
            scores: BTreeMap::from([
                (Dimension::Alignment, s.0),
                (Dimension::ContentQuality, s.1),
                (Dimension::EngagementClarity, s.2),
            ]),
            comment: None,
            submitted_at: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
        }
    }

    fn known(id: &str) -> bool {
        id.starts_with('t')
    }

    #[test]
    fn stores_valid_record() {
        let mut store = RatingStore::new();
        let ack = store.record(rating("t1", "r1", (4, 5, 3)), known).unwrap();
        assert!(!ack.replaced);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn rejects_bad_records() {
        let mut store = RatingStore::new();
        assert_eq!(
            store.record(rating("t1", "r1", (6, 5, 3)), known),
            Err(RatingError::OutOfRangeScore { dimension: "alignment".into(), value: 6 })
        );
        assert!(matches!(store.record(rating("t1", "r1", (0, 5, 3)), known), Err(RatingError::OutOfRangeScore { .. })));
        assert_eq!(store.record(rating("x1", "r1", (4, 4, 4)), known), Err(RatingError::UnknownTemplate("x1".into())));
        let mut partial = rating("t1", "r1", (4, 4, 4));
        partial.scores.remove(&Dimension::EngagementClarity);
        assert_eq!(store.record(partial, known), Err(RatingError::IncompleteScores("engagement_clarity".into())));
        assert!(store.is_empty());
    }

    #[test]
    fn resubmission_replaces() {
        let mut store = RatingStore::new();
        store.record(rating("t1", "r1", (4, 5, 3)), known).unwrap();
        let ack = store.record(rating("t1", "r1", (2, 2, 2)), known).unwrap();
        assert!(ack.replaced);
        assert_eq!(store.len(), 1);
        assert_eq!(store.iter().next().unwrap().score(Dimension::Alignment), 2);
    }

    #[test]
    fn single_rating_summary() {
        let s = summarize([&rating("t1", "r1", (4, 5, 3))]).unwrap();
        assert_eq!(s.per_dimension[&Dimension::Alignment], DimensionStats { mean: 4.0, sd: 0.0 });
        assert_eq!(s.per_dimension[&Dimension::ContentQuality].mean, 5.0);
        assert_eq!(s.per_dimension[&Dimension::EngagementClarity].mean, 3.0);
        assert_eq!(s.n_raters, 1);
        assert_eq!(s.weighted_kappa, None);
    }

    #[test]
    fn two_rater_population_sd() {
        let a = rating("t1", "r1", (4, 4, 4));
        let b = rating("t1", "r2", (2, 2, 2));
        let s = summarize([&a, &b]).unwrap();
        for d in Dimension::ALL {
            assert_eq!(s.per_dimension[&d], DimensionStats { mean: 3.0, sd: 1.0 });
        }
        assert_eq!(s.n_raters, 2);
        assert_eq!(s.weighted_kappa, Some(0.0));
    }

    #[test]
    fn identical_raters_kappa_one() {
        let a = rating("t1", "r1", (4, 2, 5));
        let b = rating("t1", "r2", (4, 2, 5));
        assert_eq!(summarize([&a, &b]).unwrap().weighted_kappa, Some(1.0));
    }

    #[test]
    fn weighted_kappa_hand_value() {
        // pairs (1,1),(2,3): O mass 1/2 at (0,0), 1/2 at (1,2); row (1/2,1/2), col (1/2,0,1/2)
        // obs disagreement = 1/2 * 1/4 = 1/8
        // exp disagreement = 1/4*(0 + 2/4) + 1/4*(1/4 + 1/4) = 1/8 + 1/8 = 1/4
        assert!((linear_weighted_kappa(&[(1, 1), (2, 3)]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scoped_summary_and_no_ratings() {
        let mut store = RatingStore::new();
        store.record(rating("t1", "r1", (5, 5, 5)), known).unwrap();
        store.record(rating("t2", "r1", (1, 1, 1)), known).unwrap();
        let s = store.summarize(&RatingScope::Template("t2".into())).unwrap();
        assert_eq!(s.per_dimension[&Dimension::Alignment].mean, 1.0);
        let sys = RatingScope::System { tag: "cot".into(), template_ids: BTreeSet::from(["t1".into(), "t2".into()]) };
        assert_eq!(store.summarize(&sys).unwrap().per_dimension[&Dimension::Alignment].mean, 3.0);
        assert_eq!(store.summarize(&RatingScope::Template("t9".into())), Err(RatingError::NoRatings));
    }

    #[test]
    fn csv_layout() {
        let mut r = rating("t1", "r1", (4, 5, 3));
        r.comment = Some("clear, engaging".into());
        let csv = ratings_csv([&r]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "template_id,rater_id,alignment,content_quality,engagement_clarity,comment,submitted_at");
        assert_eq!(lines.next().unwrap(), "t1,r1,4,5,3,\"clear, engaging\",2024-05-01T12:00:00Z");
    }

    #[test]
    fn questionnaire_is_fixed() {
        let q = Questionnaire::standard();
        assert_eq!(q.items.map(|i| i.dimension), Dimension::ALL);
        assert_eq!((q.scale_min, q.scale_max), (1, 5));
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant_and_bounded(
            scores in prop::collection::vec((1i64..=5, 1i64..=5, 1i64..=5, 0usize..4, 0usize..3), 1..20),
            rot in 0usize..20,
        ) {
            let records: Vec<_> = scores.iter().map(|&(a, b, c, rater, t)| rating(&format!("t{t}"), &format!("r{rater}"), (a, b, c))).collect();
            let mut store = RatingStore::new();
            for r in &records {
                store.record(r.clone(), known).unwrap();
            }
            let mut kept: Vec<_> = store.iter().cloned().collect();
            let forward = summarize(&kept).unwrap();
            let k = rot % kept.len();
            kept.rotate_left(k);
            kept.reverse();
            prop_assert_eq!(&forward, &summarize(&kept).unwrap());
            for stats in forward.per_dimension.values() {
                prop_assert!(stats.mean >= 1.0 && stats.mean <= 5.0);
            }
            if let Some(k) = forward.weighted_kappa {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&k));
            }
        }
    }
}
