//! Loading, validating, summarizing, splitting and exporting the dialogue corpus.
//!
//! Corpus files are UTF-8 JSON Lines, one [`DialogueTemplate`] per line.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::event::GagneEvent;
use crate::template::{DialogueTemplate, ReviewState};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusFile {
    pub records: Vec<DialogueTemplate>,
    pub source_path: PathBuf,
}

impl CorpusFile {
    pub fn stats(&self) -> CorpusStats {
        stats(&self.records)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &DialogueTemplate> {
        self.records.iter().filter(|r| r.review_state == ReviewState::Accepted)
    }
}

pub fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusFile, CorpusError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let records = parse_corpus(&text)?;
    Ok(CorpusFile { records, source_path: path.to_path_buf() })
}

/// Parse JSON Lines corpus text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<DialogueTemplate>, CorpusError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: DialogueTemplate = serde_json::from_str(raw)
            .map_err(|e| CorpusError::Parse { line, detail: e.to_string() })?;
        record
            .validate()
            .map_err(|e| CorpusError::Validation { line, detail: e.to_string() })?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(CorpusError::DuplicateId { id: record.id, line, first_line });
        }
        seen.insert(record.id.clone(), line);
        records.push(record);
    }
    Ok(records)
}

/// Serialize records as JSON Lines with a trailing newline.
pub fn write_corpus(records: &[DialogueTemplate]) -> String {
    let mut out = String::with_capacity(records.len() * 256);
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("template serialization is infallible"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: impl AsRef<Path>, records: &[DialogueTemplate]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, write_corpus(records))
        .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_event_counts: BTreeMap<GagneEvent, usize>,
    pub total: usize,
    pub per_state_counts: BTreeMap<ReviewState, usize>,
}

pub fn stats(records: &[DialogueTemplate]) -> CorpusStats {
    let mut per_event_counts: BTreeMap<GagneEvent, usize> =
        GagneEvent::ALL.into_iter().map(|e| (e, 0)).collect();
    let mut per_state_counts: BTreeMap<ReviewState, usize> =
        ReviewState::ALL.into_iter().map(|s| (s, 0)).collect();
    for record in records {
        *per_event_counts.entry(record.event).or_default() += 1;
        *per_state_counts.entry(record.review_state).or_default() += 1;
    }
    CorpusStats { per_event_counts, total: records.len(), per_state_counts }
}

/// Stratified split of the accepted records.
///
/// Each event's records are shuffled with a seeded RNG and dealt out so that
/// every piece holds `floor(n_e * ratio)` or one more record of event `e`.
/// Piece sizes overall follow largest-remainder rounding of the accepted
/// total. Records keep their original relative order within each piece.
pub fn split(
    records: &[DialogueTemplate],
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<Vec<DialogueTemplate>>, CorpusError> {
    validate_ratios(ratios)?;
    let k = ratios.len();

    let mut by_event: BTreeMap<GagneEvent, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.review_state == ReviewState::Accepted {
            by_event.entry(r.event).or_default().push(i);
        }
    }
    let total: usize = by_event.values().map(Vec::len).sum();

    let targets = largest_remainder(total, ratios);
    let mut base: Vec<Vec<usize>> = Vec::with_capacity(by_event.len());
    let mut fractions: Vec<Vec<f64>> = Vec::with_capacity(by_event.len());
    for members in by_event.values() {
        let n = members.len() as f64;
        let exact: Vec<f64> = ratios.iter().map(|r| n * r).collect();
        // guard against 0.3 * 10 = 2.9999999999999996
        let floors: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
        fractions.push(exact.iter().zip(&floors).map(|(x, f)| x - *f as f64).collect());
        base.push(floors);
    }
    let mut deficit: Vec<i64> = (0..k)
        .map(|j| targets[j] as i64 - base.iter().map(|b| b[j] as i64).sum::<i64>())
        .collect();

    // Hand each event's leftovers to distinct pieces, neediest first.
    let mut counts = base.clone();
    for (e, members) in by_event.values().enumerate() {
        let leftover = members.len() - base[e].iter().sum::<usize>();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            deficit[b]
                .cmp(&deficit[a])
                .then(fractions[e][b].total_cmp(&fractions[e][a]))
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(leftover) {
            counts[e][j] += 1;
            deficit[j] -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pieces: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (e, members) in by_event.values().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let mut cursor = 0;
        for (j, piece) in pieces.iter_mut().enumerate() {
            piece.extend_from_slice(&shuffled[cursor..cursor + counts[e][j]]);
            cursor += counts[e][j];
        }
    }
    Ok(pieces
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            idx.into_iter().map(|i| records[i].clone()).collect()
        })
        .collect())
}

fn validate_ratios(ratios: &[f64]) -> Result<(), CorpusError> {
    if ratios.is_empty() {
        return Err(CorpusError::BadRatios("no ratios given".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !r.is_finite() || **r <= 0.0) {
        return Err(CorpusError::BadRatios(format!("ratio {r} is not positive")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(format!("ratios sum to {sum}, not 1")));
    }
    Ok(())
}

fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| total as f64 * r).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut rest = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - out[b] as f64)
            .total_cmp(&(exact[a] - out[a] as f64))
            .then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[j] += 1;
        rest -= 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneFormat {
    Alpaca,
    Sharegpt,
}

impl std::str::FromStr for FinetuneFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alpaca" => Ok(FinetuneFormat::Alpaca),
            "sharegpt" => Ok(FinetuneFormat::Sharegpt),
            other => Err(format!("unknown export format {other:?} (expected alpaca or sharegpt)")),
        }
    }
}

/// One instruction-tuning example in Alpaca layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl FinetuneRecord {
    pub fn from_template(t: &DialogueTemplate) -> Self {
        FinetuneRecord {
            instruction: format!(
                "Generate teacher dialogue for the '{}' event",
                t.event.display_name()
            ),
            input: format!("Concept: {}", t.concept),
            output: t.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareGptTurn {
    pub from: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareGptRecord {
    pub conversations: Vec<ShareGptTurn>,
}

impl From<&FinetuneRecord> for ShareGptRecord {
    fn from(r: &FinetuneRecord) -> Self {
        ShareGptRecord {
            conversations: vec![
                ShareGptTurn { from: "human".into(), value: format!("{}\n{}", r.instruction, r.input) },
                ShareGptTurn { from: "gpt".into(), value: r.output.clone() },
            ],
        }
    }
}

/// A parsed fine-tuning export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FinetuneDocument {
    Alpaca(Vec<FinetuneRecord>),
    Sharegpt(Vec<ShareGptRecord>),
}

impl FinetuneDocument {
    pub fn len(&self) -> usize {
        match self {
            FinetuneDocument::Alpaca(v) => v.len(),
            FinetuneDocument::Sharegpt(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pretty-printed JSON array, two-space indent, trailing newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = match self {
            FinetuneDocument::Alpaca(v) => serde_json::to_vec_pretty(v),
            FinetuneDocument::Sharegpt(v) => serde_json::to_vec_pretty(v),
        }
        .expect("export serialization is infallible");
        out.push(b'\n');
        out
    }
}

/// Build the fine-tuning document from accepted records, preserving order.
pub fn finetune_document(
    records: &[DialogueTemplate],
    format: FinetuneFormat,
) -> Result<FinetuneDocument, CorpusError> {
    let alpaca: Vec<FinetuneRecord> = records
        .iter()
        .filter(|r| r.review_state == ReviewState::Accepted)
        .map(FinetuneRecord::from_template)
        .collect();
    if alpaca.is_empty() {
        return Err(CorpusError::NothingToExport);
    }
    Ok(match format {
        FinetuneFormat::Alpaca => FinetuneDocument::Alpaca(alpaca),
        FinetuneFormat::Sharegpt => FinetuneDocument::Sharegpt(alpaca.iter().map(ShareGptRecord::from).collect()),
    })
}

pub fn export_finetune(records: &[DialogueTemplate], format: FinetuneFormat) -> Result<Vec<u8>, CorpusError> {
    finetune_document(records, format).map(|doc| doc.to_bytes())
}

pub fn load_finetune(bytes: &[u8], format: FinetuneFormat) -> Result<FinetuneDocument, CorpusError> {
    let bad = |e: serde_json::Error| CorpusError::BadExport(e.to_string());
    Ok(match format {
        FinetuneFormat::Alpaca => FinetuneDocument::Alpaca(serde_json::from_slice(bytes).map_err(bad)?),
        FinetuneFormat::Sharegpt => FinetuneDocument::Sharegpt(serde_json::from_slice(bytes).map_err(bad)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::Provenance;
    use chrono::{TimeZone, Utc};

    fn record(id: &str, event: GagneEvent, state: ReviewState) -> DialogueTemplate {
        let now = Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap();
        let mut t = DialogueTemplate::new_pending(id, "area of triangles", event, format!("utterance {id}"), Provenance::LlmGenerated, now);
        t.review_state = state;
        if state != ReviewState::Pending {
            t.revision = 1;
        }
        t
    }

    fn line(id: &str, event: &str) -> String {
        format!(
            r#"{{"id":"{id}","concept":"linear equation","event":"{event}","text":"Hello class.","provenance":"llm_generated","review_state":"pending","revision":0,"created_at":"2024-01-01T00:00:00Z","updated_at":"2024-01-01T00:00:00Z"}}"#
        )
    }

    #[test]
    fn parses_well_formed_lines() {
        let text = [line("a", "gain_attention"), line("b", "provide_feedback"), line("c", "Assess performance")].join("\n");
        let records = parse_corpus(&text).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].event, GagneEvent::AssessPerformance);
    }

    #[test]
    fn unknown_event_reports_line() {
        let text = [line("a", "gain_attention"), line("b", "motiv"), line("c", "gain_attention")].join("\n");
        match parse_corpus(&text) {
            Err(CorpusError::Parse { line, detail }) => {
                assert_eq!(line, 2);
                assert!(detail.contains("motiv"), "{detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = [line("a", "gain_attention"), line("a", "provide_feedback")].join("\n");
        assert!(matches!(
            parse_corpus(&text),
            Err(CorpusError::DuplicateId { line: 2, first_line: 1, .. })
        ));
    }

    #[test]
    fn invariant_breach_is_validation_error() {
        let bad = line("a", "gain_attention").replace("llm_generated", "manually_edited");
        assert!(matches!(parse_corpus(&bad), Err(CorpusError::Validation { line: 1, .. })));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = line("a", "gain_attention").replace("\"revision\"", "\"extra\":1,\"revision\"");
        assert!(matches!(parse_corpus(&bad), Err(CorpusError::Parse { .. })));
    }

    #[test]
    fn corpus_line_field_order() {
        let text = line("a", "gain_attention");
        let records = parse_corpus(&text).unwrap();
        assert_eq!(write_corpus(&records), format!("{text}\n"));
    }

    #[test]
    fn empty_corpus_stats() {
        let s = stats(&[]);
        assert_eq!(s.total, 0);
        assert!(s.per_event_counts.values().all(|&c| c == 0));
        assert_eq!(s.per_event_counts.len(), 9);
        assert!(s.per_state_counts.values().all(|&c| c == 0));
    }

    #[test]
    fn stats_total_matches_event_sum() {
        let records: Vec<_> = GagneEvent::ALL
            .iter()
            .enumerate()
            .flat_map(|(i, &e)| (0..=i).map(move |j| record(&format!("{i}-{j}"), e, ReviewState::Accepted)))
            .collect();
        let s = stats(&records);
        assert_eq!(s.total, 45);
        assert_eq!(s.per_event_counts.values().sum::<usize>(), s.total);
        assert_eq!(s.per_event_counts[&GagneEvent::EnhanceRetention], 9);
    }

    #[test]
    fn bad_ratios() {
        let records = vec![record("a", GagneEvent::GainAttention, ReviewState::Accepted)];
        assert!(matches!(split(&records, &[0.5, 0.6], 1), Err(CorpusError::BadRatios(_))));
        assert!(matches!(split(&records, &[1.2, -0.2], 1), Err(CorpusError::BadRatios(_))));
        assert!(matches!(split(&records, &[], 1), Err(CorpusError::BadRatios(_))));
    }

    #[test]
    fn split_one_per_event_two_thirds() {
        let records: Vec<_> = GagneEvent::ALL
            .iter()
            .map(|&e| record(e.canonical_label(), e, ReviewState::Accepted))
            .collect();
        let pieces = split(&records, &[2.0 / 3.0, 1.0 / 3.0], 3).unwrap();
        assert_eq!(pieces[0].len(), 6);
        assert_eq!(pieces[1].len(), 3);
    }

    #[test]
    fn split_is_deterministic() {
        let records: Vec<_> = (0..90)
            .map(|i| record(&format!("r{i}"), GagneEvent::ALL[i % 9], ReviewState::Accepted))
            .collect();
        let a = split(&records, &[0.8, 0.2], 7).unwrap();
        let b = split(&records, &[0.8, 0.2], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 72);
        assert_eq!(a[1].len(), 18);
        let c = split(&records, &[0.8, 0.2], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn export_alpaca_record() {
        let mut t = record("q", GagneEvent::AssessPerformance, ReviewState::Accepted);
        t.text = GagneEvent::AssessPerformance.reference_utterance().to_string();
        let doc = finetune_document(&[t.clone()], FinetuneFormat::Alpaca).unwrap();
        let FinetuneDocument::Alpaca(rows) = &doc else { panic!() };
        assert_eq!(rows[0].instruction, "Generate teacher dialogue for the 'Assess performance' event");
        assert!(rows[0].input.contains("area of triangles"));
        assert_eq!(rows[0].output, t.text);
        let bytes = doc.to_bytes();
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(json[0]["output"], t.text.as_str());
    }

    #[test]
    fn only_rejected_means_nothing_to_export() {
        let records = vec![record("x", GagneEvent::GainAttention, ReviewState::Rejected)];
        assert!(matches!(export_finetune(&records, FinetuneFormat::Alpaca), Err(CorpusError::NothingToExport)));
    }

    #[test]
    fn sharegpt_export_shape() {
        let records = vec![record("x", GagneEvent::GainAttention, ReviewState::Accepted)];
        let bytes = export_finetune(&records, FinetuneFormat::Sharegpt).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let turns = &json[0]["conversations"];
        assert_eq!(turns[0]["from"], "human");
        assert!(turns[0]["value"].as_str().unwrap().contains("'Gain attention'"));
        assert!(turns[0]["value"].as_str().unwrap().contains("Concept: area of triangles"));
        assert_eq!(turns[1]["from"], "gpt");
        let again = load_finetune(&bytes, FinetuneFormat::Sharegpt).unwrap().to_bytes();
        assert_eq!(again, bytes);
    }
}
