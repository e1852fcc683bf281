//! Event labelling: a keyword baseline, an LLM labeler, and Cohen's kappa.

use serde::{Deserialize, Serialize};

use crate::error::ClassifyError;
use crate::event::{event_from_label, GagneEvent};
use crate::exec::{map_ordered, Execution};
use crate::gateway::{
    AlignmentCheck, CompletionRequest, Gateway, Violation, DEFAULT_CLASSIFICATION_TEMPERATURE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMethod {
    Keyword,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResult {
    pub event: GagneEvent,
    pub method: LabelMethod,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matched_cues: Vec<String>,
}

/// Cue phrases per event, matched case-insensitively at a word start.
pub const CUE_LEXICON: [(GagneEvent, &[&str]); 9] = [
    (GagneEvent::GainAttention, &["let's begin", "challenge", "guess", "look at this"]),
    (GagneEvent::InformObjectives, &["today, we'll learn", "objective", "we will learn"]),
    (GagneEvent::StimulateRecall, &["think back", "last week", "recall", "remember when"]),
    (GagneEvent::PresentContent, &["formula", "we'll look at", "definition"]),
    (GagneEvent::LearningGuidance, &["step-by-step", "i'll guide", "remember,"]),
    (GagneEvent::ElicitPerformance, &["let's try", "now, let's", "start with this"]),
    (GagneEvent::ProvideFeedback, &["good attempt", "well done", "make sure to"]),
    (GagneEvent::AssessPerformance, &["quiz", "test", "show your understanding"]),
    (GagneEvent::EnhanceRetention, &["homework", "at home", "solidify"]),
];

fn normalize_text(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' => '\'',
            '\u{201c}' | '\u{201d}' => '"',
            c => c,
        })
        .collect::<String>()
        .to_lowercase()
}

/// True when `cue` occurs in `haystack` starting at a word boundary.
fn contains_cue(haystack: &str, cue: &str) -> bool {
    let needs_boundary = cue.chars().next().is_some_and(char::is_alphanumeric);
    haystack.match_indices(cue).any(|(pos, _)| {
        !needs_boundary || haystack[..pos].chars().next_back().is_none_or(|c| !c.is_alphanumeric())
    })
}

/// Score every event by the number of distinct cues present in `text`.
pub fn cue_scores(text: &str) -> [(GagneEvent, Vec<&'static str>); 9] {
    let normalized = normalize_text(text);
    CUE_LEXICON.map(|(event, cues)| {
        (event, cues.iter().copied().filter(|cue| contains_cue(&normalized, cue)).collect())
    })
}

/// Label an utterance with the event whose cues fire most often.
///
/// Ties go to the lower ordinal. With no cue hits the result is
/// `present_content` at confidence 0. Confidence is the winner's share of
/// all cue hits.
pub fn classify_keyword(text: &str) -> Result<LabelResult, ClassifyError> {
    if text.trim().is_empty() {
        return Err(ClassifyError::EmptyText);
    }
    let scores = cue_scores(text);
    let total: usize = scores.iter().map(|(_, hits)| hits.len()).sum();
    if total == 0 {
        return Ok(LabelResult {
            event: GagneEvent::PresentContent,
            method: LabelMethod::Keyword,
            confidence: 0.0,
            matched_cues: Vec::new(),
        });
    }
    let (event, hits) = scores
        .into_iter()
        .max_by(|(ea, ha), (eb, hb)| ha.len().cmp(&hb.len()).then(eb.ordinal().cmp(&ea.ordinal())))
        .expect("nine events");
    Ok(LabelResult {
        event,
        method: LabelMethod::Keyword,
        confidence: hits.len() as f64 / total as f64,
        matched_cues: hits.into_iter().map(String::from).collect(),
    })
}

/// Keyword-label many texts; output `i` belongs to `texts[i]`.
pub fn classify_keyword_batch<S: AsRef<str> + Sync>(texts: &[S], exec: Execution) -> Vec<Result<LabelResult, ClassifyError>> {
    map_ordered(texts, exec, |_, t| classify_keyword(t.as_ref()))
}

pub const CLASSIFICATION_SYSTEM_PROMPT: &str = "You label teacher classroom utterances with exactly one of the nine events of instruction. Answer with the event name only.";

/// The user message sent by [`classify_llm`].
pub fn classification_prompt(text: &str) -> String {
    let mut prompt = String::from("Events:\n");
    for event in GagneEvent::ALL {
        prompt.push_str(&format!(
            "{}. {}: {}. Example: \"{}\"\n",
            event.ordinal(),
            event.display_name(),
            event.goal(),
            event.reference_utterance()
        ));
    }
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    prompt.push_str(&format!("\nWhich event does this utterance belong to?\nUtterance: {flat}"));
    prompt
}

/// Parse a model answer: display name, canonical label, or bare ordinal.
pub fn parse_label(answer: &str) -> Result<GagneEvent, ClassifyError> {
    let trimmed = answer.trim().trim_matches(|c: char| !c.is_alphanumeric());
    if let Ok(event) = event_from_label(trimmed) {
        return Ok(event);
    }
    trimmed
        .parse::<u8>()
        .ok()
        .and_then(GagneEvent::from_ordinal)
        .ok_or_else(|| ClassifyError::UnparseableLabel(answer.to_string()))
}

pub fn classify_llm(gateway: &Gateway, text: &str) -> Result<LabelResult, ClassifyError> {
    if text.trim().is_empty() {
        return Err(ClassifyError::EmptyText);
    }
    let mut request = CompletionRequest::new(CLASSIFICATION_SYSTEM_PROMPT, classification_prompt(text));
    request.temperature = Some(DEFAULT_CLASSIFICATION_TEMPERATURE);
    let answer = gateway.complete(&request)?;
    Ok(LabelResult { event: parse_label(&answer)?, method: LabelMethod::Llm, confidence: 1.0, matched_cues: Vec::new() })
}

/// Default generation check: length bounds plus a keyword verdict that
/// names the requested event with at least one cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeywordAlignment {
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for KeywordAlignment {
    fn default() -> Self {
        KeywordAlignment { min_chars: 10, max_chars: 600 }
    }
}

impl AlignmentCheck for KeywordAlignment {
    fn check(&self, text: &str, event: GagneEvent) -> Result<(), Violation> {
        let len = text.trim().chars().count();
        if len == 0 {
            return Err(Violation("the answer is empty".into()));
        }
        if len < self.min_chars {
            return Err(Violation(format!("the utterance must be at least {} characters long", self.min_chars)));
        }
        if len > self.max_chars {
            return Err(Violation(format!("the utterance must be at most {} characters long", self.max_chars)));
        }
        let label = classify_keyword(text).map_err(|e| Violation(e.to_string()))?;
        if label.confidence == 0.0 {
            return Err(Violation(format!(
                "the utterance does not clearly serve the '{}' event",
                event.display_name()
            )));
        }
        if label.event != event {
            return Err(Violation(format!(
                "the utterance reads as '{}' rather than '{}'",
                label.event.display_name(),
                event.display_name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_items: usize,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub kappa: f64,
    /// `confusion[i][j]` counts items labelled ordinal `i+1` by rater a and `j+1` by rater b.
    pub confusion: [[u64; 9]; 9],
    /// Set when chance agreement is 1 (both raters constant and equal); kappa is then 1.0 by convention.
    pub degenerate: bool,
}

/// Cohen's kappa over the nine-event label space.
pub fn agreement(labels_a: &[GagneEvent], labels_b: &[GagneEvent]) -> Result<AgreementReport, ClassifyError> {
    if labels_a.len() != labels_b.len() {
        return Err(ClassifyError::LengthMismatch { left: labels_a.len(), right: labels_b.len() });
    }
    if labels_a.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let mut confusion = [[0u64; 9]; 9];
    for (a, b) in labels_a.iter().zip(labels_b) {
        confusion[usize::from(a.ordinal() - 1)][usize::from(b.ordinal() - 1)] += 1;
    }
    let n = labels_a.len() as f64;
    let observed = (0..9).map(|i| confusion[i][i]).sum::<u64>() as f64 / n;
    let expected: f64 = (0..9)
        .map(|k| {
            let row: u64 = confusion[k].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[k]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let degenerate = (1.0 - expected).abs() < 1e-12;
    let kappa = if degenerate { 1.0 } else { (observed - expected) / (1.0 - expected) };
    Ok(AgreementReport {
        n_items: labels_a.len(),
        observed_agreement: observed,
        expected_agreement: expected,
        kappa,
        confusion,
        degenerate,
    })
}
