//! Direct and chain-of-thought prompt rendering with `[Concept]`/`[Class]` slots.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, PromptError};
use crate::event::GagneEvent;
use crate::template::{CurriculumStandard, DialogueTemplate};

pub const CONCEPT: &str = "[Concept]";
pub const CLASS: &str = "[Class]";
pub const STANDARD: &str = "[Standard]";
pub const EXAMPLES: &str = "[Examples]";

pub const DEFAULT_MAX_EXEMPLARS: usize = 3;

/// Reasoning block appended to every chain-of-thought rendering.
pub const COT_SCAFFOLD: &str = "\
Think through the following steps before answering:
1. Restate the concept and the curriculum requirement it must satisfy.
2. Identify the pedagogical goal of the target event.
3. Reason step by step about a classroom situation that fits that goal.
4. Draft the teacher utterance.
5. Check that the draft aligns with the event definition and revise it if needed.
Answer with the final teacher utterance only.";

const DEFAULT_COT: &str = include_str!("../prompts/cot.prompt");
const DEFAULT_DIRECT: &str = include_str!("../prompts/direct.prompt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Cot,
    Direct,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Cot => "cot",
            PromptMode::Direct => "direct",
        })
    }
}

impl std::str::FromStr for PromptMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cot" => Ok(PromptMode::Cot),
            "direct" => Ok(PromptMode::Direct),
            other => Err(PromptError::BadHeader(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub mode: PromptMode,
    pub body: String,
}

impl PromptTemplate {
    /// Parse a template file: a `mode: cot|direct` header line, then the body.
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self, PromptError> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let mode = header
            .trim()
            .strip_prefix("mode:")
            .ok_or_else(|| PromptError::BadHeader(format!("expected `mode: cot|direct`, found {header:?}")))?
            .parse()?;
        Ok(PromptTemplate { id: id.into(), mode, body: body.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptLoadError> {
        let path = path.as_ref();
        let text = crate::corpus::read_file(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self::parse(id, &text)?)
    }

    pub fn default_cot() -> Self {
        Self::parse("cot", DEFAULT_COT).expect("shipped cot.prompt is valid")
    }

    pub fn default_direct() -> Self {
        Self::parse("direct", DEFAULT_DIRECT).expect("shipped direct.prompt is valid")
    }

    pub fn default_for(mode: PromptMode) -> Self {
        match mode {
            PromptMode::Cot => Self::default_cot(),
            PromptMode::Direct => Self::default_direct(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptLoadError {
    #[error(transparent)]
    Io(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// A fully rendered prompt together with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub concept: String,
    pub event: GagneEvent,
    pub standard: Option<CurriculumStandard>,
    pub exemplars: Vec<DialogueTemplate>,
    pub rendered_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub marker: String,
    /// Byte offset into the body, when the finding is tied to one occurrence.
    pub position: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Concept,
    Class,
    Standard,
    Examples,
}

impl Slot {
    fn from_marker(marker: &str) -> Option<Slot> {
        match marker {
            CONCEPT => Some(Slot::Concept),
            CLASS => Some(Slot::Class),
            STANDARD => Some(Slot::Standard),
            EXAMPLES => Some(Slot::Examples),
            _ => None,
        }
    }
}

/// A bracketed token `[Name]` where Name starts with a letter.
#[derive(Debug, Clone, Copy)]
struct Marker<'a> {
    start: usize,
    text: &'a str,
}

fn scan_markers(body: &str) -> Vec<Marker<'_>> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' && bytes.get(i + 1).is_some_and(u8::is_ascii_alphabetic) {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            if bytes.get(j) == Some(&b']') {
                out.push(Marker { start: i, text: &body[i..=j] });
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Check the template invariants; an empty list means the template is usable.
pub fn validate_template(template: &PromptTemplate) -> Vec<Finding> {
    let markers = scan_markers(&template.body);
    let mut findings: Vec<Finding> = markers
        .iter()
        .filter(|m| Slot::from_marker(m.text).is_none())
        .map(|m| Finding {
            marker: m.text.to_string(),
            position: Some(m.start),
            message: format!("unknown slot {} at byte {}", m.text, m.start),
        })
        .collect();
    for required in [CONCEPT, CLASS] {
        if !markers.iter().any(|m| m.text == required) {
            findings.push(Finding {
                marker: required.to_string(),
                position: None,
                message: format!("missing required slot {required}"),
            });
        }
    }
    findings
}

pub fn render(
    template: &PromptTemplate,
    concept: &str,
    event: GagneEvent,
    standard: Option<&CurriculumStandard>,
    exemplars: &[DialogueTemplate],
) -> Result<PromptSpec, PromptError> {
    render_with_limit(template, concept, event, standard, exemplars, DEFAULT_MAX_EXEMPLARS)
}

/// Render a template in a single left-to-right pass.
///
/// Substituted text is never rescanned, so a concept containing a literal
/// `[Class]` is emitted verbatim. Lines holding an optional slot with no
/// value (`[Standard]` without a standard, `[Examples]` without exemplars)
/// are dropped entirely.
pub fn render_with_limit(
    template: &PromptTemplate,
    concept: &str,
    event: GagneEvent,
    standard: Option<&CurriculumStandard>,
    exemplars: &[DialogueTemplate],
    max_exemplars: usize,
) -> Result<PromptSpec, PromptError> {
    let concept_trimmed = concept.trim();
    if concept_trimmed.is_empty() {
        return Err(PromptError::EmptyConcept);
    }
    if let Some(bad) = exemplars.iter().find(|x| x.event != event) {
        return Err(PromptError::ExemplarEventMismatch {
            id: bad.id.clone(),
            expected: event.canonical_label().into(),
            found: bad.event.canonical_label().into(),
        });
    }
    let markers = scan_markers(&template.body);
    if let Some(m) = markers.iter().find(|m| Slot::from_marker(m.text).is_none()) {
        return Err(PromptError::ResidualSlot { marker: m.text.to_string(), position: m.start });
    }
    for required in [CONCEPT, CLASS] {
        if !markers.iter().any(|m| m.text == required) {
            return Err(PromptError::MissingSlot(required));
        }
    }

    let exemplars: Vec<DialogueTemplate> = exemplars.iter().take(max_exemplars).cloned().collect();
    let standard_text = standard.map(|s| s.requirement_text.trim()).filter(|s| !s.is_empty());

    let mut lines: Vec<String> = Vec::new();
    let mut line_start = 0;
    for raw in template.body.split_inclusive('\n') {
        let line = raw.trim_end_matches(['\n', '\r']);
        let offset = line_start;
        line_start += raw.len();
        let here: Vec<&Marker> = markers
            .iter()
            .filter(|m| m.start >= offset && m.start < offset + line.len())
            .collect();
        let drops = here.iter().any(|m| match Slot::from_marker(m.text) {
            Some(Slot::Standard) => standard_text.is_none(),
            Some(Slot::Examples) => exemplars.is_empty(),
            _ => false,
        });
        if drops {
            continue;
        }
        let mut out = String::with_capacity(line.len() + 32);
        let mut cursor = 0;
        for m in here {
            let local = m.start - offset;
            out.push_str(&line[cursor..local]);
            match Slot::from_marker(m.text).expect("markers validated above") {
                Slot::Concept => out.push_str(concept_trimmed),
                Slot::Class => out.push_str(event.display_name()),
                Slot::Standard => out.push_str(standard_text.unwrap_or_default()),
                Slot::Examples => {
                    if !out.trim().is_empty() {
                        out.truncate(out.trim_end().len());
                        out.push('\n');
                    }
                    let texts: Vec<&str> = exemplars.iter().map(|x| x.text.trim()).collect();
                    out.push_str(&texts.join("\n"));
                }
            }
            cursor = local + m.text.len();
        }
        out.push_str(&line[cursor..]);
        lines.push(out);
    }
    let mut rendered_text = lines.join("\n").trim().to_string();
    if template.mode == PromptMode::Cot {
        rendered_text.push_str("\n\n");
        rendered_text.push_str(COT_SCAFFOLD);
    }

    Ok(PromptSpec {
        mode: template.mode,
        concept: concept_trimmed.to_string(),
        event,
        standard: standard.cloned(),
        exemplars,
        rendered_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::Provenance;
    use chrono::{TimeZone, Utc};

    fn body(mode: PromptMode, body: &str) -> PromptTemplate {
        PromptTemplate { id: "t".into(), mode, body: body.into() }
    }

    fn exemplar(id: &str, event: GagneEvent, text: &str) -> DialogueTemplate {
        DialogueTemplate::new_pending(
            id,
            "triangles",
            event,
            text,
            Provenance::ClassroomCollected,
            Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        )
    }

    #[test]
    fn cot_render_of_linear_equation() {
        let spec = render(&PromptTemplate::default_cot(), "linear equation", GagneEvent::GainAttention, None, &[]).unwrap();
        assert!(spec.rendered_text.contains("linear equation"));
        assert!(spec.rendered_text.contains("Gain attention"));
        assert!(scan_markers(&spec.rendered_text).is_empty());
        assert!(spec.rendered_text.ends_with("Answer with the final teacher utterance only."));
        assert!(!spec.rendered_text.contains("Curriculum requirement"));
        assert!(!spec.rendered_text.contains("Example utterances"));
    }

    #[test]
    fn empty_concept() {
        let t = PromptTemplate::default_direct();
        assert_eq!(render(&t, "", GagneEvent::GainAttention, None, &[]), Err(PromptError::EmptyConcept));
        assert_eq!(render(&t, "  ", GagneEvent::GainAttention, None, &[]), Err(PromptError::EmptyConcept));
    }

    #[test]
    fn unknown_marker_is_residual_slot() {
        let t = body(PromptMode::Direct, "Teach [Concept] for [Class] in [Grade].");
        assert!(matches!(
            render(&t, "fractions", GagneEvent::GainAttention, None, &[]),
            Err(PromptError::ResidualSlot { ref marker, position: 31 }) if marker == "[Grade]"
        ));
    }

    #[test]
    fn validate_examples() {
        assert!(validate_template(&body(PromptMode::Direct, "Write dialogue about [Concept] for [Class].")).is_empty());
        let f = validate_template(&body(PromptMode::Direct, "Write dialogue about [Concept]."));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].message, "missing required slot [Class]");
        assert!(validate_template(&body(PromptMode::Direct, "[Concept] and [Concept] for [Class]")).is_empty());
        let f = validate_template(&body(PromptMode::Direct, "[Concept] [Class] [Grade]"));
        assert_eq!(f[0].marker, "[Grade]");
        assert_eq!(f[0].position, Some(18));
    }

    #[test]
    fn non_slot_brackets_are_ignored() {
        let t = body(PromptMode::Direct, "[Concept] for [Class], see [1] and [ ].");
        assert!(validate_template(&t).is_empty());
        let spec = render(&t, "x", GagneEvent::GainAttention, None, &[]).unwrap();
        assert_eq!(spec.rendered_text, "x for Gain attention, see [1] and [ ].");
    }

    #[test]
    fn standard_and_examples_fill_in() {
        let std = CurriculumStandard {
            id: "m8-1".into(),
            subject: "math".into(),
            grade_band: "7-9".into(),
            knowledge_point: "linear equation".into(),
            requirement_text: "Solve one-variable linear equations.".into(),
        };
        let ex = [
            exemplar("e1", GagneEvent::GainAttention, "Guess what this picture shows!"),
            exemplar("e2", GagneEvent::GainAttention, "Here is a challenge for you."),
        ];
        let spec = render(&PromptTemplate::default_cot(), "linear equation", GagneEvent::GainAttention, Some(&std), &ex).unwrap();
        assert!(spec.rendered_text.contains("Curriculum requirement: Solve one-variable linear equations."));
        assert!(spec.rendered_text.contains(
            "Example utterances for this event:\nGuess what this picture shows!\nHere is a challenge for you."
        ));
        assert_eq!(spec.exemplars.len(), 2);
    }

    #[test]
    fn exemplars_capped_and_checked() {
        let ex: Vec<_> = (0..5).map(|i| exemplar(&format!("e{i}"), GagneEvent::GainAttention, &format!("line {i}"))).collect();
        let spec = render(&PromptTemplate::default_cot(), "x", GagneEvent::GainAttention, None, &ex).unwrap();
        assert_eq!(spec.exemplars.len(), 3);
        assert!(!spec.rendered_text.contains("line 3"));
        let wrong = [exemplar("w", GagneEvent::ProvideFeedback, "Well done.")];
        assert!(matches!(
            render(&PromptTemplate::default_cot(), "x", GagneEvent::GainAttention, None, &wrong),
            Err(PromptError::ExemplarEventMismatch { .. })
        ));
    }

    #[test]
    fn substitution_is_single_pass() {
        let spec = render(&PromptTemplate::default_direct(), "[Class] theory", GagneEvent::ProvideFeedback, None, &[]).unwrap();
        assert_eq!(
            spec.rendered_text,
            "Write a teacher utterance for the 'Provide feedback' event when teaching [Class] theory."
        );
    }

    #[test]
    fn cot_contains_direct_plus_scaffold() {
        for event in GagneEvent::ALL {
            let direct = render(&PromptTemplate::default_direct(), "fractions", event, None, &[]).unwrap();
            let cot = render(&PromptTemplate::default_cot(), "fractions", event, None, &[]).unwrap();
            assert!(cot.rendered_text.contains(&direct.rendered_text));
            assert!(cot.rendered_text.contains(COT_SCAFFOLD));
            assert!(!direct.rendered_text.contains(COT_SCAFFOLD));
            assert!(cot.rendered_text.len() > direct.rendered_text.len());
        }
    }

    #[test]
    fn header_parsing() {
        let t = PromptTemplate::parse("x", "mode: direct\nTeach [Concept] for [Class].\n").unwrap();
        assert_eq!(t.mode, PromptMode::Direct);
        assert!(matches!(PromptTemplate::parse("x", "Teach [Concept]"), Err(PromptError::BadHeader(_))));
        assert!(matches!(PromptTemplate::parse("x", "mode: socratic\n[Concept]"), Err(PromptError::BadHeader(_))));
    }
}
