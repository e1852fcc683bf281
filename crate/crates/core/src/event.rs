//! The closed nine-member taxonomy of instructional events.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// One of the nine events of instruction, in lesson order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GagneEvent {
    GainAttention,
    InformObjectives,
    StimulateRecall,
    PresentContent,
    LearningGuidance,
    ElicitPerformance,
    ProvideFeedback,
    AssessPerformance,
    EnhanceRetention,
}

impl GagneEvent {
    pub const ALL: [GagneEvent; 9] = [
        GagneEvent::GainAttention,
        GagneEvent::InformObjectives,
        GagneEvent::StimulateRecall,
        GagneEvent::PresentContent,
        GagneEvent::LearningGuidance,
        GagneEvent::ElicitPerformance,
        GagneEvent::ProvideFeedback,
        GagneEvent::AssessPerformance,
        GagneEvent::EnhanceRetention,
    ];

    /// Position in the lesson sequence, 1..=9.
    pub fn ordinal(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_ordinal(ordinal: u8) -> Option<GagneEvent> {
        match ordinal {
            1..=9 => Some(Self::ALL[usize::from(ordinal) - 1]),
            _ => None,
        }
    }

    /// Stable snake_case key used in files and APIs.
    pub fn canonical_label(self) -> &'static str {
        match self {
            GagneEvent::GainAttention => "gain_attention",
            GagneEvent::InformObjectives => "inform_objectives",
            GagneEvent::StimulateRecall => "stimulate_recall",
            GagneEvent::PresentContent => "present_content",
            GagneEvent::LearningGuidance => "learning_guidance",
            GagneEvent::ElicitPerformance => "elicit_performance",
            GagneEvent::ProvideFeedback => "provide_feedback",
            GagneEvent::AssessPerformance => "assess_performance",
            GagneEvent::EnhanceRetention => "enhance_retention",
        }
    }

    /// English row label as printed in the dataset table.
    pub fn display_name(self) -> &'static str {
        match self {
            GagneEvent::GainAttention => "Gain attention",
            GagneEvent::InformObjectives => "Inform learners of objectives",
            GagneEvent::StimulateRecall => "Stimulate recall of prior learning",
            GagneEvent::PresentContent => "Present the content",
            GagneEvent::LearningGuidance => "Provide \"learning guidance\"",
            GagneEvent::ElicitPerformance => "Elicit performance",
            GagneEvent::ProvideFeedback => "Provide feedback",
            GagneEvent::AssessPerformance => "Assess performance",
            GagneEvent::EnhanceRetention => "Enhance retention and transfer to the job",
        }
    }

    /// Example teacher utterance for the event (the dataset table's "Example" column).
    pub fn reference_utterance(self) -> &'static str {
        match self {
            GagneEvent::GainAttention => "Let's begin with a quick challenge: Can anyone guess which shape we’ll be exploring today with this image?",
            GagneEvent::InformObjectives => "Today, we'll learn how to calculate the area of different triangles, a skill essential for many real-life applications.",
            GagneEvent::StimulateRecall => "Think back to last week when we studied polygons. How does understanding their properties help in calculating the area of triangles?",
            GagneEvent::PresentContent => "We’ll look at formulas for the area of right, isosceles, and equilateral triangles using visuals and demonstrations.",
            GagneEvent::LearningGuidance => "I’ll guide you through each formula step-by-step. Remember, the base and height are key in these calculations.",
            GagneEvent::ElicitPerformance => "Now, let's try calculating the area of these triangles together. Start with this right triangle.",
            GagneEvent::ProvideFeedback => "That’s a good attempt. Make sure to measure the height correctly—it’s perpendicular to the base.",
            GagneEvent::AssessPerformance => "I’ll hand out a short quiz now. You'll calculate the area of a few triangles to show your understanding.",
            GagneEvent::EnhanceRetention => "As homework, find objects at home shaped like triangles and calculate their area. It’ll help solidify what we learned today.",
        }
    }

    /// One-sentence pedagogical goal, used in classification and CoT prompts.
    pub fn goal(self) -> &'static str {
        match self {
            GagneEvent::GainAttention => "capture students' interest at the start of a lesson or activity",
            GagneEvent::InformObjectives => "tell students what they will be able to do by the end of the lesson",
            GagneEvent::StimulateRecall => "connect the new topic to knowledge students already have",
            GagneEvent::PresentContent => "introduce the new material, definitions, or procedures",
            GagneEvent::LearningGuidance => "coach students through how to apply or remember the material",
            GagneEvent::ElicitPerformance => "ask students to practise the new skill themselves",
            GagneEvent::ProvideFeedback => "respond to a student's attempt with corrective or confirming information",
            GagneEvent::AssessPerformance => "check mastery through a quiz, test, or graded task",
            GagneEvent::EnhanceRetention => "help students retain the skill and apply it in new situations",
        }
    }
}

impl fmt::Display for GagneEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_label())
    }
}

/// Lowercase, drop quote characters, collapse whitespace runs.
fn normalize_label(label: &str) -> String {
    let unquoted: String = label
        .chars()
        .filter(|c| !matches!(c, '"' | '\u{201c}' | '\u{201d}' | '\''))
        .collect();
    unquoted
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Resolve a canonical label or display name, case-insensitively.
pub fn event_from_label(label: &str) -> Result<GagneEvent, ModelError> {
    let wanted = normalize_label(label);
    GagneEvent::ALL
        .into_iter()
        .find(|e| e.canonical_label() == wanted || normalize_label(e.display_name()) == wanted)
        .ok_or_else(|| ModelError::UnknownEvent(label.to_string()))
}

impl FromStr for GagneEvent {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        event_from_label(s)
    }
}

impl Serialize for GagneEvent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_label())
    }
}

impl<'de> Deserialize<'de> for GagneEvent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        event_from_label(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordinals_are_a_bijection() {
        let mut seen: Vec<u8> = GagneEvent::ALL.iter().map(|e| e.ordinal()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (1..=9).collect::<Vec<_>>());
        for e in GagneEvent::ALL {
            assert_eq!(GagneEvent::from_ordinal(e.ordinal()), Some(e));
        }
        assert_eq!(GagneEvent::from_ordinal(0), None);
        assert_eq!(GagneEvent::from_ordinal(10), None);
    }

    #[test]
    fn canonical_label_set_is_fixed() {
        let labels: Vec<_> = GagneEvent::ALL.iter().map(|e| e.canonical_label()).collect();
        assert_eq!(
            labels,
            [
                "gain_attention",
                "inform_objectives",
                "stimulate_recall",
                "present_content",
                "learning_guidance",
                "elicit_performance",
                "provide_feedback",
                "assess_performance",
                "enhance_retention",
            ]
        );
    }

    #[test]
    fn lookup_examples() {
        assert_eq!(event_from_label("gain_attention").unwrap().ordinal(), 1);
        assert_eq!(event_from_label("Provide feedback").unwrap().ordinal(), 7);
        assert_eq!(
            event_from_label("Enhance retention and transfer to the job").unwrap(),
            GagneEvent::EnhanceRetention
        );
        assert!(matches!(
            event_from_label("motivation"),
            Err(ModelError::UnknownEvent(_))
        ));
    }

    #[test]
    fn lookup_normalizes_case_and_whitespace() {
        assert_eq!(
            event_from_label("  PRESENT   the\tcontent ").unwrap(),
            GagneEvent::PresentContent
        );
        assert_eq!(
            event_from_label("provide learning guidance").unwrap(),
            GagneEvent::LearningGuidance
        );
        assert!(event_from_label("").is_err());
        assert!(event_from_label("gain attention now").is_err());
    }

    #[test]
    fn round_trip_all_eighteen_strings() {
        for e in GagneEvent::ALL {
            assert_eq!(event_from_label(e.canonical_label()).unwrap(), e);
            assert_eq!(event_from_label(e.display_name()).unwrap(), e);
        }
    }

    #[test]
    fn serde_uses_canonical_label() {
        let json = serde_json::to_string(&GagneEvent::ProvideFeedback).unwrap();
        assert_eq!(json, "\"provide_feedback\"");
        let back: GagneEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, GagneEvent::ProvideFeedback);
        assert!(serde_json::from_str::<GagneEvent>("\"motiv\"").is_err());
    }
}
