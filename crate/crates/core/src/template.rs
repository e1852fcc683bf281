//! Dialogue templates, curriculum standards and the review state machine.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::event::GagneEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LlmGenerated,
    ClassroomCollected,
    ManuallyEdited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Accepted,
    Rejected,
}

impl ReviewState {
    pub const ALL: [ReviewState; 3] = [ReviewState::Pending, ReviewState::Accepted, ReviewState::Rejected];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewState::Pending => "pending",
            ReviewState::Accepted => "accepted",
            ReviewState::Rejected => "rejected",
        }
    }
}

impl std::str::FromStr for ReviewState {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReviewState::ALL
            .into_iter()
            .find(|state| state.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::Invalid(format!("unknown review state {s:?}")))
    }
}

/// Per-knowledge-point requirement text used to constrain generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumStandard {
    pub id: String,
    pub subject: String,
    pub grade_band: String,
    pub knowledge_point: String,
    pub requirement_text: String,
}

impl CurriculumStandard {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.knowledge_point.trim().is_empty() {
            return Err(ModelError::Invalid("knowledge_point is empty".into()));
        }
        if self.requirement_text.trim().is_empty() {
            return Err(ModelError::Invalid("requirement_text is empty".into()));
        }
        Ok(())
    }
}

/// A single teacher utterance tied to one concept and one event.
///
/// Field order matches the corpus line layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueTemplate {
    pub id: String,
    pub concept: String,
    pub event: GagneEvent,
    pub text: String,
    pub provenance: Provenance,
    pub review_state: ReviewState,
    pub revision: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl DialogueTemplate {
    /// A fresh pending template at revision 0.
    pub fn new_pending(
        id: impl Into<String>,
        concept: impl Into<String>,
        event: GagneEvent,
        text: impl Into<String>,
        provenance: Provenance,
        now: DateTime<Utc>,
    ) -> Self {
        DialogueTemplate {
            id: id.into(),
            concept: concept.into(),
            event,
            text: text.into(),
            provenance,
            review_state: ReviewState::Pending,
            revision: 0,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::Invalid("id is empty".into()));
        }
        if self.review_state == ReviewState::Accepted && self.text.trim().is_empty() {
            return Err(ModelError::Invalid("accepted template has empty text".into()));
        }
        if self.provenance == Provenance::ManuallyEdited && self.revision == 0 {
            return Err(ModelError::Invalid(
                "manually_edited template must have a prior revision".into(),
            ));
        }
        if self.updated_at < self.created_at {
            return Err(ModelError::Invalid("updated_at precedes created_at".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewKind {
    Accept,
    Edit,
    Reject,
    Relabel,
}

/// An expert's decision about one template, guarded by the revision it was made against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewAction {
    pub action: ReviewKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_event: Option<GagneEvent>,
    pub expected_revision: u64,
}

impl ReviewAction {
    pub fn accept(expected_revision: u64) -> Self {
        ReviewAction { action: ReviewKind::Accept, edited_text: None, new_event: None, expected_revision }
    }

    pub fn reject(expected_revision: u64) -> Self {
        ReviewAction { action: ReviewKind::Reject, edited_text: None, new_event: None, expected_revision }
    }

    pub fn edit(text: impl Into<String>, expected_revision: u64) -> Self {
        ReviewAction {
            action: ReviewKind::Edit,
            edited_text: Some(text.into()),
            new_event: None,
            expected_revision,
        }
    }

    pub fn relabel(event: GagneEvent, expected_revision: u64) -> Self {
        ReviewAction {
            action: ReviewKind::Relabel,
            edited_text: None,
            new_event: Some(event),
            expected_revision,
        }
    }
}

/// Apply a review decision, producing the next revision of the template.
///
/// This is the only mutation path for templates; the input is left untouched.
pub fn apply_review(
    template: &DialogueTemplate,
    action: &ReviewAction,
    now: DateTime<Utc>,
) -> Result<DialogueTemplate, ModelError> {
    if action.expected_revision != template.revision {
        return Err(ModelError::RevisionConflict {
            expected: action.expected_revision,
            actual: template.revision,
        });
    }
    let mut next = template.clone();
    match action.action {
        ReviewKind::Accept => {
            if next.text.trim().is_empty() {
                return Err(ModelError::InvalidAction("cannot accept a template with empty text".into()));
            }
            next.review_state = ReviewState::Accepted;
        }
        ReviewKind::Reject => next.review_state = ReviewState::Rejected,
        ReviewKind::Edit => {
            let text = action
                .edited_text
                .as_deref()
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| ModelError::InvalidAction("edit requires non-empty edited_text".into()))?;
            next.text = text.to_string();
            next.provenance = Provenance::ManuallyEdited;
            next.review_state = ReviewState::Accepted;
        }
        ReviewKind::Relabel => {
            next.event = action
                .new_event
                .ok_or_else(|| ModelError::InvalidAction("relabel requires new_event".into()))?;
        }
    }
    next.revision += 1;
    next.updated_at = now.max(template.updated_at);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    fn pending() -> DialogueTemplate {
        DialogueTemplate::new_pending(
            "t-1",
            "area of triangles",
            GagneEvent::ProvideFeedback,
            "Good try.",
            Provenance::LlmGenerated,
            at(0),
        )
    }

    #[test]
    fn accept_moves_to_accepted() {
        let next = apply_review(&pending(), &ReviewAction::accept(0), at(5)).unwrap();
        assert_eq!(next.review_state, ReviewState::Accepted);
        assert_eq!(next.revision, 1);
        assert_eq!(next.updated_at, at(5));
        assert_eq!(next.created_at, at(0));
    }

    #[test]
    fn stale_revision_conflicts() {
        let mut t = pending();
        t.revision = 2;
        let err = apply_review(&t, &ReviewAction::accept(1), at(1)).unwrap_err();
        assert_eq!(err, ModelError::RevisionConflict { expected: 1, actual: 2 });
    }

    #[test]
    fn edit_replaces_text_and_marks_manual() {
        let text = "That’s a good attempt. Make sure to measure the height correctly—it’s perpendicular to the base.";
        let next = apply_review(&pending(), &ReviewAction::edit(text, 0), at(1)).unwrap();
        assert_eq!(next.text, text);
        assert_eq!(next.provenance, Provenance::ManuallyEdited);
        assert_eq!(next.review_state, ReviewState::Accepted);
        assert_eq!(next.revision, 1);
        next.validate().unwrap();
    }

    #[test]
    fn edit_without_text_is_invalid() {
        let action = ReviewAction { action: ReviewKind::Edit, edited_text: None, new_event: None, expected_revision: 0 };
        assert!(matches!(apply_review(&pending(), &action, at(1)), Err(ModelError::InvalidAction(_))));
        let blank = ReviewAction::edit("   ", 0);
        assert!(matches!(apply_review(&pending(), &blank, at(1)), Err(ModelError::InvalidAction(_))));
    }

    #[test]
    fn relabel_changes_event_only() {
        let next = apply_review(&pending(), &ReviewAction::relabel(GagneEvent::AssessPerformance, 0), at(1)).unwrap();
        assert_eq!(next.event, GagneEvent::AssessPerformance);
        assert_eq!(next.review_state, ReviewState::Pending);
        let missing = ReviewAction { action: ReviewKind::Relabel, edited_text: None, new_event: None, expected_revision: 0 };
        assert!(apply_review(&pending(), &missing, at(1)).is_err());
    }

    #[test]
    fn validation_rules() {
        let mut t = pending();
        t.validate().unwrap();
        t.provenance = Provenance::ManuallyEdited;
        assert!(t.validate().is_err());
        let mut t = pending();
        t.review_state = ReviewState::Accepted;
        t.text = " ".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn review_action_json_shape() {
        let json = serde_json::to_value(ReviewAction::relabel(GagneEvent::GainAttention, 3)).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"action": "relabel", "new_event": "gain_attention", "expected_revision": 3})
        );
    }

    fn any_action() -> impl Strategy<Value = (u8, String, u8)> {
        (0u8..4, "[a-z ]{0,12}", 1u8..=9)
    }

    proptest! {
        #[test]
        fn revision_counts_successful_actions(actions in prop::collection::vec((any_action(), any::<bool>()), 0..20)) {
            let mut t = pending();
            let mut ok = 0u64;
            for (i, ((kind, text, ord), stale)) in actions.into_iter().enumerate() {
                let expected = if stale { t.revision + 1 } else { t.revision };
                let action = match kind {
                    0 => ReviewAction::accept(expected),
                    1 => ReviewAction::reject(expected),
                    2 => ReviewAction::edit(text, expected),
                    _ => ReviewAction::relabel(GagneEvent::from_ordinal(ord).unwrap(), expected),
                };
                if let Ok(next) = apply_review(&t, &action, at(i as i64)) {
                    prop_assert_eq!(next.revision, t.revision + 1);
                    next.validate().unwrap();
                    t = next;
                    ok += 1;
                }
            }
            prop_assert_eq!(t.revision, ok);
        }
    }
}
