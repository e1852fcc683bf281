//! Toolkit for generating, labelling, curating and evaluating teacher
//! classroom dialogue organised around the nine events of instruction.
//!
//! * [`event`] and [`template`]: the event taxonomy, dialogue templates and
//!   the review state machine.
//! * [`corpus`]: JSON Lines datasets, statistics, stratified splits and
//!   instruction-tuning exports.
//! * [`prompting`]: direct and chain-of-thought prompt rendering.
//! * [`gateway`]: chat-completions client, offline mock and the
//!   generate/check/refine loop.
//! * [`classify`]: keyword and LLM labelers plus Cohen's kappa.
//! * [`metrics`]: BLEU-4 and ROUGE-1/2/L.
//! * [`human_eval`]: the three-dimension rating questionnaire.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod event;
pub mod exec;
pub mod gateway;
pub mod human_eval;
pub mod metrics;
pub mod prompting;
pub mod template;

pub use error::{ClassifyError, CorpusError, ErrorCode, GatewayError, MetricError, ModelError, PromptError, RatingError};
pub use event::{event_from_label, GagneEvent};
pub use template::{apply_review, CurriculumStandard, DialogueTemplate, Provenance, ReviewAction, ReviewKind, ReviewState};
