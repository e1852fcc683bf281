use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GenerationOutcome;

/// Machine-readable error code, shared by the CLI and the HTTP API.
pub trait ErrorCode {
    fn code(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown instructional event {0:?}")]
    UnknownEvent(String),
    #[error("revision conflict: expected {expected}, template is at {actual}")]
    RevisionConflict { expected: u64, actual: u64 },
    #[error("invalid review action: {0}")]
    InvalidAction(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

impl ErrorCode for ModelError {
    fn code(&self) -> &'static str {
        match self {
            ModelError::UnknownEvent(_) => "unknown_event",
            ModelError::RevisionConflict { .. } => "revision_conflict",
            ModelError::InvalidAction(_) => "invalid_action",
            ModelError::Invalid(_) => "validation_error",
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("line {line}: {detail}")]
    Validation { line: usize, detail: String },
    #[error("line {line}: duplicate id {id:?} (first seen on line {first_line})")]
    DuplicateId { id: String, line: usize, first_line: usize },
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("no accepted records to export")]
    NothingToExport,
    #[error("malformed export file: {0}")]
    BadExport(String),
}

impl ErrorCode for CorpusError {
    fn code(&self) -> &'static str {
        match self {
            CorpusError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "file_not_found",
            CorpusError::Io { .. } => "io_error",
            CorpusError::Parse { .. } => "parse_error",
            CorpusError::Validation { .. } => "validation_error",
            CorpusError::DuplicateId { .. } => "duplicate_id",
            CorpusError::BadRatios(_) => "bad_ratios",
            CorpusError::NothingToExport => "nothing_to_export",
            CorpusError::BadExport(_) => "parse_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("concept is empty")]
    EmptyConcept,
    #[error("unknown slot marker {marker} at byte {position}")]
    ResidualSlot { marker: String, position: usize },
    #[error("template is missing required slot {0}")]
    MissingSlot(&'static str),
    #[error("exemplar {id} is labelled {found}, prompt targets {expected}")]
    ExemplarEventMismatch { id: String, expected: String, found: String },
    #[error("bad template header: {0}")]
    BadHeader(String),
}

impl ErrorCode for PromptError {
    fn code(&self) -> &'static str {
        match self {
            PromptError::EmptyConcept => "empty_concept",
            PromptError::ResidualSlot { .. } => "residual_slot",
            PromptError::MissingSlot(_) => "missing_slot",
            PromptError::ExemplarEventMismatch { .. } => "exemplar_event_mismatch",
            PromptError::BadHeader(_) => "bad_template",
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider returned an empty completion")]
    EmptyResponse,
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("refinement exhausted after {} rounds", .0.attempts)]
    RefinementExhausted(Box<GenerationOutcome>),
}

impl ErrorCode for GatewayError {
    fn code(&self) -> &'static str {
        match self {
            GatewayError::InvalidConfig(_) => "invalid_config",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Auth { .. } => "auth_error",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::Transport { .. } => "transport_error",
            GatewayError::Http { .. } => "http_error",
            GatewayError::EmptyResponse => "empty_response",
            GatewayError::MalformedResponse(_) => "malformed_response",
            GatewayError::RefinementExhausted(_) => "refinement_exhausted",
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("text is empty")]
    EmptyText,
    #[error("could not parse an event label from {0:?}")]
    UnparseableLabel(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("label lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("label lists are empty")]
    EmptyInput,
}

impl ErrorCode for ClassifyError {
    fn code(&self) -> &'static str {
        match self {
            ClassifyError::EmptyText => "empty_text",
            ClassifyError::UnparseableLabel(_) => "unparseable_label",
            ClassifyError::Gateway(e) => e.code(),
            ClassifyError::LengthMismatch { .. } => "length_mismatch",
            ClassifyError::EmptyInput => "empty_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("unsupported n-gram order {0}")]
    InvalidOrder(usize),
    #[error("no candidate/reference pairs given")]
    EmptyBatch,
}

impl ErrorCode for MetricError {
    fn code(&self) -> &'static str {
        match self {
            MetricError::NoReferences => "no_references",
            MetricError::InvalidOrder(_) => "invalid_order",
            MetricError::EmptyBatch => "empty_batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("missing scores for {0}")]
    IncompleteScores(String),
    #[error("score {value} for {dimension} is outside 1..=5")]
    OutOfRangeScore { dimension: String, value: i64 },
    #[error("no ratings in scope")]
    NoRatings,
    #[error("rater_id is empty")]
    EmptyRater,
}

impl ErrorCode for RatingError {
    fn code(&self) -> &'static str {
        match self {
            RatingError::UnknownTemplate(_) => "unknown_template",
            RatingError::IncompleteScores(_) => "incomplete_scores",
            RatingError::OutOfRangeScore { .. } => "out_of_range_score",
            RatingError::NoRatings => "no_ratings",
            RatingError::EmptyRater => "validation_error",
        }
    }
}
