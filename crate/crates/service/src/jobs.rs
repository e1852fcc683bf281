//! Background generation jobs started by `POST /api/generate`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use gagne_core::classify::KeywordAlignment;
use gagne_core::gateway::{batch_generate, BatchOptions, Gateway};
use gagne_core::prompting::{render, PromptMode, PromptSpec, PromptTemplate};
use gagne_core::{CurriculumStandard, ErrorCode, GagneEvent, GatewayError, ReviewState};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::store::Store;

pub const MAX_JOB_COUNT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub concept: String,
    pub event: GagneEvent,
    #[serde(default = "default_mode")]
    pub mode: PromptMode,
    pub count: usize,
    /// Item `i` uses `seed + i`; a random base is drawn when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub standard: Option<CurriculumStandard>,
}

fn default_mode() -> PromptMode {
    PromptMode::Cot
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub index: usize,
    pub error: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub requested: usize,
    pub seed: u64,
    /// Ids of templates added to the pending queue. Candidates that never
    /// passed the alignment check are included so reviewers can triage them.
    pub created: Vec<String>,
    pub unaligned: Vec<String>,
    pub failures: Vec<ItemFailure>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSettings {
    pub parallelism: usize,
    pub max_rounds: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings { parallelism: 4, max_rounds: gagne_core::gateway::DEFAULT_MAX_ROUNDS }
    }
}

#[derive(Debug, Default)]
pub struct JobBoard {
    next: AtomicU64,
    jobs: RwLock<HashMap<String, JobStatus>>,
}

impl JobBoard {
    pub fn get(&self, id: &str) -> Option<JobStatus> {
        self.jobs.read().get(id).cloned()
    }

    pub fn running(&self) -> usize {
        self.jobs.read().values().filter(|j| j.state == JobState::Running).count()
    }

    fn register(&self, requested: usize, seed: u64) -> String {
        let id = format!("job-{}", self.next.fetch_add(1, Ordering::Relaxed) + 1);
        let status = JobStatus {
            id: id.clone(),
            state: JobState::Running,
            requested,
            seed,
            created: Vec::new(),
            unaligned: Vec::new(),
            failures: Vec::new(),
            started_at: Utc::now(),
            finished_at: None,
        };
        self.jobs.write().insert(id.clone(), status);
        id
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(job) = self.jobs.write().get_mut(id) {
            f(job);
        }
    }
}

/// Validate a request and render its prompts against the current corpus.
pub fn prepare(store: &Store, req: &GenerateRequest) -> Result<Vec<PromptSpec>, ApiError> {
    if !(1..=MAX_JOB_COUNT).contains(&req.count) {
        return Err(ApiError::bad_request("validation_error", format!("count must be between 1 and {MAX_JOB_COUNT}")));
    }
    let concept = req.concept.trim();
    let exemplars: Vec<_> = store
        .records()
        .iter()
        .filter(|r| r.review_state == ReviewState::Accepted && r.event == req.event && r.concept.trim() == concept)
        .cloned()
        .collect();
    let spec = render(&PromptTemplate::default_for(req.mode), &req.concept, req.event, req.standard.as_ref(), &exemplars)?;
    Ok(vec![spec; req.count])
}

/// Register a job and run it on the blocking pool. Returns the job id.
pub fn launch(
    board: Arc<JobBoard>,
    store: Arc<RwLock<Store>>,
    gateway: Gateway,
    settings: GenerationSettings,
    specs: Vec<PromptSpec>,
    seed: u64,
) -> String {
    let id = board.register(specs.len(), seed);
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let opts = BatchOptions {
            max_rounds: settings.max_rounds,
            seed,
            now: Utc::now(),
            parallelism: settings.parallelism.max(1),
        };
        let checker = KeywordAlignment::default();
        let results = match batch_generate(&gateway, &specs, &checker, &opts) {
            Ok(r) => r,
            Err(e) => {
                board.update(&job_id, |j| {
                    j.state = JobState::Failed;
                    j.failures.push(ItemFailure { index: 0, error: e.code().into(), detail: e.to_string() });
                    j.finished_at = Some(Utc::now());
                });
                return;
            }
        };
        for (index, result) in results.into_iter().enumerate() {
            let (template, aligned) = match result {
                Ok(outcome) => (outcome.template, true),
                Err(GatewayError::RefinementExhausted(outcome)) => (outcome.template, false),
                Err(e) => {
                    let failure = ItemFailure { index, error: e.code().into(), detail: e.to_string() };
                    board.update(&job_id, |j| j.failures.push(failure));
                    continue;
                }
            };
            let template_id = template.id.clone();
            let inserted = store.write().insert(template);
            board.update(&job_id, |j| match inserted {
                Ok(()) if aligned => j.created.push(template_id),
                Ok(()) => {
                    j.created.push(template_id.clone());
                    j.unaligned.push(template_id);
                }
                Err(e) => {
                    let api: ApiError = e.into();
                    j.failures.push(ItemFailure { index, error: api.code.into(), detail: api.detail });
                }
            });
        }
        board.update(&job_id, |j| {
            j.state = if j.created.is_empty() && !j.failures.is_empty() { JobState::Failed } else { JobState::Completed };
            j.finished_at = Some(Utc::now());
        });
    });
    id
}
