//! In-memory corpus backed by the corpus file, an append-only journal and a
//! ratings sidecar.
//!
//! Every mutation is appended to `<corpus>.journal` and synced before it is
//! applied in memory. Journal entries carry the full post-change state, so
//! replaying a journal twice (or over a corpus that already contains its
//! effects) gives the same result. [`Store::compact`] folds the journal into
//! the corpus and ratings files and truncates it.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use gagne_core::corpus::{load_corpus, stats, write_corpus, CorpusStats};
use gagne_core::human_eval::{validate_rating, RatingAck, RatingRecord, RatingScope, RatingStore, RatingSummary};
use gagne_core::{apply_review, DialogueTemplate, ModelError, RatingError, ReviewAction, ReviewState};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ServiceError};

pub const MAX_PAGE_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JournalEntry {
    Template { template: DialogueTemplate },
    Rating { rating: RatingRecord },
}

#[derive(Debug)]
pub enum WriteError {
    NotFound(String),
    Duplicate(String),
    Model(ModelError),
    Rating(RatingError),
    Storage(ServiceError),
}

impl From<WriteError> for ApiError {
    fn from(e: WriteError) -> Self {
        match e {
            WriteError::NotFound(id) => ApiError::not_found("template", &id),
            WriteError::Duplicate(id) => ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "duplicate_id",
                format!("template {id:?} already exists"),
            ),
            WriteError::Model(e) => e.into(),
            WriteError::Rating(e) => e.into(),
            WriteError::Storage(e) => e.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<DialogueTemplate>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io { path: path.to_path_buf(), source }
}

/// Write `contents` to `path` via a temporary file and rename.
fn replace_file(path: &Path, contents: &[u8]) -> Result<(), ServiceError> {
    let tmp = sibling(path, ".tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug)]
pub struct Store {
    corpus_path: PathBuf,
    journal_path: PathBuf,
    ratings_path: PathBuf,
    records: Vec<DialogueTemplate>,
    index: HashMap<String, usize>,
    ratings: RatingStore,
    journal: Option<File>,
    journal_entries: usize,
}

impl Store {
    /// Load the corpus, the ratings sidecar and replay any journal left by an
    /// earlier run. A final journal line without its newline is treated as a
    /// torn write and dropped; any other unreadable line is an error.
    pub fn open(corpus_path: impl AsRef<Path>) -> Result<Store, ServiceError> {
        let corpus_path = corpus_path.as_ref().to_path_buf();
        let records = load_corpus(&corpus_path)?.records;
        let mut store = Store {
            journal_path: sibling(&corpus_path, ".journal"),
            ratings_path: sibling(&corpus_path, ".ratings.jsonl"),
            corpus_path,
            index: records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect(),
            records,
            ratings: RatingStore::new(),
            journal: None,
            journal_entries: 0,
        };
        store.load_ratings()?;
        store.replay_journal()?;
        Ok(store)
    }

    pub fn corpus_path(&self) -> &Path {
        &self.corpus_path
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal_path
    }

    pub fn ratings_path(&self) -> &Path {
        &self.ratings_path
    }

    /// Entries appended or replayed since the last compaction.
    pub fn journal_entries(&self) -> usize {
        self.journal_entries
    }

    fn load_ratings(&mut self) -> Result<(), ServiceError> {
        let text = match fs::read_to_string(&self.ratings_path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(io_err(&self.ratings_path)(e)),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rating: RatingRecord = serde_json::from_str(line).map_err(|e| {
                ServiceError::Corpus(gagne_core::CorpusError::Parse { line: i + 1, detail: e.to_string() })
            })?;
            self.ratings.upsert(rating);
        }
        Ok(())
    }

    fn replay_journal(&mut self) -> Result<(), ServiceError> {
        let text = match fs::read_to_string(&self.journal_path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(io_err(&self.journal_path)(e)),
        };
        let mut good_len = 0;
        let mut offset = 0;
        for (i, raw) in text.split_inclusive('\n').enumerate() {
            offset += raw.len();
            if !raw.ends_with('\n') {
                log::warn!("dropping torn final journal line {}", i + 1);
                break;
            }
            if !raw.trim().is_empty() {
                let entry: JournalEntry = serde_json::from_str(raw).map_err(|e| ServiceError::CorruptJournal {
                    path: self.journal_path.clone(),
                    line: i + 1,
                    detail: e.to_string(),
                })?;
                self.apply(entry);
                self.journal_entries += 1;
            }
            good_len = offset;
        }
        if good_len < text.len() {
            let f = OpenOptions::new().write(true).open(&self.journal_path).map_err(io_err(&self.journal_path))?;
            f.set_len(good_len as u64).map_err(io_err(&self.journal_path))?;
        }
        Ok(())
    }

    /// Apply one state-based entry. Older revisions never overwrite newer ones.
    fn apply(&mut self, entry: JournalEntry) {
        match entry {
            JournalEntry::Template { template } => match self.index.get(&template.id) {
                Some(&i) if self.records[i].revision <= template.revision => self.records[i] = template,
                Some(_) => {}
                None => {
                    self.index.insert(template.id.clone(), self.records.len());
                    self.records.push(template);
                }
            },
            JournalEntry::Rating { rating } => {
                self.ratings.upsert(rating);
            }
        }
    }

    fn append(&mut self, entry: &JournalEntry) -> Result<(), ServiceError> {
        if self.journal.is_none() {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.journal_path)
                .map_err(io_err(&self.journal_path))?;
            self.journal = Some(f);
        }
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        let f = self.journal.as_mut().expect("opened above");
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(io_err(&self.journal_path))?;
        self.journal_entries += 1;
        Ok(())
    }

    fn commit(&mut self, entry: JournalEntry) -> Result<(), WriteError> {
        self.append(&entry).map_err(WriteError::Storage)?;
        self.apply(entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&DialogueTemplate> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[DialogueTemplate] {
        &self.records
    }

    pub fn ratings(&self) -> &RatingStore {
        &self.ratings
    }

    pub fn review(&mut self, id: &str, action: &ReviewAction, now: DateTime<Utc>) -> Result<DialogueTemplate, WriteError> {
        let current = self.get(id).ok_or_else(|| WriteError::NotFound(id.to_string()))?;
        let updated = apply_review(current, action, now).map_err(WriteError::Model)?;
        self.commit(JournalEntry::Template { template: updated.clone() })?;
        Ok(updated)
    }

    pub fn insert(&mut self, template: DialogueTemplate) -> Result<(), WriteError> {
        if self.index.contains_key(&template.id) {
            return Err(WriteError::Duplicate(template.id));
        }
        template.validate().map_err(WriteError::Model)?;
        self.commit(JournalEntry::Template { template })
    }

    pub fn rate(&mut self, rating: RatingRecord) -> Result<RatingAck, WriteError> {
        if !self.index.contains_key(&rating.template_id) {
            return Err(WriteError::Rating(RatingError::UnknownTemplate(rating.template_id)));
        }
        validate_rating(&rating).map_err(WriteError::Rating)?;
        let replaced = self.ratings.iter().any(|r| r.template_id == rating.template_id && r.rater_id == rating.rater_id);
        self.commit(JournalEntry::Rating { rating })?;
        Ok(RatingAck { replaced })
    }

    pub fn rating_summary(&self, scope: &RatingScope) -> Result<RatingSummary, RatingError> {
        self.ratings.summarize(scope)
    }

    /// One page of templates ordered by `created_at`, then `id`. Pages are 1-based.
    pub fn queue(&self, state: Option<ReviewState>, page: usize, page_size: usize) -> Result<QueuePage, ApiError> {
        if page == 0 {
            return Err(ApiError::bad_request("bad_page", "page starts at 1"));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(ApiError::bad_request("bad_page", format!("page_size must be between 1 and {MAX_PAGE_SIZE}")));
        }
        let mut matching: Vec<&DialogueTemplate> =
            self.records.iter().filter(|r| state.is_none_or(|s| r.review_state == s)).collect();
        matching.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let total = matching.len();
        let items = matching.into_iter().skip((page - 1).saturating_mul(page_size)).take(page_size).cloned().collect();
        Ok(QueuePage { items, page, page_size, total, total_pages: total.div_ceil(page_size) })
    }

    pub fn stats(&self) -> CorpusStats {
        stats(&self.records)
    }

    /// Fold the journal into the corpus and ratings files, then truncate it.
    pub fn compact(&mut self) -> Result<(), ServiceError> {
        replace_file(&self.corpus_path, write_corpus(&self.records).as_bytes())?;
        if !self.ratings.is_empty() || self.ratings_path.exists() {
            let mut out = String::new();
            for r in self.ratings.iter() {
                out.push_str(&serde_json::to_string(r).expect("ratings serialize"));
                out.push('\n');
            }
            replace_file(&self.ratings_path, out.as_bytes())?;
        }
        self.journal = None;
        match fs::remove_file(&self.journal_path) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&self.journal_path)(e)),
        }
        self.journal_entries = 0;
        Ok(())
    }
}
