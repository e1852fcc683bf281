//! Readers for the loosely structured JSON Lines inputs of `classify`, `eval` and `agreement`.

use std::collections::HashMap;
use std::path::Path;

use gagne_core::corpus::read_file;
use gagne_core::{event_from_label, GagneEvent};
use serde::Deserialize;

use crate::CliError;

/// `{id, text}` or `{id, texts}`; other fields (as in corpus records) are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct TextRow {
    pub id: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub texts: Option<Vec<String>>,
    #[serde(default)]
    pub event: Option<String>,
}

impl TextRow {
    pub fn all_texts(&self) -> Vec<String> {
        let mut out: Vec<String> = self.text.iter().cloned().collect();
        out.extend(self.texts.iter().flatten().cloned());
        out
    }
}

fn json_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

pub fn read_rows(path: &Path) -> Result<Vec<TextRow>, CliError> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    for (line, raw) in json_lines(&text) {
        let row: TextRow = serde_json::from_str(raw)
            .map_err(|e| CliError::new("parse_error", format!("{} line {line}: {e}", path.display())))?;
        if row.all_texts().is_empty() {
            return Err(CliError::new("parse_error", format!("{} line {line}: no text or texts field", path.display())));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Rows keyed by id; a repeated id is an error.
pub fn index_rows(path: &Path, rows: Vec<TextRow>) -> Result<HashMap<String, TextRow>, CliError> {
    let mut map = HashMap::with_capacity(rows.len());
    for row in rows {
        if map.contains_key(&row.id) {
            return Err(CliError::new("duplicate_id", format!("{}: id {:?} appears twice", path.display(), row.id)));
        }
        map.insert(row.id.clone(), row);
    }
    Ok(map)
}

/// One label per row. `id` is present when the row was a JSON object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub id: Option<String>,
    pub event: GagneEvent,
}

#[derive(Deserialize)]
struct JsonLabel {
    #[serde(default)]
    id: Option<String>,
    event: String,
}

/// Accepts canonical labels, display names and ordinals 1 to 9.
pub fn parse_event(label: &str) -> Result<GagneEvent, CliError> {
    match label.trim().parse::<u8>() {
        Ok(n) => GagneEvent::from_ordinal(n)
            .ok_or_else(|| CliError::new("unknown_event", format!("event ordinal {n} is outside 1..=9"))),
        Err(_) => Ok(event_from_label(label)?),
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    for (line, raw) in json_lines(&text) {
        let at = |detail: String| CliError::new("parse_error", format!("{} line {line}: {detail}", path.display()));
        let (id, label) = if raw.starts_with('{') {
            let parsed: JsonLabel = serde_json::from_str(raw).map_err(|e| at(e.to_string()))?;
            (parsed.id, parsed.event)
        } else {
            (None, raw.to_string())
        };
        let event = parse_event(&label).map_err(|e| at(e.detail))?;
        rows.push(LabelRow { id, event });
    }
    Ok(rows)
}

/// Pair two label lists by id when every row has one, otherwise by position.
pub fn pair_labels(a: &[LabelRow], b: &[LabelRow]) -> Result<(Vec<GagneEvent>, Vec<GagneEvent>), CliError> {
    let keyed = a.iter().chain(b).all(|r| r.id.is_some());
    if !keyed {
        return Ok((a.iter().map(|r| r.event).collect(), b.iter().map(|r| r.event).collect()));
    }
    let lookup: HashMap<&str, GagneEvent> = b.iter().map(|r| (r.id.as_deref().unwrap(), r.event)).collect();
    let mut left = Vec::with_capacity(a.len());
    let mut right = Vec::with_capacity(a.len());
    for row in a {
        let id = row.id.as_deref().unwrap();
        let other = lookup.get(id).ok_or_else(|| CliError::new("unpaired_id", format!("id {id:?} has no label in the second file")))?;
        left.push(row.event);
        right.push(*other);
    }
    if lookup.len() != a.len() {
        return Err(CliError::new("unpaired_id", format!("label files cover different ids ({} vs {})", a.len(), lookup.len())));
    }
    Ok((left, right))
}
