//! List-generation questions, each stored in an ordered and an unordered phrasing.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_backend::{self, Backend, BackendError};
use crate::perturbation::inject;
use crate::rng::RngStream;

const BUNDLED_PROMPTS: &str = include_str!("../data/prompts.jsonl");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("prompt file not found: {0}")]
    FileNotFound(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate prompt id {0:?}")]
    DuplicateId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DraftError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Query(#[from] BackendError),
}

/// Which phrasing of a question a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Ordered,
    Unordered,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Ordered => "ordered",
            Setting::Unordered => "unordered",
        })
    }
}

impl std::str::FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordered" => Ok(Setting::Ordered),
            "unordered" => Ok(Setting::Unordered),
            other => Err(format!(
                "unknown setting {other:?} (expected ordered|unordered)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub id: String,
    pub ordered_text: String,
    pub unordered_text: String,
    pub k: u32,
    pub topic: Option<String>,
}

impl PromptRecord {
    pub fn text(&self, setting: Setting) -> &str {
        match setting {
            Setting::Ordered => &self.ordered_text,
            Setting::Unordered => &self.unordered_text,
        }
    }
}

/// One broken invariant of a [`PromptRecord`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    ZeroK,
    EmptyText { field: &'static str },
    CountMismatch { field: &'static str, k: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "id is empty"),
            Violation::ZeroK => write!(f, "k must be at least 1"),
            Violation::EmptyText { field } => write!(f, "{field} is empty"),
            Violation::CountMismatch { field, k } => {
                write!(f, "{field} does not mention the requested count {k}")
            }
        }
    }
}

/// Lists every violated invariant; an empty list means the record is valid.
pub fn validate_prompt(record: &PromptRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if record.k == 0 {
        out.push(Violation::ZeroK);
    }
    for (field, text) in [
        ("ordered_text", &record.ordered_text),
        ("unordered_text", &record.unordered_text),
    ] {
        if text.trim().is_empty() {
            out.push(Violation::EmptyText { field });
        } else if record.k > 0 && !mentions_number(text, record.k) {
            out.push(Violation::CountMismatch { field, k: record.k });
        }
    }
    out
}

// "10" must appear as a whole number, so "100" does not satisfy k=10.
fn mentions_number(text: &str, k: u32) -> bool {
    let needle = k.to_string();
    text.split(|c: char| !c.is_ascii_digit())
        .any(|run| run == needle)
}

pub fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>, DatasetError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DatasetError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    parse_prompts(&text)
}

/// The 100-question dataset shipped with the crate.
pub fn bundled_prompts() -> Vec<PromptRecord> {
    parse_prompts(BUNDLED_PROMPTS).expect("bundled dataset is valid")
}

pub fn bundled_prompts_text() -> &'static str {
    BUNDLED_PROMPTS
}

pub fn parse_prompts(text: &str) -> Result<Vec<PromptRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        let violations = validate_prompt(&record);
        if !violations.is_empty() {
            let reason = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(DatasetError::MalformedRecord {
                line: line_no,
                reason,
            });
        }
        if !ids.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_prompts(path: &Path, records: &[PromptRecord]) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).expect("prompt records serialize");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

const DRAFT_INSTRUCTION: &str = "Write {n} distinct questions that each ask for a list of exactly \
10 items from a large, loosely defined category. For each question give two phrasings separated \
by \" | \": first with a qualifier that loosely orders the category (for example \"Name 10 popular \
Hollywood actors.\"), then without it (for example \"Name 10 Hollywood actors.\").";

fn dedup_key(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Asks the backend for up to `n` candidate questions.
///
/// Candidates that cannot be split into two phrasings or fail validation are
/// dropped, as are exact duplicates of the unordered phrasing after lowercasing
/// and whitespace collapse. Nothing is written to any dataset.
pub fn draft_prompts(
    backend: &dyn Backend,
    n: usize,
    topic_hints: &[String],
    stream: &mut RngStream,
) -> Result<Vec<PromptRecord>, DraftError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut instruction = DRAFT_INSTRUCTION.replace("{n}", &n.to_string());
    if !topic_hints.is_empty() {
        instruction.push_str(" Cover these topics: ");
        instruction.push_str(&topic_hints.join(", "));
        instruction.push('.');
    }
    let prompt = inject("", &instruction).expect("instruction is non-empty");
    let result = model_backend::query(backend, &prompt, n, stream).map_err(|e| match e {
        BackendError::Unavailable(msg) => DraftError::BackendUnavailable(msg),
        other => DraftError::Query(other),
    })?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in result.items {
        let Some((ordered, unordered)) = line.split_once(" | ") else {
            continue;
        };
        let record = PromptRecord {
            id: format!("draft{:03}", out.len() + 1),
            ordered_text: ordered.trim().to_string(),
            unordered_text: unordered.trim().to_string(),
            k: 10,
            topic: None,
        };
        if !validate_prompt(&record).is_empty() {
            continue;
        }
        if seen.insert(dedup_key(&record.unordered_text)) {
            out.push(record);
        }
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}
