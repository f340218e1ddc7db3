//! Runs the prompts × conditions × repetitions grid against a backend.
//!
//! Cells are executed by a bounded worker pool; a single writer appends
//! records in canonical cell order (prompt file order, then condition order,
//! then repetition), so an interrupted run that is resumed produces the same
//! file as an uninterrupted one. All randomness for a cell comes from streams
//! derived from the master seed and the cell's identity.

mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use store::{read_with_offset, Appender};
pub use store::{CellKey, ResponseFile, ResponseRecord};

use crate::model_backend::{
    build_backend, normalize_item, query, Backend, BackendError, MockConfig, ModelConfig,
    ParseStatus,
};
use crate::perturbation::{inject, make_context, ContextSpec, PerturbationError, WordLists};
use crate::prompt_dataset::{load_prompts, DatasetError, PromptRecord, Setting};
use crate::rng::{sha256_hex, RngStream};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("response file does not match this configuration: {0}")]
    ConfigMismatch(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub setting: Setting,
    pub conditions: Vec<ContextSpec>,
    pub m: u32,
    pub master_seed: u64,
    pub parallelism: usize,
    pub model: ModelConfig,
    pub mock: Option<MockConfig>,
    pub output_dir: PathBuf,
    /// Word list override; the bundled lists are used when `None`.
    pub wordlists_path: Option<PathBuf>,
    /// Timestamp written into every record instead of the wall clock.
    pub fixed_timestamp: Option<String>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.m == 0 {
            return Err(RunError::InvalidConfig("m must be at least 1".into()));
        }
        if self.conditions.is_empty() {
            return Err(RunError::InvalidConfig("no conditions given".into()));
        }
        let distinct: HashSet<_> = self.conditions.iter().collect();
        if distinct.len() != self.conditions.len() {
            return Err(RunError::InvalidConfig(
                "conditions must be distinct".into(),
            ));
        }
        for c in &self.conditions {
            c.validate()?;
        }
        if self.parallelism == 0 {
            return Err(RunError::InvalidConfig(
                "parallelism must be at least 1".into(),
            ));
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn response_path(&self) -> PathBuf {
        self.output_dir
            .join(format!("responses_{}.jsonl", self.setting))
    }
}

/// Settings recorded in the response file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub wordlists_sha256: String,
    pub setting: Setting,
    pub conditions: Vec<ContextSpec>,
    pub m: u32,
    pub master_seed: u64,
    pub model: ModelConfig,
    pub mock: Option<MockConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub fingerprint: String,
    pub config: RunSnapshot,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    dataset_sha256: &'a str,
    wordlists_sha256: &'a str,
    setting: Setting,
    conditions: &'a [ContextSpec],
    m: u32,
    master_seed: u64,
    model_name: &'a str,
    backend: crate::model_backend::BackendKind,
    temperature: f64,
    mock: &'a Option<MockConfig>,
}

impl RunSnapshot {
    pub fn fingerprint(&self) -> String {
        let input = FingerprintInput {
            dataset_sha256: &self.dataset_sha256,
            wordlists_sha256: &self.wordlists_sha256,
            setting: self.setting,
            conditions: &self.conditions,
            m: self.m,
            master_seed: self.master_seed,
            model_name: &self.model.model_name,
            backend: self.model.backend,
            temperature: self.model.temperature,
            mock: &self.mock,
        };
        sha256_hex(
            serde_json::to_string(&input)
                .expect("serializable")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_records: usize,
    pub ok: usize,
    pub recovered: usize,
    pub failed: usize,
    pub output_path: PathBuf,
}

impl RunSummary {
    fn of(file: &ResponseFile) -> Self {
        let mut s = Self {
            total_records: file.records.len(),
            ok: 0,
            recovered: 0,
            failed: 0,
            output_path: file.path.clone(),
        };
        for r in &file.records {
            match r.parse_status {
                ParseStatus::Ok => s.ok += 1,
                ParseStatus::Recovered => s.recovered += 1,
                ParseStatus::Failed(_) => s.failed += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub summary: RunSummary,
    /// Cells executed by this invocation.
    pub cells_executed: usize,
    /// Backend calls made by this invocation, including parse re-queries.
    pub requests_sent: usize,
    /// Whether every cell of the grid is now recorded.
    pub complete: bool,
}

pub fn execute_run(config: &RunConfig) -> Result<RunReport, RunError> {
    Runner::from_config(config)?.start()
}

pub fn resume_run(config: &RunConfig, existing: &Path) -> Result<RunReport, RunError> {
    Runner::from_config(config)?.resume(existing)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    prompt: usize,
    condition: usize,
    rep: u32,
}

pub struct Runner {
    config: RunConfig,
    backend: Box<dyn Backend>,
    prompts: Vec<PromptRecord>,
    lists: WordLists,
    snapshot: RunSnapshot,
    max_cells: Option<usize>,
}

impl Runner {
    pub fn from_config(config: &RunConfig) -> Result<Self, RunError> {
        config.validate()?;
        let backend = build_backend(&config.model, config.mock.as_ref())?;
        Self::with_backend(config, backend)
    }

    /// Uses `backend` instead of the one described by `config.model`.
    pub fn with_backend(config: &RunConfig, backend: Box<dyn Backend>) -> Result<Self, RunError> {
        config.validate()?;
        let dataset_bytes = match std::fs::read(&config.dataset_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(
                    DatasetError::FileNotFound(config.dataset_path.display().to_string()).into(),
                )
            }
            Err(e) => return Err(DatasetError::Io(e).into()),
        };
        let prompts = load_prompts(&config.dataset_path)?;
        if prompts.is_empty() {
            return Err(RunError::InvalidConfig("dataset has no prompts".into()));
        }
        let lists = match &config.wordlists_path {
            Some(p) => WordLists::from_json_file(p)?,
            None => WordLists::bundled(),
        };
        let snapshot = RunSnapshot {
            dataset_path: config.dataset_path.display().to_string(),
            dataset_sha256: sha256_hex(&dataset_bytes),
            wordlists_sha256: sha256_hex(
                serde_json::to_string(&lists)
                    .expect("serializable")
                    .as_bytes(),
            ),
            setting: config.setting,
            conditions: config.conditions.clone(),
            m: config.m,
            master_seed: config.master_seed,
            model: config.model.clone(),
            mock: config.mock.clone(),
        };
        Ok(Self {
            config: config.clone(),
            backend,
            prompts,
            lists,
            snapshot,
            max_cells: None,
        })
    }

    /// Stops after executing at most `n` new cells (the run stays resumable).
    pub fn max_cells(mut self, n: usize) -> Self {
        self.max_cells = Some(n);
        self
    }

    pub fn header(&self) -> RunHeader {
        RunHeader {
            fingerprint: self.snapshot.fingerprint(),
            config: self.snapshot.clone(),
        }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for prompt in 0..self.prompts.len() {
            for condition in 0..self.config.conditions.len() {
                for rep in 0..self.config.m {
                    cells.push(Cell {
                        prompt,
                        condition,
                        rep,
                    });
                }
            }
        }
        cells
    }

    fn cell_key(&self, cell: Cell) -> CellKey {
        CellKey {
            prompt_id: self.prompts[cell.prompt].id.clone(),
            setting: self.config.setting,
            condition: self.config.conditions[cell.condition].tag(),
            rep_index: cell.rep,
        }
    }

    /// Starts a fresh run. Fails if the response file already exists.
    pub fn start(&self) -> Result<RunReport, RunError> {
        let path = self.config.response_path();
        let mut out = Appender::create(&path, &self.header())?;
        let cells = self.cells();
        self.execute(&cells, &mut out, &path)
    }

    /// Executes only the cells missing from `existing`.
    pub fn resume(&self, existing: &Path) -> Result<RunReport, RunError> {
        let (file, intact_len) = read_with_offset(existing)?;
        let header = self.header();
        if file.header.fingerprint != header.fingerprint {
            return Err(RunError::ConfigMismatch(format!(
                "file fingerprint {} differs from {}",
                file.header.fingerprint, header.fingerprint
            )));
        }
        let all = self.cells();
        let valid: HashSet<CellKey> = all.iter().map(|&c| self.cell_key(c)).collect();
        let mut done = HashSet::new();
        for r in &file.records {
            let key = r.key();
            if !valid.contains(&key) {
                return Err(RunError::ConfigMismatch(format!(
                    "record {}/{}/{} is not part of this run",
                    key.prompt_id, key.condition, key.rep_index
                )));
            }
            if !done.insert(key) {
                return Err(RunError::Storage(format!(
                    "duplicate record {}/{}/{}",
                    r.prompt_id, r.condition, r.rep_index
                )));
            }
        }
        let pending: Vec<Cell> = all
            .into_iter()
            .filter(|&c| !done.contains(&self.cell_key(c)))
            .collect();
        info!(
            "resuming: {} of {} cells missing",
            pending.len(),
            valid.len()
        );
        let mut out = Appender::reopen(existing, intact_len)?;
        self.execute(&pending, &mut out, existing)
    }

    fn execute(
        &self,
        pending: &[Cell],
        out: &mut Appender,
        path: &Path,
    ) -> Result<RunReport, RunError> {
        let remaining = pending.len();
        let pending = match self.max_cells {
            Some(n) if n < pending.len() => &pending[..n],
            _ => pending,
        };
        let next = AtomicUsize::new(0);
        let requests = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, ResponseRecord)>();

        let written = std::thread::scope(|scope| -> Result<usize, RunError> {
            for _ in 0..self.config.parallelism.min(pending.len().max(1)) {
                let tx = tx.clone();
                let (next, requests, abort) = (&next, &requests, &abort);
                scope.spawn(move || loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&cell) = pending.get(i) else { break };
                    let record = self.run_cell(cell, requests);
                    if tx.send((i, record)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Single writer: flush records in pending order.
            let mut buffer = BTreeMap::new();
            let mut cursor = 0usize;
            for (i, record) in rx {
                buffer.insert(i, record);
                while let Some(record) = buffer.remove(&cursor) {
                    if let Err(e) = out.write_json(&record) {
                        abort.store(true, Ordering::Relaxed);
                        return Err(e);
                    }
                    cursor += 1;
                }
            }
            Ok(cursor)
        })?;
        out.sync()?;

        let file = ResponseFile::read(path)?;
        Ok(RunReport {
            summary: RunSummary::of(&file),
            cells_executed: written,
            requests_sent: requests.load(Ordering::Relaxed),
            complete: written == remaining,
        })
    }

    fn timestamp(&self) -> String {
        match &self.config.fixed_timestamp {
            Some(t) => t.clone(),
            None => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    fn run_cell(&self, cell: Cell, requests: &AtomicUsize) -> ResponseRecord {
        let prompt = &self.prompts[cell.prompt];
        let spec = self.config.conditions[cell.condition];
        let tag = spec.tag();
        let rep = cell.rep.to_string();
        let seed = self.config.master_seed;

        let mut ctx_stream = RngStream::derive(seed, "context", &[&prompt.id, &tag, &rep]);
        let context = make_context(spec, &self.lists, &mut ctx_stream);
        let injected = inject(&context, prompt.text(self.config.setting))
            .expect("validated prompts are non-empty");
        let k = prompt.k as usize;

        let mut outcome = Err(BackendError::Unavailable("not attempted".into()));
        // One re-query when the reply cannot be parsed.
        for attempt in 0..2 {
            let mut stream = RngStream::derive(
                seed,
                "backend",
                &[&prompt.id, &tag, &rep, &attempt.to_string()],
            );
            requests.fetch_add(1, Ordering::Relaxed);
            outcome = query(self.backend.as_ref(), &injected, k, &mut stream);
            match &outcome {
                Ok(r) if !r.parse_status.is_success() => continue,
                _ => break,
            }
        }

        let (raw_text, items, parse_status) = match outcome {
            Ok(r) => {
                let items = if r.parse_status.is_success() {
                    r.items.iter().map(|s| normalize_item(s)).collect()
                } else {
                    Vec::new()
                };
                (r.raw_text, items, r.parse_status)
            }
            Err(e) => (
                String::new(),
                Vec::new(),
                ParseStatus::Failed(format!("backend: {e}")),
            ),
        };

        ResponseRecord {
            prompt_id: prompt.id.clone(),
            setting: self.config.setting,
            condition: tag,
            rep_index: cell.rep,
            context_text: injected.context_text,
            full_prompt_text: injected.full_text,
            raw_text,
            items,
            parse_status,
            model_name: self.backend.model_name().to_string(),
            timestamp: self.timestamp(),
            seed_fingerprint: ctx_stream.fingerprint(),
        }
    }
}
