//! Experiment database. Each experiment is one file: a JSON header line with
//! the problem and run configuration, then one JSON line per log entry.
//! Record state is always the fold of the log.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::optimizer::{reference_point, Observation, OptimizerState, Source};
use crate::pareto::{hypervolume_clipped, non_dominated_indices};
use crate::problem::{Design, Problem, ProblemError};

pub const SCHEMA_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "oed";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("experiment `{0}` already exists")]
    NameConflict(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid experiment name `{0}`")]
    InvalidName(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("design {index} is invalid: {source}")]
    InvalidDesign { index: usize, source: ProblemError },
    #[error("unknown record {0}")]
    UnknownRecord(u64),
    #[error("record {id}: cannot {transition} a record that is {from}")]
    IllegalTransition {
        id: u64,
        from: Status,
        transition: &'static str,
    },
    #[error("record {id}: {detail}")]
    InvalidPayload { id: u64, detail: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    InEvaluation,
    Evaluated,
    Failed,
}

impl Status {
    pub const ALL: [Status; 4] = [Status::Pending, Status::InEvaluation, Status::Evaluated, Status::Failed];

    pub fn name(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::InEvaluation => "in_evaluation",
            Status::Evaluated => "evaluated",
            Status::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Evaluated | Status::Failed)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// Milliseconds since the Unix epoch, UTC.
pub type Millis = i64;

pub fn format_timestamp(ms: Millis) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(text: &str) -> Result<Millis, String> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.timestamp_millis())
        .map_err(|e| format!("bad timestamp `{text}`: {e}"))
}

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        Utc::now().timestamp_millis()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self(AtomicI64::new(start))
    }

    pub fn set(&self, ms: Millis) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: Millis) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: u64,
    pub design: Design,
    pub status: Status,
    pub objectives: Option<Vec<f64>>,
    pub source: Source,
    pub iteration: u64,
    pub requested_at: Millis,
    pub started_at: Option<Millis>,
    pub finished_at: Option<Millis>,
    pub worker: Option<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transition", rename_all = "snake_case")]
pub enum Transition {
    Insert {
        design: Design,
        source: Source,
        iteration: u64,
    },
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        worker: Option<String>,
    },
    Complete {
        objectives: Vec<f64>,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        note: String,
    },
    Fail {
        #[serde(default)]
        note: String,
    },
}

impl Transition {
    pub fn name(&self) -> &'static str {
        match self {
            Transition::Insert { .. } => "insert",
            Transition::Start { .. } => "start",
            Transition::Complete { .. } => "complete",
            Transition::Fail { .. } => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: Millis,
    pub record_id: u64,
    pub actor: String,
    #[serde(flatten)]
    pub transition: Transition,
}

/// Record state derived from the log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordTable {
    records: Vec<ExperimentRecord>,
    last_timestamp: Millis,
}

impl RecordTable {
    pub fn replay<'a>(problem: &Problem, log: impl IntoIterator<Item = &'a LogEntry>) -> Result<Self, StoreError> {
        let mut t = Self::default();
        for e in log {
            t.apply(problem, e)?;
        }
        Ok(t)
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&ExperimentRecord> {
        id.checked_sub(1).and_then(|i| self.records.get(i as usize))
    }

    pub fn next_id(&self) -> u64 {
        self.records.len() as u64 + 1
    }

    pub fn last_timestamp(&self) -> Millis {
        self.last_timestamp
    }

    /// Validates `entry` against the current state without changing it.
    pub fn check(&self, problem: &Problem, entry: &LogEntry) -> Result<(), StoreError> {
        let id = entry.record_id;
        if entry.timestamp < self.last_timestamp {
            return Err(StoreError::Integrity(format!(
                "log timestamp {} precedes {}",
                entry.timestamp, self.last_timestamp
            )));
        }
        let illegal = |from: Status| StoreError::IllegalTransition {
            id,
            from,
            transition: entry.transition.name(),
        };
        match &entry.transition {
            Transition::Insert { design, .. } => {
                if id != self.next_id() {
                    return Err(StoreError::Integrity(format!("insert of id {id}, expected {}", self.next_id())));
                }
                let normalized = problem.normalize(design)?;
                if &normalized != design {
                    return Err(StoreError::InvalidPayload {
                        id,
                        detail: "design values are not in canonical form".into(),
                    });
                }
            }
            Transition::Start { worker } => {
                let r = self.get(id).ok_or(StoreError::UnknownRecord(id))?;
                if r.status != Status::Pending {
                    return Err(illegal(r.status));
                }
                if worker.as_deref() == Some("") {
                    return Err(StoreError::InvalidPayload {
                        id,
                        detail: "worker id is empty".into(),
                    });
                }
            }
            Transition::Complete { objectives, .. } => {
                let r = self.get(id).ok_or(StoreError::UnknownRecord(id))?;
                if r.status.is_terminal() {
                    return Err(illegal(r.status));
                }
                let m = problem.n_objectives();
                if objectives.len() != m {
                    return Err(StoreError::InvalidPayload {
                        id,
                        detail: format!("expected {m} objectives, got {}", objectives.len()),
                    });
                }
                if objectives.iter().any(|v| !v.is_finite()) {
                    return Err(StoreError::InvalidPayload {
                        id,
                        detail: "objectives must be finite".into(),
                    });
                }
            }
            Transition::Fail { .. } => {
                let r = self.get(id).ok_or(StoreError::UnknownRecord(id))?;
                if r.status.is_terminal() {
                    return Err(illegal(r.status));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, problem: &Problem, entry: &LogEntry) -> Result<(), StoreError> {
        self.check(problem, entry)?;
        self.last_timestamp = entry.timestamp;
        let ts = entry.timestamp;
        match &entry.transition {
            Transition::Insert {
                design,
                source,
                iteration,
            } => self.records.push(ExperimentRecord {
                id: entry.record_id,
                design: design.clone(),
                status: Status::Pending,
                objectives: None,
                source: *source,
                iteration: *iteration,
                requested_at: ts,
                started_at: None,
                finished_at: None,
                worker: None,
                note: String::new(),
            }),
            Transition::Start { worker } => {
                let r = self.get_mut(entry.record_id);
                r.status = Status::InEvaluation;
                r.started_at = Some(ts);
                r.worker = worker.clone();
            }
            Transition::Complete { objectives, note } => {
                let r = self.get_mut(entry.record_id);
                r.status = Status::Evaluated;
                r.objectives = Some(objectives.clone());
                r.finished_at = Some(ts);
                r.note = note.clone();
            }
            Transition::Fail { note } => {
                let r = self.get_mut(entry.record_id);
                r.status = Status::Failed;
                r.finished_at = Some(ts);
                r.note = note.clone();
            }
        }
        Ok(())
    }

    fn get_mut(&mut self, id: u64) -> &mut ExperimentRecord {
        &mut self.records[(id - 1) as usize]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFilter {
    pub status: Option<Status>,
    pub source: Option<Source>,
    pub iteration: Option<u64>,
}

impl RecordFilter {
    pub fn status(status: Status) -> Self {
        Self {
            status: Some(status),
            ..Self::default()
        }
    }

    pub fn matches(&self, r: &ExperimentRecord) -> bool {
        self.status.is_none_or(|s| s == r.status)
            && self.source.is_none_or(|s| s == r.source)
            && self.iteration.is_none_or(|i| i == r.iteration)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub in_evaluation: usize,
    pub evaluated: usize,
    pub failed: usize,
}

impl StatusCounts {
    pub fn get(&self, s: Status) -> usize {
        match s {
            Status::Pending => self.pending,
            Status::InEvaluation => self.in_evaluation,
            Status::Evaluated => self.evaluated,
            Status::Failed => self.failed,
        }
    }

    pub fn total(&self) -> usize {
        self.pending + self.in_evaluation + self.evaluated + self.failed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvPoint {
    pub iteration: u64,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub counts: StatusCounts,
    /// Ids of the non-dominated evaluated records.
    pub front: Vec<u64>,
    /// Reference point in the minimization convention.
    pub reference: Option<Vec<f64>>,
    /// Hypervolume of evaluated records with iteration ≤ each iteration.
    pub hypervolume: Vec<HvPoint>,
}

/// Counts, front and hypervolume trajectory of a record set.
pub fn statistics(problem: &Problem, records: &[ExperimentRecord]) -> Statistics {
    let mut counts = StatusCounts::default();
    for r in records {
        match r.status {
            Status::Pending => counts.pending += 1,
            Status::InEvaluation => counts.in_evaluation += 1,
            Status::Evaluated => counts.evaluated += 1,
            Status::Failed => counts.failed += 1,
        }
    }
    let evaluated: Vec<(&ExperimentRecord, Vec<f64>)> = records
        .iter()
        .filter_map(|r| {
            let y = r.objectives.as_ref()?;
            Some((r, problem.to_internal(y).ok()?))
        })
        .collect();
    if evaluated.is_empty() {
        return Statistics {
            counts,
            ..Statistics::default()
        };
    }
    let ys: Vec<Vec<f64>> = evaluated.iter().map(|(_, y)| y.clone()).collect();
    let front = non_dominated_indices(&ys).into_iter().map(|i| evaluated[i].0.id).collect();
    let reference = reference_point(&ys);
    let mut iterations: Vec<u64> = evaluated.iter().map(|(r, _)| r.iteration).collect();
    iterations.sort_unstable();
    iterations.dedup();
    let hypervolume = iterations
        .into_iter()
        .map(|it| {
            let upto: Vec<Vec<f64>> = evaluated
                .iter()
                .filter(|(r, _)| r.iteration <= it)
                .map(|(_, y)| y.clone())
                .collect();
            HvPoint {
                iteration: it,
                hypervolume: hypervolume_clipped(&upto, &reference).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Statistics {
        counts,
        front,
        reference: Some(reference),
        hypervolume,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    name: String,
    problem: Problem,
    config: RunConfig,
}

pub fn check_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidName(name.to_string()))
    }
}

struct Inner {
    table: RecordTable,
    log: Vec<LogEntry>,
    file: Option<File>,
    version: u64,
}

/// Handle to one experiment. All mutations go through one lock; readers get
/// cloned snapshots.
pub struct Experiment {
    name: String,
    problem: Problem,
    config: RunConfig,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
    changed: Condvar,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Experiment {
    /// An experiment that lives only in memory.
    pub fn in_memory(
        name: &str,
        problem: Problem,
        config: RunConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, StoreError> {
        check_name(name)?;
        problem.validate_ok()?;
        config.validate()?;
        Ok(Arc::new(Self::assemble(name.to_string(), problem, config, clock, RecordTable::default(), Vec::new(), None)))
    }

    fn assemble(
        name: String,
        problem: Problem,
        config: RunConfig,
        clock: Arc<dyn Clock>,
        table: RecordTable,
        log: Vec<LogEntry>,
        file: Option<File>,
    ) -> Self {
        Self {
            name,
            problem,
            config,
            clock,
            inner: Mutex::new(Inner {
                table,
                log,
                file,
                version: 0,
            }),
            changed: Condvar::new(),
        }
    }

    fn create_file(path: &Path, header: &Header, log: &[LogEntry]) -> Result<File, StoreError> {
        let mut file = match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(StoreError::NameConflict(header.name.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut buf = serde_json::to_string(header).expect("header serializes");
        buf.push('\n');
        for e in log {
            buf.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())?;
        file.sync_data()?;
        Ok(file)
    }

    fn open_file(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let file = File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| StoreError::Integrity("empty experiment file".into()))??;
        let version: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| StoreError::Integrity(format!("bad header: {e}")))?;
        let found = version.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let header: Header = serde_json::from_value(version).map_err(|e| StoreError::Integrity(format!("bad header: {e}")))?;
        let mut log = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let entry: LogEntry = serde_json::from_str(&line)
                .map_err(|e| StoreError::Integrity(format!("log line {}: {e}", n + 2)))?;
            log.push(entry);
        }
        let table = RecordTable::replay(&header.problem, &log)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self::assemble(header.name, header.problem, header.config, clock, table, log, Some(file)))
    }

    /// Creates a new experiment file at `path`; fails if it exists.
    pub fn create_at(
        path: &Path,
        name: &str,
        problem: Problem,
        config: RunConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, StoreError> {
        check_name(name)?;
        problem.validate_ok()?;
        config.validate()?;
        Self::persist_at(path, name, problem, config, clock, RecordTable::default(), Vec::new())
    }

    fn persist_at(
        path: &Path,
        name: &str,
        problem: Problem,
        config: RunConfig,
        clock: Arc<dyn Clock>,
        table: RecordTable,
        log: Vec<LogEntry>,
    ) -> Result<Arc<Self>, StoreError> {
        let header = Header {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            problem,
            config,
        };
        let file = Self::create_file(path, &header, &log)?;
        Ok(Arc::new(Self::assemble(
            header.name,
            header.problem,
            header.config,
            clock,
            table,
            log,
            Some(file),
        )))
    }

    /// Opens an experiment file, replaying its log.
    pub fn open_at(path: &Path, clock: Arc<dyn Clock>) -> Result<Arc<Self>, StoreError> {
        if !path.exists() {
            return Err(StoreError::UnknownExperiment(path.display().to_string()));
        }
        Ok(Arc::new(Self::open_file(path, clock)?))
    }

    /// Imports an archive into a new experiment file at `path`. Nothing is
    /// written unless the archive checks out.
    pub fn import_at(dir: &Path, path: &Path, name: Option<&str>, clock: Arc<dyn Clock>) -> Result<Arc<Self>, StoreError> {
        let a = crate::archive::read(dir)?;
        let name = name.map(str::to_string).unwrap_or(a.name);
        check_name(&name)?;
        Self::persist_at(path, &name, a.problem, a.config, clock, a.table, a.log)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Validates, persists and applies `transitions` as one unit.
    fn commit(&self, inner: &mut Inner, entries: Vec<LogEntry>) -> Result<(), StoreError> {
        let mut scratch = None;
        if entries.len() > 1 {
            let mut t = inner.table.clone();
            for e in &entries {
                t.apply(&self.problem, e)?;
            }
            scratch = Some(t);
        } else if let Some(e) = entries.first() {
            inner.table.check(&self.problem, e)?;
        }
        if let Some(file) = inner.file.as_mut() {
            let mut buf = String::new();
            for e in &entries {
                buf.push_str(&serde_json::to_string(e).expect("log entry serializes"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.sync_data()?;
        }
        match scratch {
            Some(t) => inner.table = t,
            None => {
                for e in &entries {
                    inner.table.apply(&self.problem, e)?;
                }
            }
        }
        inner.log.extend(entries);
        inner.version += 1;
        self.changed.notify_all();
        Ok(())
    }

    fn stamp(&self, inner: &Inner) -> Millis {
        self.clock.now_ms().max(inner.table.last_timestamp())
    }

    /// Inserts designs as pending records; all or nothing.
    pub fn insert_pending(&self, designs: &[Design], source: Source, iteration: u64, actor: &str) -> Result<Vec<u64>, StoreError> {
        let normalized = designs
            .iter()
            .enumerate()
            .map(|(index, d)| {
                self.problem
                    .normalize(d)
                    .map_err(|source| StoreError::InvalidDesign { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if normalized.is_empty() {
            return Ok(Vec::new());
        }
        let mut inner = self.lock();
        let ts = self.stamp(&inner);
        let first = inner.table.next_id();
        let entries = normalized
            .into_iter()
            .enumerate()
            .map(|(k, design)| LogEntry {
                timestamp: ts,
                record_id: first + k as u64,
                actor: actor.to_string(),
                transition: Transition::Insert {
                    design,
                    source,
                    iteration,
                },
            })
            .collect::<Vec<_>>();
        let ids = entries.iter().map(|e| e.record_id).collect();
        self.commit(&mut inner, entries)?;
        Ok(ids)
    }

    /// Applies a non-insert transition to record `id`.
    pub fn transition(&self, id: u64, transition: Transition, actor: &str) -> Result<ExperimentRecord, StoreError> {
        if matches!(transition, Transition::Insert { .. }) {
            return Err(StoreError::InvalidPayload {
                id,
                detail: "use insert_pending to create records".into(),
            });
        }
        let mut inner = self.lock();
        let entry = LogEntry {
            timestamp: self.stamp(&inner),
            record_id: id,
            actor: actor.to_string(),
            transition,
        };
        self.commit(&mut inner, vec![entry])?;
        Ok(inner.table.get(id).cloned().expect("record exists after commit"))
    }

    pub fn start(&self, id: u64, worker: Option<&str>, actor: &str) -> Result<ExperimentRecord, StoreError> {
        self.transition(
            id,
            Transition::Start {
                worker: worker.map(str::to_string),
            },
            actor,
        )
    }

    pub fn complete(&self, id: u64, objectives: Vec<f64>, note: &str, actor: &str) -> Result<ExperimentRecord, StoreError> {
        self.transition(
            id,
            Transition::Complete {
                objectives,
                note: note.to_string(),
            },
            actor,
        )
    }

    pub fn fail(&self, id: u64, note: &str, actor: &str) -> Result<ExperimentRecord, StoreError> {
        self.transition(id, Transition::Fail { note: note.to_string() }, actor)
    }

    /// Atomically moves the lowest-id pending record to in_evaluation.
    pub fn claim_next(&self, worker: &str, actor: &str) -> Result<Option<ExperimentRecord>, StoreError> {
        let mut inner = self.lock();
        let Some(id) = inner.table.records().iter().find(|r| r.status == Status::Pending).map(|r| r.id) else {
            return Ok(None);
        };
        let entry = LogEntry {
            timestamp: self.stamp(&inner),
            record_id: id,
            actor: actor.to_string(),
            transition: Transition::Start {
                worker: Some(worker.to_string()),
            },
        };
        self.commit(&mut inner, vec![entry])?;
        Ok(inner.table.get(id).cloned())
    }

    pub fn record(&self, id: u64) -> Option<ExperimentRecord> {
        self.lock().table.get(id).cloned()
    }

    pub fn records(&self, filter: &RecordFilter) -> Vec<ExperimentRecord> {
        self.lock().table.records().iter().filter(|r| filter.matches(r)).cloned().collect()
    }

    pub fn all_records(&self) -> Vec<ExperimentRecord> {
        self.lock().table.records().to_vec()
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.lock().log.clone()
    }

    pub fn counts(&self) -> StatusCounts {
        let inner = self.lock();
        let mut c = StatusCounts::default();
        for r in inner.table.records() {
            match r.status {
                Status::Pending => c.pending += 1,
                Status::InEvaluation => c.in_evaluation += 1,
                Status::Evaluated => c.evaluated += 1,
                Status::Failed => c.failed += 1,
            }
        }
        c
    }

    pub fn statistics(&self) -> Statistics {
        statistics(&self.problem, &self.all_records())
    }

    /// Bumped on every committed mutation.
    pub fn version(&self) -> u64 {
        self.lock().version
    }

    /// Blocks until the version differs from `seen` or `timeout` passes, and
    /// returns the current version.
    pub fn wait_for_change(&self, seen: u64, timeout: Duration) -> u64 {
        let inner = self.lock();
        let (inner, _) = self
            .changed
            .wait_timeout_while(inner, timeout, |i| i.version == seen)
            .unwrap_or_else(|p| p.into_inner());
        inner.version
    }

    /// Evaluated data plus every design already issued, for the optimizer.
    pub fn optimizer_state(&self) -> OptimizerState {
        let inner = self.lock();
        let mut state = OptimizerState::default();
        for r in inner.table.records() {
            if r.source == Source::Initial {
                state.initial_issued += 1;
            }
            match &r.objectives {
                Some(y) if r.status == Status::Evaluated => state.evaluated.push(Observation {
                    design: r.design.clone(),
                    objectives: y.clone(),
                }),
                _ => state.pending.push(r.design.clone()),
            }
        }
        state
    }

    /// One past the highest iteration recorded so far.
    pub fn next_iteration(&self) -> u64 {
        self.lock().table.records().iter().map(|r| r.iteration + 1).max().unwrap_or(0)
    }

    pub fn export(&self, dir: &Path) -> Result<(), StoreError> {
        let (records, log) = {
            let inner = self.lock();
            (inner.table.records().to_vec(), inner.log.clone())
        };
        crate::archive::write(dir, &self.name, &self.problem, &self.config, &records, &log)
    }

    /// The export archive as file name → contents.
    pub fn export_files(&self) -> Result<BTreeMap<String, String>, StoreError> {
        let (records, log) = {
            let inner = self.lock();
            (inner.table.records().to_vec(), inner.log.clone())
        };
        crate::archive::render(&self.name, &self.problem, &self.config, &records, &log)
    }

    /// Loads an exported archive into memory, checking it against its log.
    pub fn import(dir: &Path, clock: Arc<dyn Clock>) -> Result<Arc<Self>, StoreError> {
        let a = crate::archive::read(dir)?;
        Ok(Arc::new(Self::assemble(a.name, a.problem, a.config, clock, a.table, a.log, None)))
    }
}

/// A directory of experiment files.
pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    open: Mutex<BTreeMap<String, Arc<Experiment>>>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            clock,
            open: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.{FILE_EXTENSION}"))
    }

    fn cache(&self) -> MutexGuard<'_, BTreeMap<String, Arc<Experiment>>> {
        self.open.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn create_experiment(&self, name: &str, problem: Problem, config: RunConfig) -> Result<Arc<Experiment>, StoreError> {
        check_name(name)?;
        problem.validate_ok()?;
        config.validate()?;
        self.persist(name, problem, config, RecordTable::default(), Vec::new())
    }

    fn persist(
        &self,
        name: &str,
        problem: Problem,
        config: RunConfig,
        table: RecordTable,
        log: Vec<LogEntry>,
    ) -> Result<Arc<Experiment>, StoreError> {
        let mut cache = self.cache();
        if cache.contains_key(name) {
            return Err(StoreError::NameConflict(name.to_string()));
        }
        let exp = Experiment::persist_at(&self.path_for(name), name, problem, config, self.clock.clone(), table, log)?;
        cache.insert(name.to_string(), exp.clone());
        Ok(exp)
    }

    pub fn experiment(&self, name: &str) -> Result<Arc<Experiment>, StoreError> {
        check_name(name).map_err(|_| StoreError::UnknownExperiment(name.to_string()))?;
        let mut cache = self.cache();
        if let Some(e) = cache.get(name) {
            return Ok(e.clone());
        }
        let path = self.path_for(name);
        if !path.exists() {
            return Err(StoreError::UnknownExperiment(name.to_string()));
        }
        let exp = Arc::new(Experiment::open_file(&path, self.clock.clone())?);
        cache.insert(name.to_string(), exp.clone());
        Ok(exp)
    }

    /// Removes the experiment file. Open handles keep working in memory.
    pub fn delete(&self, name: &str) -> Result<(), StoreError> {
        check_name(name).map_err(|_| StoreError::UnknownExperiment(name.to_string()))?;
        let mut cache = self.cache();
        let path = self.path_for(name);
        if !path.exists() {
            return Err(StoreError::UnknownExperiment(name.to_string()));
        }
        fs::remove_file(path)?;
        cache.remove(name);
        Ok(())
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(FILE_EXTENSION) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    /// Imports an archive as a new persisted experiment, optionally renamed.
    /// Nothing is created unless the whole archive checks out.
    pub fn import(&self, dir: &Path, rename: Option<&str>) -> Result<Arc<Experiment>, StoreError> {
        let a = crate::archive::read(dir)?;
        let name = rename.map(str::to_string).unwrap_or(a.name);
        check_name(&name)?;
        self.persist(&name, a.problem, a.config, a.table, a.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ObjectiveSpec, Value, VariableSpec};

    fn problem() -> Problem {
        Problem::new(
            vec![VariableSpec::continuous("x", 0.0, 1.0), VariableSpec::discrete("n", 0, 5)],
            vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::maximize("f2")],
        )
    }

    fn design(x: f64, n: i64) -> Design {
        Design::new().with("x", Value::Real(x)).with("n", Value::Int(n))
    }

    fn exp() -> Arc<Experiment> {
        Experiment::in_memory("t", problem(), RunConfig::default(), Arc::new(ManualClock::new(1_000))).unwrap()
    }

    #[test]
    fn insert_is_atomic_and_ids_increase() {
        let e = exp();
        assert_eq!(e.insert_pending(&[], Source::Manual, 0, "u").unwrap(), Vec::<u64>::new());
        let ids = e
            .insert_pending(&[design(0.1, 1), design(0.2, 2), design(0.3, 3)], Source::Initial, 0, "u")
            .unwrap();
        assert_eq!(ids, vec![1, 2, 3]);
        let err = e
            .insert_pending(&[design(0.1, 1), design(2.0, 1), design(0.3, 3)], Source::Model, 1, "u")
            .unwrap_err();
        assert!(matches!(err, StoreError::InvalidDesign { index: 1, .. }));
        assert_eq!(e.all_records().len(), 3);
        assert!(e.all_records().iter().all(|r| r.status == Status::Pending));
        assert_eq!(e.insert_pending(&[design(0.5, 0)], Source::Model, 1, "u").unwrap(), vec![4]);
    }

    #[test]
    fn transitions_follow_the_state_machine() {
        let e = exp();
        e.insert_pending(&[design(0.1, 1), design(0.2, 2)], Source::Initial, 0, "u").unwrap();
        let r = e.start(1, Some("w1"), "u").unwrap();
        assert_eq!(r.status, Status::InEvaluation);
        assert_eq!(r.started_at, Some(1_000));
        let r = e.complete(1, vec![1.2, 3.4], "", "u").unwrap();
        assert_eq!(r.objectives, Some(vec![1.2, 3.4]));
        assert!(r.finished_at.is_some());
        assert!(matches!(e.start(1, None, "u"), Err(StoreError::IllegalTransition { .. })));
        assert!(matches!(e.complete(2, vec![1.0], "", "u"), Err(StoreError::InvalidPayload { .. })));
        assert!(matches!(e.complete(2, vec![1.0, f64::NAN], "", "u"), Err(StoreError::InvalidPayload { .. })));
        // manual entry skips in_evaluation
        assert_eq!(e.complete(2, vec![0.5, 0.5], "", "u").unwrap().status, Status::Evaluated);
        assert!(matches!(e.fail(9, "", "u"), Err(StoreError::UnknownRecord(9))));
    }

    #[test]
    fn replay_matches_state() {
        let e = exp();
        e.insert_pending(&[design(0.1, 1), design(0.2, 2), design(0.3, 2)], Source::Initial, 0, "u").unwrap();
        e.claim_next("w", "u").unwrap();
        e.complete(1, vec![1.0, 2.0], "ok", "u").unwrap();
        e.fail(2, "boom", "u").unwrap();
        let replayed = RecordTable::replay(e.problem(), &e.log()).unwrap();
        assert_eq!(replayed.records(), e.all_records().as_slice());
    }

    #[test]
    fn statistics_front_and_trajectory() {
        let e = exp();
        let ds: Vec<Design> = (0..4).map(|i| design(i as f64 / 4.0, i)).collect();
        e.insert_pending(&ds[..2], Source::Initial, 0, "u").unwrap();
        e.insert_pending(&ds[2..], Source::Model, 1, "u").unwrap();
        // internal (f1, -f2): (1,4) (2,2) (3,1) (4,4) -> last is dominated
        for (id, y) in [(1, [1.0, -4.0]), (2, [2.0, -2.0]), (3, [3.0, -1.0]), (4, [4.0, -4.0])] {
            e.complete(id, y.to_vec(), "", "u").unwrap();
        }
        let s = e.statistics();
        assert_eq!(s.counts.evaluated, 4);
        assert_eq!(s.front, vec![1, 2, 3]);
        assert_eq!(s.hypervolume.len(), 2);
        assert!(s.hypervolume[1].hypervolume >= s.hypervolume[0].hypervolume);
        let empty = exp().statistics();
        assert!(empty.front.is_empty() && empty.hypervolume.is_empty());
        let pending = e.records(&RecordFilter::status(Status::Pending));
        assert!(pending.is_empty());
    }

    #[test]
    fn persisted_store_reopens() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path()).unwrap();
            let e = store.create_experiment("demo", problem(), RunConfig::default()).unwrap();
            e.insert_pending(&[design(0.25, 3)], Source::Manual, 0, "u").unwrap();
            e.complete(1, vec![0.1, 0.2], "", "u").unwrap();
            assert!(matches!(
                store.create_experiment("demo", problem(), RunConfig::default()),
                Err(StoreError::NameConflict(_))
            ));
        }
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.list().unwrap(), vec!["demo".to_string()]);
        let e = store.experiment("demo").unwrap();
        assert_eq!(e.all_records()[0].objectives, Some(vec![0.1, 0.2]));
        assert!(matches!(store.experiment("nope"), Err(StoreError::UnknownExperiment(_))));
    }

    #[test]
    fn timestamps_round_trip() {
        for ms in [0, 1_760_000_000_123, -5] {
            assert_eq!(parse_timestamp(&format_timestamp(ms)).unwrap(), ms);
        }
    }
}
