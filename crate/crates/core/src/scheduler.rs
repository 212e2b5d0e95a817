//! The optimize/evaluate loop in sequential, synchronous-batch and
//! asynchronous-batch modes.
//!
//! [`run`] owns the state machine. An [`Executor`] decides how evaluations
//! happen: [`VirtualExecutor`] on a simulated clock, [`ThreadExecutor`] with
//! one thread per evaluation, [`ManualExecutor`] waiting for results entered
//! through the store by someone else.

use std::cmp::{Ordering as CmpOrdering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::Benchmark;
use crate::config::{EvalMode, RunConfig};
use crate::optimizer::{suggest, OptimizerError, SuggestionBatch};
use crate::problem::{Design, Problem};
use crate::program::{self, ProgramError};
use crate::store::{Experiment, ExperimentRecord, ManualClock, Status, StoreError};

/// Consecutive suggestion failures tolerated before aborting.
pub const MAX_SUGGEST_FAILURES: usize = 3;
const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("suggestion failed {attempts} times in a row; last error: {last}")]
    SuggestFailed { attempts: usize, last: String },
}

impl From<ProgramError> for SchedulerError {
    fn from(e: ProgramError) -> Self {
        SchedulerError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    None,
    BudgetExhausted,
    UserStop,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub mode: EvalMode,
    pub batch_size: usize,
    pub in_flight: BTreeSet<u64>,
    pub budget_remaining: usize,
    pub stopping: Stopping,
    pub clock: f64,
}

/// Shared flag to end a run. A graceful stop lets in-flight evaluations
/// finish; a hard stop marks them failed("aborted").
#[derive(Debug, Clone, Default)]
pub struct StopSignal {
    requested: Arc<AtomicBool>,
    hard: Arc<AtomicBool>,
}

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request(&self) {
        self.requested.store(true, Ordering::SeqCst);
    }

    pub fn request_hard(&self) {
        self.hard.store(true, Ordering::SeqCst);
        self.request();
    }

    pub fn is_requested(&self) -> bool {
        self.requested.load(Ordering::SeqCst)
    }

    pub fn is_hard(&self) -> bool {
        self.hard.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Objectives { values: Vec<f64>, note: String },
    Failed { reason: String },
    /// The result was already written to the store by someone else.
    Recorded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub record_id: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Suggest { time: f64, count: usize, iteration: u64 },
    Dispatch { time: f64, record_id: u64 },
    Complete { time: f64, record_id: u64, status: Status },
}

impl TraceEvent {
    pub fn time(&self) -> f64 {
        match self {
            TraceEvent::Suggest { time, .. } | TraceEvent::Dispatch { time, .. } | TraceEvent::Complete { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// Time of the last completion (0 for an empty trace).
    pub fn makespan(&self) -> f64 {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Complete { .. }))
            .map(TraceEvent::time)
            .fold(0.0, f64::max)
    }

    pub fn completions(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, TraceEvent::Complete { .. })).count()
    }

    /// Completions per unit time.
    pub fn throughput(&self) -> f64 {
        let t = self.makespan();
        if t > 0.0 {
            self.completions() as f64 / t
        } else {
            0.0
        }
    }

    /// Largest number of simultaneously running evaluations.
    pub fn max_in_flight(&self) -> usize {
        let mut running = BTreeSet::new();
        let mut max = 0;
        for e in &self.events {
            match e {
                TraceEvent::Dispatch { record_id, .. } => {
                    running.insert(*record_id);
                    max = max.max(running.len());
                }
                TraceEvent::Complete { record_id, .. } => {
                    running.remove(record_id);
                }
                TraceEvent::Suggest { .. } => {}
            }
        }
        max
    }

    /// Async property: after the initial fill, each completion that is
    /// followed by a dispatch is followed by exactly one suggest-of-one and
    /// exactly one dispatch before the next completion.
    pub fn check_async_replacement(&self) -> Result<(), String> {
        let first_complete = self.events.iter().position(|e| matches!(e, TraceEvent::Complete { .. }));
        let Some(start) = first_complete else {
            return Ok(());
        };
        let mut i = start;
        while i < self.events.len() {
            let next = self.events[i + 1..]
                .iter()
                .position(|e| matches!(e, TraceEvent::Complete { .. }))
                .map_or(self.events.len(), |p| i + 1 + p);
            let window = &self.events[i + 1..next];
            let suggests: Vec<usize> = window
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::Suggest { count, .. } => Some(*count),
                    _ => None,
                })
                .collect();
            let dispatches = window.iter().filter(|e| matches!(e, TraceEvent::Dispatch { .. })).count();
            if dispatches > 0 && (suggests != [1] || dispatches != 1) {
                return Err(format!(
                    "after event {i}: {} suggests {:?} and {dispatches} dispatches",
                    suggests.len(),
                    suggests
                ));
            }
            i = next;
        }
        Ok(())
    }

    /// Sync property: no dispatch while an earlier dispatch is unfinished,
    /// except within one dispatch burst.
    pub fn check_sync_barrier(&self) -> Result<(), String> {
        let mut running = BTreeSet::new();
        let mut burst_open = false;
        for (k, e) in self.events.iter().enumerate() {
            match e {
                TraceEvent::Dispatch { record_id, .. } => {
                    if !running.is_empty() && !burst_open {
                        return Err(format!("event {k}: dispatch while {running:?} in flight"));
                    }
                    running.insert(*record_id);
                    burst_open = true;
                }
                TraceEvent::Complete { record_id, .. } => {
                    running.remove(record_id);
                    burst_open = false;
                }
                TraceEvent::Suggest { .. } => {
                    if !running.is_empty() {
                        return Err(format!("event {k}: suggest while {running:?} in flight"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Produces designs for the scheduler.
pub trait Suggester {
    fn suggest(&mut self, experiment: &Experiment, count: usize, iteration: u64) -> Result<SuggestionBatch, OptimizerError>;
}

/// The optimizer pipeline configured by a run configuration.
#[derive(Debug, Clone)]
pub struct OptimizerSuggester {
    pub config: RunConfig,
}

impl Suggester for OptimizerSuggester {
    fn suggest(&mut self, experiment: &Experiment, count: usize, iteration: u64) -> Result<SuggestionBatch, OptimizerError> {
        suggest(experiment.problem(), &experiment.optimizer_state(), &self.config, count, iteration)
    }
}

impl<F> Suggester for F
where
    F: FnMut(&Experiment, usize, u64) -> Result<SuggestionBatch, OptimizerError>,
{
    fn suggest(&mut self, experiment: &Experiment, count: usize, iteration: u64) -> Result<SuggestionBatch, OptimizerError> {
        self(experiment, count, iteration)
    }
}

/// Runs evaluations on behalf of the scheduler.
pub trait Executor {
    /// Starts evaluating a pending record, applying any store transition
    /// that marks the start.
    fn launch(&mut self, experiment: &Experiment, record: &ExperimentRecord) -> Result<(), SchedulerError>;
    /// Blocks for the next completion; `None` if a hard stop interrupted.
    fn next_completion(&mut self, experiment: &Experiment, stop: &StopSignal) -> Option<Completion>;
    /// Current time in the executor's units.
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub state: SchedulerState,
    pub trace: Trace,
    pub evaluated: usize,
    pub failed: usize,
}

fn budget_used(experiment: &Experiment, config: &RunConfig) -> usize {
    let c = experiment.counts();
    let failed = if config.failed_consume_budget { c.failed } else { 0 };
    c.pending + c.in_evaluation + c.evaluated + failed
}

fn apply_completion(experiment: &Experiment, c: &Completion, actor: &str) -> Status {
    let failed = |note: &str| {
        let _ = experiment.fail(c.record_id, note, actor);
        Status::Failed
    };
    match &c.outcome {
        Outcome::Objectives { values, note } => match experiment.complete(c.record_id, values.clone(), note, actor) {
            Ok(r) => r.status,
            Err(StoreError::InvalidPayload { detail, .. }) => failed(&format!("malformed program output: {detail}")),
            Err(_) => experiment.record(c.record_id).map_or(Status::Failed, |r| r.status),
        },
        Outcome::Failed { reason } => failed(reason),
        Outcome::Recorded => experiment.record(c.record_id).map_or(Status::Failed, |r| r.status),
    }
}

/// Inserts up to `limit` suggestions as pending records, grouped by source.
fn insert_batch(
    experiment: &Experiment,
    batch: SuggestionBatch,
    limit: usize,
    iteration: u64,
    actor: &str,
) -> Result<Vec<u64>, StoreError> {
    let mut by_source: Vec<(crate::optimizer::Source, Vec<Design>)> = Vec::new();
    for s in batch.suggestions.into_iter().take(limit) {
        match by_source.last_mut() {
            Some((src, ds)) if *src == s.source => ds.push(s.design),
            _ => by_source.push((s.source, vec![s.design])),
        }
    }
    let mut ids = Vec::new();
    for (source, designs) in by_source {
        ids.extend(experiment.insert_pending(&designs, source, iteration, actor)?);
    }
    Ok(ids)
}

/// One manual-mode step: when nothing is pending, suggests a batch within
/// the remaining budget and stores it. Returns the pending records.
pub fn suggest_step(
    experiment: &Experiment,
    config: &RunConfig,
    suggester: &mut dyn Suggester,
) -> Result<Vec<ExperimentRecord>, SchedulerError> {
    config.validate().map_err(|e| SchedulerError::Config(e.to_string()))?;
    let pending = |e: &Experiment| e.records(&crate::store::RecordFilter::status(Status::Pending));
    let existing = pending(experiment);
    if !existing.is_empty() {
        return Ok(existing);
    }
    let batch = match config.eval_mode {
        EvalMode::Sequential => 1,
        _ => config.batch_size,
    };
    let want = batch.min(config.budget.saturating_sub(budget_used(experiment, config)));
    if want == 0 {
        return Ok(Vec::new());
    }
    let iteration = experiment.next_iteration().max(1);
    let mut last = String::new();
    for _ in 0..MAX_SUGGEST_FAILURES {
        match suggester.suggest(experiment, want, iteration) {
            Ok(b) if !b.is_empty() => {
                insert_batch(experiment, b, want, iteration, "scheduler")?;
                return Ok(pending(experiment));
            }
            Ok(_) => last = "no designs suggested".into(),
            Err(e) => last = e.to_string(),
        }
    }
    Err(SchedulerError::SuggestFailed {
        attempts: MAX_SUGGEST_FAILURES,
        last,
    })
}

/// Runs the optimize/evaluate loop until the budget is spent, a stop is
/// requested or suggestions keep failing. Pending records already in the
/// experiment are dispatched before new suggestions.
pub fn run(
    experiment: &Experiment,
    config: &RunConfig,
    suggester: &mut dyn Suggester,
    executor: &mut dyn Executor,
    stop: &StopSignal,
) -> Result<RunReport, SchedulerError> {
    config.validate().map_err(|e| SchedulerError::Config(e.to_string()))?;
    let actor = "scheduler";
    let batch = match config.eval_mode {
        EvalMode::Sequential => 1,
        _ => config.batch_size,
    };
    let mut state = SchedulerState {
        mode: config.eval_mode,
        batch_size: batch,
        in_flight: BTreeSet::new(),
        budget_remaining: config.budget.saturating_sub(budget_used(experiment, config)),
        stopping: Stopping::None,
        clock: executor.now(),
    };
    let mut backlog: Vec<u64> = experiment
        .all_records()
        .iter()
        .filter(|r| r.status == Status::Pending)
        .map(|r| r.id)
        .collect();
    backlog.reverse();
    let mut trace = Trace::default();
    let mut iteration = experiment.next_iteration().max(1);
    let mut failures = 0;
    let mut last_error = String::new();
    let mut last_suggest: Option<f64> = None;

    loop {
        if stop.is_requested() && state.stopping == Stopping::None {
            state.stopping = Stopping::UserStop;
        }
        if stop.is_hard() || (config.hard_stop && state.stopping == Stopping::UserStop) {
            for &id in &state.in_flight {
                let _ = experiment.fail(id, "aborted", actor);
            }
            state.in_flight.clear();
            state.stopping = Stopping::UserStop;
            break;
        }
        state.clock = executor.now();
        if state.stopping == Stopping::None {
            let free = match config.eval_mode {
                EvalMode::Sequential | EvalMode::SyncBatch if state.in_flight.is_empty() => batch,
                EvalMode::AsyncBatch => batch - state.in_flight.len(),
                _ => 0,
            };
            let mut to_dispatch = Vec::new();
            while to_dispatch.len() < free {
                match backlog.pop() {
                    Some(id) => to_dispatch.push(id),
                    None => break,
                }
            }
            let want = (free - to_dispatch.len()).min(state.budget_remaining);
            let throttled = config.eval_mode == EvalMode::AsyncBatch
                && !state.in_flight.is_empty()
                && last_suggest.is_some_and(|t| state.clock - t < config.async_min_refit_interval);
            if want > 0 && !throttled {
                trace.events.push(TraceEvent::Suggest {
                    time: state.clock,
                    count: want,
                    iteration,
                });
                last_suggest = Some(state.clock);
                match suggester.suggest(experiment, want, iteration) {
                    Ok(b) if !b.is_empty() => {
                        failures = 0;
                        let ids = insert_batch(experiment, b, want, iteration, actor)?;
                        state.budget_remaining -= ids.len();
                        to_dispatch.extend(ids);
                        iteration += 1;
                    }
                    Ok(_) => {
                        failures += 1;
                        last_error = "no designs suggested".into();
                    }
                    Err(e) => {
                        failures += 1;
                        last_error = e.to_string();
                    }
                }
                if failures >= MAX_SUGGEST_FAILURES {
                    state.stopping = Stopping::Aborted;
                }
            }
            for id in to_dispatch {
                let record = experiment.record(id).ok_or(StoreError::UnknownRecord(id))?;
                executor.launch(experiment, &record)?;
                state.in_flight.insert(id);
                trace.events.push(TraceEvent::Dispatch {
                    time: state.clock,
                    record_id: id,
                });
            }
            if state.in_flight.is_empty() && state.stopping == Stopping::None {
                if state.budget_remaining == 0 && backlog.is_empty() {
                    state.stopping = Stopping::BudgetExhausted;
                } else if failures > 0 {
                    // Nothing running to wait for: retry right away.
                    continue;
                }
            }
        }
        if state.in_flight.is_empty() {
            break;
        }
        let Some(c) = executor.next_completion(experiment, stop) else {
            continue;
        };
        if !state.in_flight.remove(&c.record_id) {
            continue;
        }
        let status = apply_completion(experiment, &c, actor);
        if status == Status::Failed && !config.failed_consume_budget {
            state.budget_remaining += 1;
        }
        state.clock = executor.now();
        trace.events.push(TraceEvent::Complete {
            time: state.clock,
            record_id: c.record_id,
            status,
        });
    }
    if state.stopping == Stopping::None {
        state.stopping = Stopping::BudgetExhausted;
    }
    let counts = experiment.counts();
    let report = RunReport {
        state,
        trace,
        evaluated: counts.evaluated,
        failed: counts.failed,
    };
    if report.state.stopping == Stopping::Aborted {
        return Err(SchedulerError::SuggestFailed {
            attempts: failures,
            last: last_error,
        });
    }
    Ok(report)
}

/// Seeded distribution of evaluation durations, drawn in dispatch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationModel {
    Constant { value: f64 },
    /// Uniform choice among `values`.
    Choice { values: Vec<f64> },
    /// `values` repeated in order.
    Cycle { values: Vec<f64> },
    Uniform { low: f64, high: f64 },
}

impl DurationModel {
    pub fn sampler(&self, seed: u64) -> DurationSampler {
        DurationSampler {
            model: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            drawn: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DurationSampler {
    model: DurationModel,
    rng: ChaCha8Rng,
    drawn: usize,
}

impl DurationSampler {
    pub fn next_duration(&mut self) -> f64 {
        let k = self.drawn;
        self.drawn += 1;
        match &self.model {
            DurationModel::Constant { value } => *value,
            DurationModel::Choice { values } => values[self.rng.random_range(0..values.len())],
            DurationModel::Cycle { values } => values[k % values.len()],
            DurationModel::Uniform { low, high } => self.rng.random_range(*low..=*high),
        }
    }
}

type InstantEvaluator = Box<dyn FnMut(&ExperimentRecord) -> Outcome>;

struct Pending {
    finish: f64,
    seq: u64,
    record_id: u64,
    outcome: Outcome,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.finish.total_cmp(&other.finish).then(self.seq.cmp(&other.seq))
    }
}

/// Simulated clock: each launch draws a duration, the result is computed
/// immediately and delivered when the clock reaches its finish time.
pub struct VirtualExecutor {
    now: f64,
    seq: u64,
    durations: DurationSampler,
    evaluate: InstantEvaluator,
    queue: BinaryHeap<Reverse<Pending>>,
    clock: Option<Arc<ManualClock>>,
}

impl VirtualExecutor {
    pub fn new(durations: DurationSampler, evaluate: impl FnMut(&ExperimentRecord) -> Outcome + 'static) -> Self {
        Self {
            now: 0.0,
            seq: 0,
            durations,
            evaluate: Box::new(evaluate),
            queue: BinaryHeap::new(),
            clock: None,
        }
    }

    /// Keeps a store clock in step with virtual time (1 unit = 1 s).
    pub fn with_store_clock(mut self, clock: Arc<ManualClock>) -> Self {
        self.clock = Some(clock);
        self
    }
}

impl Executor for VirtualExecutor {
    fn launch(&mut self, experiment: &Experiment, record: &ExperimentRecord) -> Result<(), SchedulerError> {
        experiment.start(record.id, Some("sim"), "scheduler")?;
        let d = self.durations.next_duration();
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            finish: self.now + d,
            seq: self.seq,
            record_id: record.id,
            outcome: (self.evaluate)(record),
        }));
        Ok(())
    }

    fn next_completion(&mut self, _: &Experiment, _: &StopSignal) -> Option<Completion> {
        let Reverse(p) = self.queue.pop()?;
        self.now = p.finish;
        if let Some(c) = &self.clock {
            c.set((p.finish * 1000.0).round() as i64);
        }
        Some(Completion {
            record_id: p.record_id,
            outcome: p.outcome,
        })
    }

    fn now(&self) -> f64 {
        self.now
    }
}

/// Where evaluations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorBinding {
    ExternalProgram {
        path: PathBuf,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    Manual,
    /// A synthetic benchmark function evaluated in-process.
    Builtin { benchmark: Benchmark },
}

fn default_timeout() -> f64 {
    program::DEFAULT_TIMEOUT_SECS
}

impl EvaluatorBinding {
    /// Checks the binding before anything is dispatched.
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if let EvaluatorBinding::ExternalProgram { path, timeout_secs } = self {
            if !(*timeout_secs > 0.0) {
                return Err(SchedulerError::Config("timeout must be positive".into()));
            }
            program::check_executable(path)?;
        }
        Ok(())
    }

    pub fn executor(&self, problem: &Problem) -> Result<Box<dyn Executor + Send>, SchedulerError> {
        self.validate()?;
        Ok(match self {
            EvaluatorBinding::Manual => Box::new(ManualExecutor::new()),
            EvaluatorBinding::ExternalProgram { path, timeout_secs } => {
                let path = path.clone();
                let timeout = Duration::from_secs_f64(*timeout_secs);
                let problem = problem.clone();
                Box::new(ThreadExecutor::new(move |design, id| {
                    if let Some(reason) = blackbox_rejection(&problem, design) {
                        return Outcome::Failed { reason };
                    }
                    program_outcome(program::run(&path, design, id, timeout))
                }))
            }
            EvaluatorBinding::Builtin { benchmark } => {
                let b = *benchmark;
                let problem = problem.clone();
                Box::new(ThreadExecutor::new(move |design, _| match b.evaluate_design(&problem, design) {
                    Ok(values) => Outcome::Objectives {
                        values,
                        note: String::new(),
                    },
                    Err(e) => Outcome::Failed { reason: e.to_string() },
                }))
            }
        })
    }
}

fn blackbox_rejection(problem: &Problem, design: &Design) -> Option<String> {
    if !problem.has_blackbox_constraints() {
        return None;
    }
    match problem.check_feasible(design) {
        Ok(r) if r.feasible => None,
        Ok(r) => {
            let names: Vec<&str> = r
                .constraints
                .iter()
                .filter(|c| !c.satisfied)
                .map(|c| c.name.as_str())
                .collect();
            Some(format!("infeasible: {}", names.join(", ")))
        }
        Err(e) => Some(format!("feasibility check failed: {e}")),
    }
}

/// Maps a program invocation to an outcome; stderr goes into the note.
pub fn program_outcome(result: Result<program::ProgramOutput, ProgramError>) -> Outcome {
    let with_stderr = |head: String, stderr: &str| {
        if stderr.trim().is_empty() {
            head
        } else {
            format!("{head}\n{}", stderr.trim_end())
        }
    };
    match result {
        Ok(out) if out.response.feasible == Some(false) => Outcome::Failed {
            reason: with_stderr("infeasible".into(), &out.stderr),
        },
        Ok(out) => match out.response.objectives {
            Some(values) => Outcome::Objectives {
                values,
                note: out.stderr.trim_end().to_string(),
            },
            None => Outcome::Failed {
                reason: with_stderr("malformed program output: missing `objectives`".into(), &out.stderr),
            },
        },
        Err(e) => Outcome::Failed {
            reason: with_stderr(e.to_string(), e.stderr()),
        },
    }
}

type SharedEvaluator = Arc<dyn Fn(&Design, u64) -> Outcome + Send + Sync>;

/// One thread per evaluation; completions come back over a channel.
pub struct ThreadExecutor {
    evaluate: SharedEvaluator,
    tx: Sender<Completion>,
    rx: Receiver<Completion>,
    started: Instant,
    worker: String,
}

impl ThreadExecutor {
    pub fn new(evaluate: impl Fn(&Design, u64) -> Outcome + Send + Sync + 'static) -> Self {
        let (tx, rx) = channel();
        Self {
            evaluate: Arc::new(evaluate),
            tx,
            rx,
            started: Instant::now(),
            worker: "local".into(),
        }
    }
}

impl Executor for ThreadExecutor {
    fn launch(&mut self, experiment: &Experiment, record: &ExperimentRecord) -> Result<(), SchedulerError> {
        experiment.start(record.id, Some(&self.worker), "scheduler")?;
        let f = self.evaluate.clone();
        let tx = self.tx.clone();
        let design = record.design.clone();
        let id = record.id;
        std::thread::spawn(move || {
            let outcome = f(&design, id);
            let _ = tx.send(Completion { record_id: id, outcome });
        });
        Ok(())
    }

    fn next_completion(&mut self, _: &Experiment, stop: &StopSignal) -> Option<Completion> {
        loop {
            if stop.is_hard() {
                return None;
            }
            match self.rx.recv_timeout(POLL) {
                Ok(c) => return Some(c),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return None,
            }
        }
    }

    fn now(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}

/// Leaves dispatched records pending for people or remote workers and
/// reports a completion once the store shows a result.
pub struct ManualExecutor {
    watching: BTreeSet<u64>,
    started: Instant,
}

impl ManualExecutor {
    pub fn new() -> Self {
        Self {
            watching: BTreeSet::new(),
            started: Instant::now(),
        }
    }
}

impl Default for ManualExecutor {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor for ManualExecutor {
    fn launch(&mut self, _: &Experiment, record: &ExperimentRecord) -> Result<(), SchedulerError> {
        self.watching.insert(record.id);
        Ok(())
    }

    fn next_completion(&mut self, experiment: &Experiment, stop: &StopSignal) -> Option<Completion> {
        loop {
            let seen = experiment.version();
            let done = self
                .watching
                .iter()
                .copied()
                .find(|&id| experiment.record(id).is_none_or(|r| r.status.is_terminal()));
            if let Some(id) = done {
                self.watching.remove(&id);
                return Some(Completion {
                    record_id: id,
                    outcome: Outcome::Recorded,
                });
            }
            if stop.is_hard() {
                return None;
            }
            experiment.wait_for_change(seen, POLL);
        }
    }

    fn now(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trace: Trace,
    pub makespan: f64,
    pub throughput: f64,
    pub evaluated: usize,
}

/// Runs the production loop on a virtual clock against an in-memory
/// experiment. Durations are drawn in dispatch order from `durations`
/// seeded with `seed`.
pub fn simulate(
    problem: &Problem,
    config: &RunConfig,
    durations: &DurationModel,
    seed: u64,
    suggester: &mut dyn Suggester,
    evaluate: impl FnMut(&ExperimentRecord) -> Outcome + 'static,
) -> Result<SimulationReport, SchedulerError> {
    let clock = Arc::new(ManualClock::new(0));
    let experiment = Experiment::in_memory("simulation", problem.clone(), config.clone(), clock.clone())?;
    let mut exec = VirtualExecutor::new(durations.sampler(seed), evaluate).with_store_clock(clock);
    let report = run(&experiment, config, suggester, &mut exec, &StopSignal::new())?;
    Ok(SimulationReport {
        makespan: report.trace.makespan(),
        throughput: report.trace.throughput(),
        evaluated: report.evaluated,
        trace: report.trace,
    })
}

/// A cheap suggester for simulations: seeded uniform designs.
pub fn random_suggester(seed: u64) -> impl FnMut(&Experiment, usize, u64) -> Result<SuggestionBatch, OptimizerError> {
    move |exp: &Experiment, count: usize, iteration: u64| {
        let cfg = RunConfig {
            preset: crate::config::Preset::Random,
            seed,
            n_init: 2,
            ..RunConfig::default()
        };
        let mut state = exp.optimizer_state();
        state.initial_issued = cfg.n_init;
        suggest(exp.problem(), &state, &cfg, count, iteration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zdt(config: &RunConfig, model: DurationModel, seed: u64) -> SimulationReport {
        let problem = Benchmark::Zdt1.problem(3);
        let p2 = problem.clone();
        simulate(&problem, config, &model, seed, &mut random_suggester(seed), move |r| Outcome::Objectives {
            values: Benchmark::Zdt1.evaluate_design(&p2, &r.design).unwrap(),
            note: String::new(),
        })
        .unwrap()
    }

    fn cfg(mode: EvalMode, batch: usize, budget: usize) -> RunConfig {
        RunConfig {
            eval_mode: mode,
            batch_size: batch,
            budget,
            n_init: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn sequential_runs_budget_with_increasing_iterations() {
        let problem = Benchmark::Zdt1.problem(3);
        let clock = Arc::new(ManualClock::new(0));
        let exp = Experiment::in_memory("s", problem.clone(), cfg(EvalMode::Sequential, 1, 5), clock.clone()).unwrap();
        let mut exec = VirtualExecutor::new(DurationModel::Constant { value: 0.0 }.sampler(0), move |r| {
            Outcome::Objectives {
                values: Benchmark::Zdt1.evaluate_design(&problem, &r.design).unwrap(),
                note: String::new(),
            }
        });
        let report = run(
            &exp,
            &cfg(EvalMode::Sequential, 1, 5),
            &mut random_suggester(1),
            &mut exec,
            &StopSignal::new(),
        )
        .unwrap();
        assert_eq!(report.evaluated, 5);
        let its: Vec<u64> = exp.all_records().iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![1, 2, 3, 4, 5]);
        assert_eq!(report.state.stopping, Stopping::BudgetExhausted);
    }

    #[test]
    fn sync_second_suggestion_waits_for_slowest() {
        let r = zdt(
            &cfg(EvalMode::SyncBatch, 3, 6),
            DurationModel::Cycle {
                values: vec![1.0, 5.0, 9.0],
            },
            0,
        );
        let suggests: Vec<f64> = r
            .trace
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Suggest { .. }))
            .map(TraceEvent::time)
            .collect();
        assert_eq!(suggests, vec![0.0, 9.0]);
        r.trace.check_sync_barrier().unwrap();
        assert_eq!(r.makespan, 18.0);
    }

    #[test]
    fn async_replaces_on_each_completion() {
        let r = zdt(
            &cfg(EvalMode::AsyncBatch, 2, 6),
            DurationModel::Cycle { values: vec![1.0, 9.0] },
            0,
        );
        assert!(r.trace.max_in_flight() <= 2);
        r.trace.check_async_replacement().unwrap();
        // the t=1 completion triggers a suggestion while the t=9 job runs
        let second = r
            .trace
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Suggest { .. }))
            .nth(1)
            .unwrap();
        assert_eq!(second.time(), 1.0);
        assert_eq!(r.evaluated, 6);
    }

    #[test]
    fn constant_durations_tie() {
        let m = DurationModel::Constant { value: 3.0 };
        let a = zdt(&cfg(EvalMode::AsyncBatch, 4, 20), m.clone(), 2);
        let s = zdt(&cfg(EvalMode::SyncBatch, 4, 20), m, 2);
        assert_eq!(a.makespan, s.makespan);
    }

    #[test]
    fn zero_budget_is_empty() {
        let r = zdt(&cfg(EvalMode::AsyncBatch, 4, 0), DurationModel::Constant { value: 1.0 }, 0);
        assert!(r.trace.events.is_empty());
    }

    #[test]
    fn suggest_failures_abort() {
        let problem = Benchmark::Zdt1.problem(2);
        let exp = Experiment::in_memory("f", problem, RunConfig::default(), Arc::new(ManualClock::new(0))).unwrap();
        let mut calls = 0;
        let mut failing = |_: &Experiment, _: usize, _: u64| -> Result<SuggestionBatch, OptimizerError> {
            calls += 1;
            Err(OptimizerError::NoModel)
        };
        let mut exec = VirtualExecutor::new(DurationModel::Constant { value: 1.0 }.sampler(0), |_| Outcome::Recorded);
        let err = run(&exp, &RunConfig::default(), &mut failing, &mut exec, &StopSignal::new()).unwrap_err();
        assert!(matches!(err, SchedulerError::SuggestFailed { attempts: 3, .. }));
        assert_eq!(calls, 3);
    }

    #[test]
    fn failed_evaluations_are_recorded_and_loop_continues() {
        let problem = Benchmark::Zdt1.problem(2);
        let config = cfg(EvalMode::Sequential, 1, 4);
        let exp = Experiment::in_memory("x", problem, config.clone(), Arc::new(ManualClock::new(0))).unwrap();
        let mut exec = VirtualExecutor::new(DurationModel::Constant { value: 1.0 }.sampler(0), |r| {
            if r.id % 2 == 0 {
                Outcome::Failed {
                    reason: "exit code 1".into(),
                }
            } else {
                Outcome::Objectives {
                    values: vec![1.0, 2.0],
                    note: String::new(),
                }
            }
        });
        let rep = run(&exp, &config, &mut random_suggester(0), &mut exec, &StopSignal::new()).unwrap();
        assert_eq!((rep.evaluated, rep.failed), (2, 2));
        assert_eq!(exp.record(2).unwrap().note, "exit code 1");
    }
}
