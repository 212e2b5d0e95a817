//! Background scheduler runs, one per experiment.

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::http::StatusCode;
use serde::{Deserialize, Serialize};

use oed::config::{EvalMode, Preset, RunConfig};
use oed::scheduler::{self, EvaluatorBinding, OptimizerSuggester, StopSignal};
use oed::store::Experiment;

use crate::ApiError;

/// Body of `POST /v1/experiments/{id}/runs`. Unset fields keep the
/// experiment's stored configuration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct RunRequest {
    pub evaluator: Option<EvaluatorBinding>,
    pub budget: Option<usize>,
    pub mode: Option<EvalMode>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
}

impl RunRequest {
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        if let Some(b) = self.budget {
            c.budget = b;
        }
        if let Some(m) = self.mode {
            c.eval_mode = m;
            if m == EvalMode::Sequential {
                c.batch_size = 1;
            }
        }
        if let Some(b) = self.batch {
            c.batch_size = b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(p) = self.preset {
            c.preset = p;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    #[default]
    Idle,
    Running,
    Stopping,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub state: RunState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluated: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed: Option<usize>,
}

pub(crate) struct RunHandle {
    stop: StopSignal,
    status: Arc<Mutex<RunStatus>>,
    _thread: JoinHandle<()>,
}

impl RunHandle {
    pub(crate) fn start(experiment: Arc<Experiment>, req: RunRequest) -> Result<Self, ApiError> {
        let config = req.apply(experiment.config());
        config
            .validate()
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e.to_string()))?;
        let binding = req.evaluator.clone().unwrap_or(EvaluatorBinding::Manual);
        let mut executor = binding
            .executor(experiment.problem())
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_evaluator", e.to_string()))?;
        let stop = StopSignal::new();
        let status = Arc::new(Mutex::new(RunStatus {
            state: RunState::Running,
            ..RunStatus::default()
        }));
        let thread = {
            let stop = stop.clone();
            let status = status.clone();
            std::thread::spawn(move || {
                let mut suggester = OptimizerSuggester { config: config.clone() };
                let result = scheduler::run(&experiment, &config, &mut suggester, executor.as_mut(), &stop);
                let mut s = status.lock().unwrap_or_else(|p| p.into_inner());
                match result {
                    Ok(report) => {
                        s.state = RunState::Finished;
                        s.evaluated = Some(report.evaluated);
                        s.failed = Some(report.failed);
                    }
                    Err(e) => {
                        s.state = RunState::Failed;
                        s.error = Some(e.to_string());
                    }
                }
            })
        };
        Ok(Self {
            stop,
            status,
            _thread: thread,
        })
    }

    pub(crate) fn status(&self) -> RunStatus {
        self.status.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub(crate) fn is_active(&self) -> bool {
        matches!(self.status().state, RunState::Running | RunState::Stopping)
    }

    pub(crate) fn stop(&self, hard: bool) {
        if hard {
            self.stop.request_hard();
        } else {
            self.stop.request();
        }
        let mut s = self.status.lock().unwrap_or_else(|p| p.into_inner());
        if s.state == RunState::Running {
            s.state = RunState::Stopping;
        }
    }
}
