//! Run configuration: algorithm preset, component overrides, batch and
//! evaluation mode, budget. Serialized as TOML alongside the problem file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AcquisitionSpec, DEFAULT_TS_GRID, DEFAULT_UCB_BETA};
use crate::optimizer::selection::SelectionSpec;
use crate::solver::SolverConfig;
use crate::surrogate::GpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Parego,
    TsemoStyle,
    UsemoStyle,
    /// Uniform random search; the baseline for benchmarks.
    Random,
    /// Components taken entirely from the overrides.
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Parego,
        Preset::TsemoStyle,
        Preset::UsemoStyle,
        Preset::Random,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Parego => "parego",
            Preset::TsemoStyle => "tsemo_style",
            Preset::UsemoStyle => "usemo_style",
            Preset::Random => "random",
            Preset::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Sequential,
    SyncBatch,
    AsyncBatch,
}

impl std::str::FromStr for EvalMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(EvalMode::Sequential),
            "sync" | "sync_batch" => Ok(EvalMode::SyncBatch),
            "async" | "async_batch" => Ok(EvalMode::AsyncBatch),
            _ => Err(ConfigError::Invalid(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid run configuration: {0}")]
    Invalid(String),
    #[error("cannot parse run configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub preset: Preset,
    pub batch_size: usize,
    pub eval_mode: EvalMode,
    /// Maximum number of evaluations in the experiment, initial designs included.
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<GpConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<AcquisitionSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSpec>,
    /// ParEGO augmentation coefficient.
    pub rho: f64,
    /// Suggest random designs instead of failing when surrogates cannot be fit.
    pub fallback_random: bool,
    /// Whether failed evaluations count against the budget.
    pub failed_consume_budget: bool,
    /// On stop, abandon in-flight evaluations instead of draining them.
    pub hard_stop: bool,
    /// Async mode: minimum time between refits; completions arriving sooner
    /// are batched into the next suggestion. Zero refits on every completion.
    pub async_min_refit_interval: f64,
    /// Per-evaluation timeout for external programs.
    pub evaluator_timeout_secs: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::TsemoStyle,
            batch_size: 1,
            eval_mode: EvalMode::Sequential,
            budget: 50,
            n_init: 10,
            seed: 0,
            surrogate: None,
            acquisition: None,
            solver: None,
            selection: None,
            rho: crate::acquisition::DEFAULT_RHO,
            fallback_random: false,
            failed_consume_budget: true,
            hard_stop: false,
            async_min_refit_interval: 0.0,
            evaluator_timeout_secs: crate::program::DEFAULT_TIMEOUT_SECS,
        }
    }
}

/// The four pipeline components a preset resolves to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub surrogate: GpConfig,
    /// Fit one model on augmented-Tchebycheff scalarized objectives.
    pub scalarize: bool,
    pub acquisition: AcquisitionSpec,
    pub solver: SolverConfig,
    pub selection: SelectionSpec,
}

impl RunConfig {
    pub fn from_toml_str(doc: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.eval_mode == EvalMode::Sequential && self.batch_size != 1 {
            return bad("sequential mode requires batch_size = 1");
        }
        if self.n_init < 2 {
            return bad("n_init must be at least 2");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.evaluator_timeout_secs > 0.0) {
            return bad("evaluator timeout must be positive");
        }
        if !(self.async_min_refit_interval >= 0.0) {
            return bad("async_min_refit_interval must be non-negative");
        }
        if let Some(AcquisitionSpec::UpperConfidenceBound { beta }) = &self.acquisition {
            if !(*beta > 0.0) {
                return bad("ucb beta must be positive");
            }
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.preset == Preset::Custom && (self.acquisition.is_none() || self.selection.is_none()) {
            return bad("custom preset needs `acquisition` and `selection`");
        }
        Ok(())
    }

    /// Resolves the preset and overrides into concrete components, or `None`
    /// for random search. Thompson seeds are left at 0 here; the optimizer
    /// derives a per-iteration seed.
    pub fn pipeline(&self) -> Option<Pipeline> {
        let (scalarize, acquisition, selection) = match self.preset {
            Preset::Random => return None,
            Preset::Parego => (true, AcquisitionSpec::ExpectedImprovement, SelectionSpec::BestAcquisition),
            Preset::TsemoStyle => (
                false,
                AcquisitionSpec::ThompsonSampling {
                    seed: 0,
                    grid_size: DEFAULT_TS_GRID,
                },
                SelectionSpec::HypervolumeImprovement,
            ),
            Preset::UsemoStyle => (
                false,
                AcquisitionSpec::UpperConfidenceBound {
                    beta: DEFAULT_UCB_BETA,
                },
                SelectionSpec::Uncertainty,
            ),
            Preset::Custom => (false, AcquisitionSpec::PosteriorMean, SelectionSpec::HypervolumeImprovement),
        };
        Some(Pipeline {
            surrogate: self.surrogate.clone().unwrap_or_default(),
            scalarize,
            acquisition: self.acquisition.clone().unwrap_or(acquisition),
            solver: self.solver.clone().unwrap_or_default(),
            selection: self.selection.clone().unwrap_or(selection),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_wiring() {
        let cfg = |preset| RunConfig {
            preset,
            ..RunConfig::default()
        };
        let parego = cfg(Preset::Parego).pipeline().unwrap();
        assert!(parego.scalarize);
        assert_eq!(parego.acquisition, AcquisitionSpec::ExpectedImprovement);
        assert_eq!(parego.selection, SelectionSpec::BestAcquisition);

        let tsemo = cfg(Preset::TsemoStyle).pipeline().unwrap();
        assert!(!tsemo.scalarize);
        assert!(matches!(tsemo.acquisition, AcquisitionSpec::ThompsonSampling { .. }));
        assert_eq!(tsemo.selection, SelectionSpec::HypervolumeImprovement);

        let usemo = cfg(Preset::UsemoStyle).pipeline().unwrap();
        assert!(!usemo.scalarize);
        assert_eq!(usemo.acquisition, AcquisitionSpec::UpperConfidenceBound { beta: 2.0 });
        assert_eq!(usemo.selection, SelectionSpec::Uncertainty);

        for p in [parego, tsemo, usemo] {
            assert_eq!(p.solver, SolverConfig::default());
            assert_eq!(p.surrogate, GpConfig::default());
        }
        assert!(cfg(Preset::Random).pipeline().is_none());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig {
            batch_size: 3,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.eval_mode = EvalMode::SyncBatch;
        assert!(c.validate().is_ok());
        c.n_init = 1;
        assert!(c.validate().is_err());
        let custom = RunConfig {
            preset: Preset::Custom,
            ..RunConfig::default()
        };
        assert!(custom.validate().is_err());
    }

    #[test]
    fn toml_round_trip_with_overrides() {
        let c = RunConfig {
            preset: Preset::Custom,
            eval_mode: EvalMode::AsyncBatch,
            batch_size: 4,
            acquisition: Some(AcquisitionSpec::UpperConfidenceBound { beta: 3.0 }),
            selection: Some(SelectionSpec::Random { seed: 9 }),
            solver: Some(SolverConfig {
                population_size: 20,
                ..SolverConfig::default()
            }),
            ..RunConfig::default()
        };
        let doc = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&doc).unwrap(), c);
        let minimal = RunConfig::from_toml_str("preset = \"parego\"\nbudget = 40\n").unwrap();
        assert_eq!(minimal.preset, Preset::Parego);
        assert_eq!(minimal.n_init, 10);
    }
}
