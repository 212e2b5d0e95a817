//! Synthetic test problems and a seeded benchmark harness.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Preset, RunConfig};
use crate::optimizer::{suggest, Observation, OptimizerError, OptimizerState};
use crate::pareto::hypervolume_clipped;
use crate::problem::{Design, ObjectiveSpec, Problem, ProblemError, VariableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Zdt1,
    Zdt2,
    /// Three objectives.
    Dtlz2,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::Zdt1, Benchmark::Zdt2, Benchmark::Dtlz2];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Zdt1 => "zdt1",
            Benchmark::Zdt2 => "zdt2",
            Benchmark::Dtlz2 => "dtlz2",
        }
    }

    pub fn n_objectives(self) -> usize {
        match self {
            Benchmark::Zdt1 | Benchmark::Zdt2 => 2,
            Benchmark::Dtlz2 => 3,
        }
    }

    /// `dim` continuous variables `x0..` on [0, 1], all objectives minimized.
    pub fn problem(self, dim: usize) -> Problem {
        let objectives = (1..=self.n_objectives())
            .map(|j| ObjectiveSpec::minimize(format!("f{j}")))
            .collect();
        Problem::new(
            (0..dim).map(|i| VariableSpec::continuous(format!("x{i}"), 0.0, 1.0)).collect(),
            objectives,
        )
    }

    pub fn reference_point(self) -> Vec<f64> {
        match self {
            Benchmark::Zdt1 | Benchmark::Zdt2 => vec![11.0, 11.0],
            Benchmark::Dtlz2 => vec![2.5; 3],
        }
    }

    pub fn evaluate(self, x: &[f64]) -> Vec<f64> {
        match self {
            Benchmark::Zdt1 | Benchmark::Zdt2 => {
                let g = if x.len() > 1 {
                    1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64
                } else {
                    1.0
                };
                let r = x[0] / g;
                let h = if self == Benchmark::Zdt1 { 1.0 - r.sqrt() } else { 1.0 - r * r };
                vec![x[0], g * h]
            }
            Benchmark::Dtlz2 => {
                let m = 3;
                let g: f64 = x.iter().skip(m - 1).map(|v| (v - 0.5) * (v - 0.5)).sum();
                let a = |v: f64| v * std::f64::consts::FRAC_PI_2;
                let x1 = x.first().copied().unwrap_or(0.0);
                let x2 = x.get(1).copied().unwrap_or(0.0);
                vec![
                    (1.0 + g) * a(x1).cos() * a(x2).cos(),
                    (1.0 + g) * a(x1).cos() * a(x2).sin(),
                    (1.0 + g) * a(x1).sin(),
                ]
            }
        }
    }

    /// Evaluates a design of `self.problem(d)` (variables read in order).
    pub fn evaluate_design(self, problem: &Problem, design: &Design) -> Result<Vec<f64>, ProblemError> {
        let mut x = Vec::with_capacity(problem.variables.len());
        for v in &problem.variables {
            let (lo, hi) = (v.bounds.unwrap_or([0.0, 1.0])[0], v.bounds.unwrap_or([0.0, 1.0])[1]);
            let raw = match design.get(&v.name) {
                Some(crate::problem::Value::Real(r)) => *r,
                Some(crate::problem::Value::Int(i)) => *i as f64,
                Some(crate::problem::Value::Bool(b)) => f64::from(u8::from(*b)),
                _ => return Err(ProblemError::MissingValue(v.name.clone())),
            };
            x.push(((raw - lo) / (hi - lo)).clamp(0.0, 1.0));
        }
        Ok(self.evaluate(&x))
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}` (zdt1, zdt2, dtlz2)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    pub seed: u64,
    pub evaluations: usize,
    pub hypervolume: f64,
}

/// Runs `config` sequentially (one design per iteration) on `bench` for each
/// seed and records the hypervolume after every evaluation.
pub fn run_benchmark(
    bench: Benchmark,
    dim: usize,
    config: &RunConfig,
    seeds: &[u64],
) -> Result<Vec<BenchmarkPoint>, OptimizerError> {
    let problem = bench.problem(dim);
    let reference = bench.reference_point();
    let mut out = Vec::new();
    for &seed in seeds {
        let cfg = RunConfig {
            seed,
            batch_size: 1,
            eval_mode: crate::config::EvalMode::Sequential,
            ..config.clone()
        };
        let mut state = OptimizerState::default();
        let mut iteration = 1;
        while state.evaluated.len() + state.pending.len() < cfg.budget {
            let batch = suggest(&problem, &state, &cfg, 1, iteration)?;
            iteration += 1;
            if batch.is_empty() {
                break;
            }
            for s in batch.suggestions {
                if s.source == crate::optimizer::Source::Initial {
                    state.initial_issued += 1;
                }
                let objectives = bench.evaluate_design(&problem, &s.design)?;
                state.evaluated.push(Observation {
                    design: s.design,
                    objectives,
                });
            }
            let ys: Vec<Vec<f64>> = state.evaluated.iter().map(|o| o.objectives.clone()).collect();
            out.push(BenchmarkPoint {
                seed,
                evaluations: state.evaluated.len(),
                hypervolume: hypervolume_clipped(&ys, &reference)?,
            });
        }
    }
    Ok(out)
}

/// Final hypervolume per seed from [`run_benchmark`] output.
pub fn final_hypervolumes(points: &[BenchmarkPoint]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    for p in points {
        match out.last_mut() {
            Some((s, hv)) if *s == p.seed => *hv = p.hypervolume,
            _ => out.push((p.seed, p.hypervolume)),
        }
    }
    out
}

/// The configuration used for the data-efficiency comparison.
pub fn comparison_config(preset: Preset) -> RunConfig {
    RunConfig {
        preset,
        n_init: 10,
        budget: 40,
        ..RunConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zdt1_known_values() {
        // On the optimal front g = 1 and f2 = 1 - sqrt(f1).
        let y = Benchmark::Zdt1.evaluate(&[0.25, 0.0, 0.0]);
        assert_eq!(y, vec![0.25, 0.5]);
        let y = Benchmark::Zdt1.evaluate(&[0.0, 1.0, 1.0]);
        assert_eq!(y, vec![0.0, 10.0]);
        let y = Benchmark::Zdt2.evaluate(&[0.5, 0.0]);
        assert_eq!(y, vec![0.5, 0.75]);
    }

    #[test]
    fn dtlz2_lies_on_sphere_at_optimum() {
        let y = Benchmark::Dtlz2.evaluate(&[0.3, 0.7, 0.5, 0.5]);
        let r: f64 = y.iter().map(|v| v * v).sum();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_benchmark_is_monotone_and_seeded() {
        let cfg = RunConfig {
            budget: 15,
            n_init: 5,
            ..comparison_config(Preset::Random)
        };
        let a = run_benchmark(Benchmark::Zdt1, 4, &cfg, &[1, 2]).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, run_benchmark(Benchmark::Zdt1, 4, &cfg, &[1, 2]).unwrap());
        for w in a.windows(2).filter(|w| w[0].seed == w[1].seed) {
            assert!(w[1].hypervolume >= w[0].hypervolume);
        }
        assert_eq!(final_hypervolumes(&a).len(), 2);
    }
}
