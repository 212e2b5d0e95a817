//! The suggestion pipeline: fit surrogates, build the acquisition for the
//! configured preset, solve it with NSGA-II and select a batch.

pub mod selection;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    evaluate_acquisition, tchebycheff, AcquisitionContext, AcquisitionError, AcquisitionSpec, Normalizer,
    ScalarizationWeights,
};
use crate::config::{ConfigError, RunConfig};
use crate::pareto::{non_dominated_indices, ParetoError};
use crate::problem::{Design, Problem, ProblemError, Sense};
use crate::solver::{solve, SolverConfig, SolverError};
use crate::surrogate::{FittedGp, GpConfig, GpSnapshot, Posterior, SurrogateError};

pub use selection::{select, Candidate, Selection, SelectionSpec};

/// Designs closer than this (Euclidean, encoded space) count as duplicates.
pub const DUPLICATE_DISTANCE: f64 = 1e-9;

const INITIAL_OVERSAMPLING: usize = 100;
const FALLBACK_POOL: usize = 1_000;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("surrogate fit failed: {0}; set `fallback_random = true` to suggest random designs instead")]
    Surrogate(SurrogateError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error("design space too constrained: found {found} of {needed} feasible designs")]
    InfeasibleSpace { found: usize, needed: usize },
    #[error("no fitted model yet")]
    NoModel,
    #[error("count must be at least 1")]
    ZeroCount,
}

impl From<SurrogateError> for OptimizerError {
    fn from(e: SurrogateError) -> Self {
        OptimizerError::Surrogate(e)
    }
}

/// An evaluated design with objectives in user units and senses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub design: Design,
    pub objectives: Vec<f64>,
}

/// What the optimizer needs to know about an experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub evaluated: Vec<Observation>,
    /// Issued designs without a result (pending, running or failed). Never
    /// suggested again.
    pub pending: Vec<Design>,
    /// How many initial designs were already issued.
    pub initial_issued: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Initial,
    Model,
    Random,
    Manual,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Initial => "initial",
            Source::Model => "model",
            Source::Random => "random",
            Source::Manual => "manual",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Source::Initial, Source::Model, Source::Random, Source::Manual]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown source `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub design: Design,
    pub source: Source,
    /// Per-objective posterior in user units, when a model was available.
    pub predicted: Option<Vec<Posterior>>,
    /// Selection score (hypervolume gain, summed variance, acquisition value).
    pub score: f64,
    /// Blackbox constraints were not checked.
    pub unverified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionBatch {
    pub suggestions: Vec<Suggestion>,
    /// Fewer designs than requested could be produced.
    pub shortfall: bool,
    /// Per-objective models fit for this batch, internal convention.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<GpSnapshot>,
}

impl SuggestionBatch {
    pub fn designs(&self) -> Vec<Design> {
        self.suggestions.iter().map(|s| s.design.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.suggestions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suggestions.is_empty()
    }
}

/// Deterministic per-iteration stream seed.
pub fn derive_seed(seed: u64, iteration: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (row, s) in rows.iter_mut().zip(strata) {
            row[j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    rows
}

/// Latin hypercube sample in the encoded space, decoded. Rows violating a
/// linear constraint are replaced from further hypercubes.
pub fn initial_designs(problem: &Problem, n_init: usize, seed: u64) -> Result<Vec<Design>, OptimizerError> {
    if n_init < 2 {
        return Err(ConfigError::Invalid("n_init must be at least 2".into()).into());
    }
    problem.validate_ok()?;
    let dim = problem.encoded_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0x1417));
    let mut out = Vec::with_capacity(n_init);
    for _ in 0..INITIAL_OVERSAMPLING {
        for row in latin_hypercube(n_init, dim, &mut rng) {
            let canonical = problem.canonicalize(&row)?;
            if problem.linear_violation(&canonical) == 0.0 {
                out.push(problem.decode(&row)?);
                if out.len() == n_init {
                    return Ok(out);
                }
            }
        }
    }
    Err(OptimizerError::InfeasibleSpace {
        found: out.len(),
        needed: n_init,
    })
}

fn is_duplicate(x: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter().any(|s| {
        s.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= DUPLICATE_DISTANCE
    })
}

/// Fits one GP per objective on internal (minimization) targets.
pub fn fit_models(
    problem: &Problem,
    evaluated: &[Observation],
    config: &GpConfig,
    seed: u64,
) -> Result<Vec<FittedGp>, OptimizerError> {
    let (x, y) = training_data(problem, evaluated)?;
    (0..problem.n_objectives())
        .map(|j| {
            let yj: Vec<f64> = y.iter().map(|r| r[j]).collect();
            FittedGp::fit(&x, &yj, config, seed.wrapping_add(j as u64)).map_err(OptimizerError::from)
        })
        .collect()
}

fn training_data(problem: &Problem, evaluated: &[Observation]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), OptimizerError> {
    let mut x = Vec::with_capacity(evaluated.len());
    let mut y = Vec::with_capacity(evaluated.len());
    for o in evaluated {
        x.push(problem.encode(&o.design)?);
        y.push(problem.to_internal(&o.objectives)?);
    }
    Ok((x, y))
}

fn to_user_posteriors(problem: &Problem, internal: Vec<Posterior>) -> Vec<Posterior> {
    internal
        .into_iter()
        .zip(&problem.objectives)
        .map(|(p, o)| match o.sense {
            Sense::Minimize => p,
            Sense::Maximize => Posterior {
                mean: -p.mean,
                variance: p.variance,
            },
        })
        .collect()
}

/// Posterior per objective at `design`, in user units and senses.
pub fn predict_design(models: &[FittedGp], problem: &Problem, design: &Design) -> Result<Vec<Posterior>, OptimizerError> {
    if models.is_empty() {
        return Err(OptimizerError::NoModel);
    }
    let x = problem.encode(design)?;
    let internal = models.iter().map(|m| m.predict(&x)).collect::<Result<Vec<_>, _>>()?;
    Ok(to_user_posteriors(problem, internal))
}

/// Reference point for hypervolume bookkeeping: per-objective maximum plus a
/// tenth of the observed range (or of the magnitude when the range is zero).
pub fn reference_point(points: &[Vec<f64>]) -> Vec<f64> {
    let m = points.first().map_or(0, Vec::len);
    (0..m)
        .map(|j| {
            let lo = points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let margin = if hi > lo { 0.1 * (hi - lo) } else { 0.1 * hi.abs().max(1.0) };
            hi + margin
        })
        .collect()
}

/// Seeded uniform feasible encodings not within the duplicate distance of
/// `avoid` or of each other.
fn random_encodings(problem: &Problem, count: usize, avoid: &[Vec<f64>], seed: u64) -> Result<Vec<Vec<f64>>, OptimizerError> {
    let dim = problem.encoded_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = avoid.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.max(1) * INITIAL_OVERSAMPLING {
        if out.len() == count {
            break;
        }
        let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let x = problem.canonicalize(&raw)?;
        if problem.linear_violation(&x) == 0.0 && !is_duplicate(&x, &seen) {
            seen.push(x.clone());
            out.push(x);
        }
    }
    Ok(out)
}

/// Produces the next `count` designs. Initial designs come first until
/// `n_init` were issued; then the preset's pipeline runs on the evaluated
/// data. Deterministic in (state, config, count, iteration).
pub fn suggest(
    problem: &Problem,
    state: &OptimizerState,
    config: &RunConfig,
    count: usize,
    iteration: u64,
) -> Result<SuggestionBatch, OptimizerError> {
    if count == 0 {
        return Err(OptimizerError::ZeroCount);
    }
    config.validate()?;
    problem.validate_ok()?;
    let unverified = problem.has_blackbox_constraints();
    let mut avoid = Vec::with_capacity(state.evaluated.len() + state.pending.len());
    for d in state.evaluated.iter().map(|o| &o.design).chain(&state.pending) {
        avoid.push(problem.encode(d)?);
    }

    let mut suggestions = Vec::with_capacity(count);
    if state.initial_issued < config.n_init {
        let designs = initial_designs(problem, config.n_init, config.seed)?;
        for d in designs.into_iter().skip(state.initial_issued).take(count) {
            avoid.push(problem.encode(&d)?);
            suggestions.push(Suggestion {
                design: d,
                source: Source::Initial,
                predicted: None,
                score: 0.0,
                unverified,
            });
        }
    }
    let remaining = count - suggestions.len();
    let mut models = Vec::new();
    let mut shortfall = false;
    if remaining > 0 {
        let modelled = match config.pipeline() {
            Some(_) if state.evaluated.len() >= 2 => match model_batch(problem, state, config, remaining, iteration, &avoid) {
                Ok(r) => Some(r),
                Err(OptimizerError::Surrogate(_)) if config.fallback_random => None,
                Err(e) => return Err(e),
            },
            _ => None,
        };
        match modelled {
            Some((batch, fitted, short)) => {
                suggestions.extend(batch.into_iter().map(|mut s| {
                    s.unverified = unverified;
                    s
                }));
                models = fitted.iter().map(FittedGp::snapshot).collect();
                shortfall = short;
            }
            None => {
                let xs = random_encodings(problem, remaining, &avoid, derive_seed(config.seed, iteration, 5))?;
                shortfall = xs.len() < remaining;
                for x in xs {
                    suggestions.push(Suggestion {
                        design: problem.decode(&x)?,
                        source: Source::Random,
                        predicted: None,
                        score: 0.0,
                        unverified,
                    });
                }
            }
        }
    }
    Ok(SuggestionBatch {
        suggestions,
        shortfall,
        models,
    })
}

type ModelBatch = (Vec<Suggestion>, Vec<FittedGp>, bool);

fn model_batch(
    problem: &Problem,
    state: &OptimizerState,
    config: &RunConfig,
    count: usize,
    iteration: u64,
    avoid: &[Vec<f64>],
) -> Result<ModelBatch, OptimizerError> {
    let pipeline = config.pipeline().expect("caller checked for a model preset");
    let dim = problem.encoded_dim();
    let (x, y) = training_data(problem, &state.evaluated)?;
    let models = fit_models(problem, &state.evaluated, &pipeline.surrogate, derive_seed(config.seed, iteration, 1))?;

    let scalar_model;
    let acq_models: &[FittedGp] = if pipeline.scalarize {
        let weights = ScalarizationWeights::sample(problem.n_objectives(), config.rho, derive_seed(config.seed, iteration, 2));
        let norm = Normalizer::fit(&y).ok_or(OptimizerError::NoModel)?;
        let s = y
            .iter()
            .map(|r| tchebycheff(&norm.apply(r), &weights))
            .collect::<Result<Vec<_>, _>>()?;
        scalar_model = FittedGp::fit(&x, &s, &pipeline.surrogate, derive_seed(config.seed, iteration, 6))?;
        std::slice::from_ref(&scalar_model)
    } else {
        &models
    };

    let spec = match pipeline.acquisition {
        AcquisitionSpec::ThompsonSampling { seed, grid_size } => AcquisitionSpec::ThompsonSampling {
            seed: derive_seed(config.seed ^ seed, iteration, 3),
            grid_size,
        },
        other => other,
    };
    let ctx = AcquisitionContext::prepare(&spec, acq_models, dim)?;
    let solver_cfg = SolverConfig {
        seed: derive_seed(config.seed ^ pipeline.solver.seed, iteration, 4),
        ..pipeline.solver.clone()
    };
    let internal_front = non_dominated_indices(&y);
    let warm: Vec<Vec<f64>> = internal_front.iter().map(|&i| x[i].clone()).collect();
    let k = acq_models.len();
    let out = solve(
        |p| evaluate_acquisition(&spec, acq_models, p, &ctx).unwrap_or_else(|_| vec![f64::NAN; k]),
        problem,
        &solver_cfg,
        &warm,
    )?;

    // A scalar acquisition has a one-point front; draw from the whole
    // feasible population instead.
    let pool = if k == 1 {
        out.population.iter().filter(|i| i.feasible).collect::<Vec<_>>()
    } else {
        out.front.iter().collect()
    };
    let mut seen = avoid.to_vec();
    let mut candidates = Vec::new();
    for ind in pool {
        if is_duplicate(&ind.canonical, &seen) {
            continue;
        }
        seen.push(ind.canonical.clone());
        candidates.push(candidate(&models, ind.canonical.clone(), ind.acq_values.clone())?);
    }

    let evaluated_front: Vec<Vec<f64>> = internal_front.iter().map(|&i| y[i].clone()).collect();
    let reference = reference_point(&y);
    let sel_spec = match pipeline.selection {
        SelectionSpec::Random { seed } => SelectionSpec::Random {
            seed: derive_seed(config.seed ^ seed, iteration, 7),
        },
        other => other,
    };
    let sel = select(&candidates, &sel_spec, count, &evaluated_front, &reference)?;
    let mut picked: Vec<(Candidate, f64, Source)> = sel
        .chosen
        .iter()
        .zip(&sel.scores)
        .map(|(&i, &s)| (candidates[i].clone(), s, Source::Model))
        .collect();

    // Front exhausted by the duplicate filter: top up with the most
    // uncertain random candidates.
    if picked.len() < count {
        let mut taken = avoid.to_vec();
        taken.extend(picked.iter().map(|(c, _, _)| c.encoded.clone()));
        let pool = random_encodings(problem, FALLBACK_POOL, &taken, derive_seed(config.seed, iteration, 8))?;
        let mut extra = pool
            .into_iter()
            .map(|e| candidate(&models, e, Vec::new()))
            .collect::<Result<Vec<_>, _>>()?;
        let fill = select(&extra, &SelectionSpec::Uncertainty, count - picked.len(), &[], &[])?;
        let mut chosen: Vec<(usize, f64)> = fill.chosen.into_iter().zip(fill.scores).collect();
        chosen.sort_by(|a, b| b.0.cmp(&a.0));
        let mut fills = Vec::new();
        for (i, s) in chosen {
            fills.push((extra.swap_remove(i), s, Source::Random));
        }
        fills.reverse();
        picked.extend(fills);
    }
    let shortfall = picked.len() < count;

    let suggestions = picked
        .into_iter()
        .map(|(c, score, source)| {
            let internal = c
                .mean
                .iter()
                .zip(&c.variance)
                .map(|(&mean, &variance)| Posterior { mean, variance })
                .collect();
            Ok(Suggestion {
                design: problem.decode(&c.encoded)?,
                source,
                predicted: Some(to_user_posteriors(problem, internal)),
                score,
                unverified: false,
            })
        })
        .collect::<Result<Vec<_>, OptimizerError>>()?;
    Ok((suggestions, models, shortfall))
}

fn candidate(models: &[FittedGp], encoded: Vec<f64>, acq: Vec<f64>) -> Result<Candidate, OptimizerError> {
    let posts = models.iter().map(|m| m.predict(&encoded)).collect::<Result<Vec<_>, _>>()?;
    Ok(Candidate {
        mean: posts.iter().map(|p| p.mean).collect(),
        variance: posts.iter().map(|p| p.variance).collect(),
        encoded,
        acq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::problem::{ConstraintForm, ObjectiveSpec, Value, VariableSpec};

    fn toy() -> Problem {
        Problem::new(
            (0..6).map(|i| VariableSpec::continuous(format!("x{i}"), 0.0, 1.0)).collect(),
            vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
        )
    }

    fn zdt1(x: &[f64]) -> Vec<f64> {
        let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
        vec![x[0], g * (1.0 - (x[0] / g).sqrt())]
    }

    fn observed(problem: &Problem, n: usize, seed: u64) -> OptimizerState {
        let evaluated = initial_designs(problem, n, seed)
            .unwrap()
            .into_iter()
            .map(|d| {
                let x = problem.encode(&d).unwrap();
                Observation {
                    objectives: zdt1(&x),
                    design: d,
                }
            })
            .collect();
        OptimizerState {
            evaluated,
            pending: Vec::new(),
            initial_issued: n,
        }
    }

    fn quick(preset: Preset) -> RunConfig {
        RunConfig {
            preset,
            n_init: 10,
            solver: Some(SolverConfig {
                population_size: 40,
                generations: 20,
                ..SolverConfig::default()
            }),
            ..RunConfig::default()
        }
    }

    #[test]
    fn lhs_stratifies_quartiles() {
        let p = Problem::new(
            vec![VariableSpec::continuous("x", 0.0, 1.0)],
            vec![ObjectiveSpec::minimize("a"), ObjectiveSpec::minimize("b")],
        );
        let ds = initial_designs(&p, 4, 11).unwrap();
        let mut quartiles: Vec<usize> = ds
            .iter()
            .map(|d| match d.get("x") {
                Some(Value::Real(v)) => (v * 4.0).floor() as usize,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        quartiles.sort_unstable();
        assert_eq!(quartiles, vec![0, 1, 2, 3]);
        assert_eq!(ds, initial_designs(&p, 4, 11).unwrap());
    }

    #[test]
    fn lhs_respects_linear_constraint() {
        let p = Problem::new(
            vec![VariableSpec::continuous("x", 0.0, 1.0), VariableSpec::continuous("y", 0.0, 1.0)],
            vec![ObjectiveSpec::minimize("a"), ObjectiveSpec::minimize("b")],
        )
        .with_constraint(
            "half",
            ConstraintForm::Linear {
                coefficients: vec![1.0, 1.0],
                offset: -1.0,
            },
        );
        let ds = initial_designs(&p, 12, 2).unwrap();
        assert_eq!(ds.len(), 12);
        for d in &ds {
            assert!(p.check_linear(d).unwrap());
        }
    }

    #[test]
    fn impossible_space_errors() {
        let p = Problem::new(
            vec![VariableSpec::continuous("x", 0.0, 1.0)],
            vec![ObjectiveSpec::minimize("a"), ObjectiveSpec::minimize("b")],
        )
        .with_constraint(
            "never",
            ConstraintForm::Linear {
                coefficients: vec![0.0],
                offset: 1.0,
            },
        );
        assert!(matches!(
            initial_designs(&p, 3, 0),
            Err(OptimizerError::InfeasibleSpace { found: 0, needed: 3 })
        ));
    }

    #[test]
    fn initial_phase_serves_lhs_in_order() {
        let p = toy();
        let cfg = quick(Preset::TsemoStyle);
        let lhs = initial_designs(&p, 10, cfg.seed).unwrap();
        let state = OptimizerState {
            initial_issued: 4,
            ..OptimizerState::default()
        };
        let b = suggest(&p, &state, &cfg, 3, 0).unwrap();
        assert_eq!(b.designs(), lhs[4..7].to_vec());
        assert!(b.suggestions.iter().all(|s| s.source == Source::Initial));
    }

    #[test]
    fn model_suggestion_contract() {
        let p = toy();
        let state = observed(&p, 10, 5);
        for preset in [Preset::Parego, Preset::TsemoStyle, Preset::UsemoStyle] {
            let cfg = quick(preset);
            let b = suggest(&p, &state, &cfg, 1, 3).unwrap();
            assert_eq!(b.len(), 1, "{preset:?}");
            let s = &b.suggestions[0];
            assert_eq!(s.source, Source::Model);
            assert!(p.check_linear(&s.design).unwrap());
            let pred = s.predicted.as_ref().unwrap();
            assert!(pred.iter().all(|q| q.mean.is_finite() && q.variance.is_finite()));
            let x = p.encode(&s.design).unwrap();
            for o in &state.evaluated {
                let e = p.encode(&o.design).unwrap();
                let d: f64 = e.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d > DUPLICATE_DISTANCE);
            }
            assert_eq!(b.models.len(), 2);
        }
    }

    #[test]
    fn suggest_is_deterministic() {
        let p = toy();
        let state = observed(&p, 10, 8);
        let cfg = RunConfig {
            batch_size: 3,
            eval_mode: crate::config::EvalMode::SyncBatch,
            ..quick(Preset::TsemoStyle)
        };
        let a = suggest(&p, &state, &cfg, 3, 7).unwrap();
        let b = suggest(&p, &state, &cfg, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn random_preset_avoids_pending() {
        let p = toy();
        let mut state = observed(&p, 10, 1);
        state.pending = initial_designs(&p, 5, 99).unwrap();
        let b = suggest(&p, &state, &quick(Preset::Random), 4, 2).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.suggestions.iter().all(|s| s.source == Source::Random));
    }

    #[test]
    fn predict_round_trips_sense() {
        let p = Problem::new(
            vec![VariableSpec::continuous("x", 0.0, 1.0)],
            vec![ObjectiveSpec::minimize("cost"), ObjectiveSpec::maximize("yield")],
        );
        let evaluated: Vec<Observation> = (0..6)
            .map(|i| {
                let x = i as f64 / 5.0;
                Observation {
                    design: Design::new().with("x", Value::Real(x)),
                    objectives: vec![x * x, 10.0 + x],
                }
            })
            .collect();
        let cfg = GpConfig {
            noise: crate::surrogate::NoiseSetting::Fixed { variance: 1e-6 },
            ..GpConfig::default()
        };
        let models = fit_models(&p, &evaluated, &cfg, 0).unwrap();
        let post = predict_design(&models, &p, &evaluated[3].design).unwrap();
        assert!((post[0].mean - evaluated[3].objectives[0]).abs() < 1e-2);
        assert!((post[1].mean - evaluated[3].objectives[1]).abs() < 1e-2);
        assert!(matches!(predict_design(&[], &p, &evaluated[0].design), Err(OptimizerError::NoModel)));
        let bad = Design::new().with("x", Value::Label("a".into()));
        assert!(predict_design(&models, &p, &bad).is_err());
    }
}
