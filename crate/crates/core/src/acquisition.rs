//! Acquisition functions over surrogate posteriors, and the augmented
//! Tchebycheff scalarization.
//!
//! [`evaluate_acquisition`] reports values in the minimization convention so
//! the solver can minimize every kind uniformly: expected improvement is
//! returned negated, the confidence bound is the lower one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surrogate::{FittedGp, Posterior, SurrogateError, ThompsonPath};

pub const DEFAULT_RHO: f64 = 0.05;
pub const DEFAULT_UCB_BETA: f64 = 2.0;
pub const DEFAULT_TS_GRID: usize = 200;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("posterior is not finite")]
    NonFinite,
    #[error("length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("acquisition context lacks {0}")]
    MissingContext(&'static str),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcquisitionSpec {
    ExpectedImprovement,
    UpperConfidenceBound {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    ThompsonSampling {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_grid")]
        grid_size: usize,
    },
    PosteriorMean,
}

fn default_beta() -> f64 {
    DEFAULT_UCB_BETA
}

fn default_grid() -> usize {
    DEFAULT_TS_GRID
}

impl AcquisitionSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AcquisitionSpec::ExpectedImprovement => "expected_improvement",
            AcquisitionSpec::UpperConfidenceBound { .. } => "upper_confidence_bound",
            AcquisitionSpec::ThompsonSampling { .. } => "thompson_sampling",
            AcquisitionSpec::PosteriorMean => "posterior_mean",
        }
    }
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` (minimization).
pub fn expected_improvement(post: Posterior, best: f64) -> Result<f64, AcquisitionError> {
    if !post.mean.is_finite() || !post.variance.is_finite() || !best.is_finite() || post.variance < 0.0 {
        return Err(AcquisitionError::NonFinite);
    }
    let sigma = post.variance.sqrt();
    let gap = best - post.mean;
    if sigma == 0.0 {
        return Ok(gap.max(0.0));
    }
    let z = gap / sigma;
    Ok((sigma * (z * normal_cdf(z) + normal_pdf(z))).max(0.0))
}

/// Confidence bound in the minimization form: `mean - sqrt(beta) * std`.
pub fn ucb(post: Posterior, beta: f64) -> f64 {
    post.mean - beta.sqrt() * post.variance.max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarizationWeights {
    w: Vec<f64>,
    rho: f64,
}

impl ScalarizationWeights {
    pub fn new(w: Vec<f64>, rho: f64) -> Result<Self, AcquisitionError> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AcquisitionError::InvalidWeights("weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AcquisitionError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        if !(rho > 0.0) {
            return Err(AcquisitionError::InvalidWeights("rho must be positive".into()));
        }
        Ok(Self { w, rho })
    }

    /// Uniform draw from the probability simplex.
    pub fn sample(m: usize, rho: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = e.iter().sum();
        let mut w: Vec<f64> = e.iter().map(|v| v / total).collect();
        // absorb round-off so the sum is exactly representable as ~1
        let drift = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        Self::new(w, rho).expect("simplex sample is valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Augmented Tchebycheff: `max_i(w_i y_i) + rho * Σ_i w_i y_i`.
pub fn tchebycheff(y: &[f64], weights: &ScalarizationWeights) -> Result<f64, AcquisitionError> {
    if y.len() != weights.w.len() {
        return Err(AcquisitionError::LengthMismatch {
            expected: weights.w.len(),
            got: y.len(),
        });
    }
    let terms = y.iter().zip(&weights.w).map(|(a, b)| a * b);
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + weights.rho * terms.sum::<f64>())
}

/// Per-objective min-max normalization over observed data. Degenerate
/// objectives (max = min) map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &[Vec<f64>]) -> Option<Self> {
        let m = data.first()?.len();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for y in data {
            for j in 0..m {
                min[j] = min[j].min(y[j]);
                max[j] = max[j].max(y[j]);
            }
        }
        Some(Self { min, max })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Everything an acquisition kind may need beyond the models themselves.
#[derive(Debug, Clone, Default)]
pub struct AcquisitionContext {
    /// Incumbent (best observed) value per model, same units as the model.
    pub incumbents: Option<Vec<f64>>,
    /// One sampled path per model.
    pub thompson: Option<Vec<ThompsonPath>>,
}

impl AcquisitionContext {
    /// Builds the context a spec needs. `training_targets` holds each model's
    /// targets (for incumbents); Thompson paths use a seeded uniform grid in
    /// the unit box of dimension `dim`.
    pub fn prepare(spec: &AcquisitionSpec, models: &[FittedGp], dim: usize) -> Result<Self, AcquisitionError> {
        let mut ctx = Self::default();
        match spec {
            AcquisitionSpec::ExpectedImprovement => {
                ctx.incumbents = Some(
                    models
                        .iter()
                        .map(|m| m.targets().iter().copied().fold(f64::INFINITY, f64::min))
                        .collect(),
                );
            }
            AcquisitionSpec::ThompsonSampling { seed, grid_size } => {
                let grid = uniform_grid(*grid_size, dim, *seed);
                ctx.thompson = Some(
                    models
                        .iter()
                        .enumerate()
                        .map(|(j, m)| m.thompson_path(&grid, seed.wrapping_add(1 + j as u64)))
                        .collect::<Result<_, _>>()?,
                );
            }
            _ => {}
        }
        Ok(ctx)
    }
}

/// Seeded uniform points in `[0,1]^dim`.
pub fn uniform_grid(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_6e1d);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Acquisition value per model at encoded point `x`, minimization convention.
pub fn evaluate_acquisition(
    spec: &AcquisitionSpec,
    models: &[FittedGp],
    x: &[f64],
    ctx: &AcquisitionContext,
) -> Result<Vec<f64>, AcquisitionError> {
    match spec {
        AcquisitionSpec::PosteriorMean => models
            .iter()
            .map(|m| Ok(m.predict(x)?.mean))
            .collect(),
        AcquisitionSpec::UpperConfidenceBound { beta } => models
            .iter()
            .map(|m| Ok(ucb(m.predict(x)?, *beta)))
            .collect(),
        AcquisitionSpec::ExpectedImprovement => {
            let best = ctx
                .incumbents
                .as_ref()
                .ok_or(AcquisitionError::MissingContext("incumbent values"))?;
            if best.len() != models.len() {
                return Err(AcquisitionError::LengthMismatch {
                    expected: models.len(),
                    got: best.len(),
                });
            }
            models
                .iter()
                .zip(best)
                .map(|(m, b)| Ok(-expected_improvement(m.predict(x)?, *b)?))
                .collect()
        }
        AcquisitionSpec::ThompsonSampling { .. } => {
            let paths = ctx
                .thompson
                .as_ref()
                .ok_or(AcquisitionError::MissingContext("thompson sample paths"))?;
            if paths.len() != models.len() {
                return Err(AcquisitionError::LengthMismatch {
                    expected: models.len(),
                    got: paths.len(),
                });
            }
            Ok(paths.iter().map(|p| p.eval(x)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{GpConfig, NoiseSetting};

    fn post(mean: f64, variance: f64) -> Posterior {
        Posterior { mean, variance }
    }

    #[test]
    fn ei_examples() {
        let at_best = expected_improvement(post(0.0, 1.0), 0.0).unwrap();
        assert!((at_best - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(post(1.0, 0.0), 0.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(post(-2.0, 0.0), 0.0).unwrap(), 2.0);
        assert!(expected_improvement(post(f64::NAN, 1.0), 0.0).is_err());
    }

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb(post(1.5, 0.0), 3.0), 1.5);
        assert_eq!(ucb(post(1.0, 0.25), 4.0), 0.0);
        assert!(ucb(post(1.0, 0.25), 9.0) <= ucb(post(1.0, 0.25), 4.0));
    }

    #[test]
    fn tchebycheff_examples() {
        let w = ScalarizationWeights::new(vec![1.0, 0.0], 0.05).unwrap();
        assert!((tchebycheff(&[2.0, 5.0], &w).unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(tchebycheff(&[0.0, 0.0], &w).unwrap(), 0.0);
        let half = ScalarizationWeights::new(vec![0.5, 0.5], 0.05).unwrap();
        assert_eq!(
            tchebycheff(&[0.3, 0.7], &half).unwrap(),
            tchebycheff(&[0.7, 0.3], &half).unwrap()
        );
        assert!(tchebycheff(&[1.0], &half).is_err());
    }

    #[test]
    fn weights_validation_and_sampling() {
        assert!(ScalarizationWeights::new(vec![0.5, 0.6], 0.05).is_err());
        assert!(ScalarizationWeights::new(vec![0.5, 0.5], 0.0).is_err());
        assert!(ScalarizationWeights::new(vec![1.5, -0.5], 0.05).is_err());
        let w = ScalarizationWeights::sample(3, DEFAULT_RHO, 11);
        assert_eq!(w, ScalarizationWeights::sample(3, DEFAULT_RHO, 11));
        assert!((w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn normalizer_degenerate_maps_to_zero() {
        let n = Normalizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(n.apply(&[2.0, 5.0]), vec![0.5, 0.0]);
    }

    fn models() -> Vec<FittedGp> {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let cfg = GpConfig {
            noise: NoiseSetting::Fixed { variance: 1e-10 },
            ..GpConfig::default()
        };
        let y1: Vec<f64> = x.iter().map(|v| v[0] * v[0]).collect();
        let y2: Vec<f64> = x.iter().map(|v| (1.0 - v[0]).powi(2)).collect();
        vec![
            FittedGp::fit(&x, &y1, &cfg, 0).unwrap(),
            FittedGp::fit(&x, &y2, &cfg, 1).unwrap(),
        ]
    }

    #[test]
    fn posterior_mean_kind_matches_predict() {
        let ms = models();
        let spec = AcquisitionSpec::PosteriorMean;
        let ctx = AcquisitionContext::prepare(&spec, &ms, 1).unwrap();
        let v = evaluate_acquisition(&spec, &ms, &[0.33], &ctx).unwrap();
        assert_eq!(v[0], ms[0].predict(&[0.33]).unwrap().mean);
        assert_eq!(v[1], ms[1].predict(&[0.33]).unwrap().mean);
    }

    #[test]
    fn ei_at_incumbent_training_point_is_zero() {
        let ms = models();
        let spec = AcquisitionSpec::ExpectedImprovement;
        // first objective incumbent is at x = 0
        let ctx = AcquisitionContext::prepare(&spec, &ms, 1).unwrap();
        let v = evaluate_acquisition(&spec, &ms, &[0.0], &ctx).unwrap();
        // sigma is the root of a ~1e-10 variance
        assert!(v[0].abs() < 1e-5, "{v:?}");
        assert!(matches!(
            evaluate_acquisition(&spec, &ms, &[0.0], &AcquisitionContext::default()),
            Err(AcquisitionError::MissingContext(_))
        ));
    }

    #[test]
    fn thompson_is_deterministic() {
        let ms = models();
        let spec = AcquisitionSpec::ThompsonSampling {
            seed: 5,
            grid_size: 50,
        };
        let a = AcquisitionContext::prepare(&spec, &ms, 1).unwrap();
        let b = AcquisitionContext::prepare(&spec, &ms, 1).unwrap();
        for x in [0.1, 0.55, 0.9] {
            assert_eq!(
                evaluate_acquisition(&spec, &ms, &[x], &a).unwrap(),
                evaluate_acquisition(&spec, &ms, &[x], &b).unwrap()
            );
        }
    }
}
