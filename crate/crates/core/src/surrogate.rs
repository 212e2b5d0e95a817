//! Gaussian process surrogate: Matérn 5/2 kernel with ARD lengthscales,
//! hyperparameters fitted by maximizing the log marginal likelihood with
//! multi-restart projected gradient ascent in log space.
//!
//! Targets are standardized (zero mean, unit variance) before fitting; all
//! public predictions are in original target units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Extra diagonal jitter tried in order when a factorization fails.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Rows closer than this (max-norm) are treated as the same input.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least 2 distinct training points, got {0}")]
    InsufficientData(usize),
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("input has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("kernel matrix not positive definite even with jitter {0:e}")]
    Conditioning(f64),
    #[error("posterior variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),
    #[error("candidate set is empty")]
    EmptyCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    /// In standardized target units.
    pub signal_variance: f64,
    /// In standardized target units.
    pub noise_variance: f64,
    /// Constant prior mean in original target units.
    pub prior_mean: f64,
}

impl GpHyperparams {
    /// `[ln l_1 .. ln l_d, ln signal_variance, ln noise_variance]`.
    pub fn to_log_params(&self) -> Vec<f64> {
        self.lengthscales
            .iter()
            .map(|l| l.ln())
            .chain([self.signal_variance.ln(), self.noise_variance.ln()])
            .collect()
    }

    fn from_log_params(p: &[f64], prior_mean: f64) -> Self {
        let d = p.len() - 2;
        Self {
            lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: p[d].exp(),
            noise_variance: p[d + 1].exp(),
            prior_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoiseSetting {
    /// Fitted within `[lower, upper]` (standardized units).
    Learned { lower: f64, upper: f64 },
    Fixed { variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise: NoiseSetting,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 200,
            lengthscale_bounds: (1e-3, 10.0),
            signal_variance_bounds: (5e-2, 20.0),
            noise: NoiseSetting::Learned {
                lower: 1e-6,
                upper: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[inline]
fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum()
}

/// Matérn 5/2 covariance.
#[inline]
pub fn matern52(a: &[f64], b: &[f64], lengthscales: &[f64], signal_variance: f64) -> f64 {
    let r = scaled_sq_dist(a, b, lengthscales).sqrt();
    let s = SQRT5 * r;
    signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn kernel_matrix(x: &[Vec<f64>], lengthscales: &[f64], signal_variance: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal_variance;
        for j in 0..i {
            let v = matern52(&x[i], &x[j], lengthscales, signal_variance);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factor_with_ladder(mut k: DMatrix<f64>, base: f64) -> Result<(Cholesky<f64, Dyn>, f64), SurrogateError> {
    let n = k.nrows();
    let mut applied = 0.0;
    for &jitter in &JITTER_LADDER {
        for i in 0..n {
            k[(i, i)] += jitter * base - applied;
        }
        applied = jitter * base;
        if let Some(c) = k.clone().cholesky() {
            return Ok((c, jitter));
        }
    }
    Err(SurrogateError::Conditioning(JITTER_LADDER[JITTER_LADDER.len() - 1]))
}

fn lml_inner(
    x: &[Vec<f64>],
    y: &[f64],
    log_params: &[f64],
    jitter: f64,
    want_grad: bool,
) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = log_params.len() - 2;
    let lengthscales: Vec<f64> = log_params[..d].iter().map(|v| v.exp()).collect();
    let signal = log_params[d].exp();
    let noise = log_params[d + 1].exp();
    let k_signal = kernel_matrix(x, &lengthscales, signal);
    let mut k = k_signal.clone();
    for i in 0..n {
        k[(i, i)] += noise + jitter;
    }
    let chol = k.cholesky()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !lml.is_finite() {
        return None;
    }
    if !want_grad {
        return Some((lml, Vec::new()));
    }
    // dLML/dp = 1/2 tr(W dK/dp), W = alpha alpha^T - K^-1
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..i {
            let wij = w[(i, j)];
            let r = scaled_sq_dist(&x[i], &x[j], &lengthscales).sqrt();
            let s = SQRT5 * r;
            // d k / d ln l_k = signal * 5/3 (1 + s) e^{-s} * (dx_k / l_k)^2
            let common = signal * (5.0 / 3.0) * (1.0 + s) * (-s).exp();
            for kk in 0..d {
                let t = (x[i][kk] - x[j][kk]) / lengthscales[kk];
                // symmetric pair (i,j) and (j,i)
                grad[kk] += wij * common * t * t;
            }
            grad[d] += wij * k_signal[(i, j)];
        }
        grad[d] += 0.5 * w[(i, i)] * k_signal[(i, i)];
        grad[d + 1] += 0.5 * w[(i, i)] * noise;
    }
    Some((lml, grad))
}

/// Log marginal likelihood of standardized targets `y` at
/// `log_params = [ln l_1 .. ln l_d, ln signal, ln noise]`. No jitter is added.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], log_params: &[f64]) -> Result<f64, SurrogateError> {
    lml_inner(x, y, log_params, 0.0, false)
        .map(|(v, _)| v)
        .ok_or(SurrogateError::Conditioning(0.0))
}

/// Log marginal likelihood and its analytic gradient with respect to the log
/// parameters.
pub fn log_marginal_likelihood_grad(
    x: &[Vec<f64>],
    y: &[f64],
    log_params: &[f64],
) -> Result<(f64, Vec<f64>), SurrogateError> {
    lml_inner(x, y, log_params, 0.0, true).ok_or(SurrogateError::Conditioning(0.0))
}

/// Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking.
fn maximize_box(
    f: &dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    start: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    max_iterations: usize,
) -> Option<(Vec<f64>, f64)> {
    let project = |x: &mut Vec<f64>| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut x = start;
    project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let mut step = 0.1 / g.iter().fold(1e-12f64, |m, v| m.max(v.abs())).max(1.0);
    let mut stalls = 0;
    for _ in 0..max_iterations {
        let mut accepted = None;
        while step > 1e-14 {
            let mut candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            project(&mut candidate);
            let dir: Vec<f64> = candidate.iter().zip(&x).map(|(a, b)| a - b).collect();
            let gain: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if dir.iter().all(|v| v.abs() < 1e-12) {
                return Some((x, fx));
            }
            if let Some((fc, gc)) = f(&candidate) {
                if fc >= fx + 1e-4 * gain {
                    accepted = Some((candidate, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yk: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yk).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-8, 1e3) } else { (step * 2.0).min(1e3) };
        let improvement = fxn - fx;
        x = xn;
        g = gn;
        fx = fxn;
        if improvement < 1e-10 * (1.0 + fx.abs()) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Some((x, fx))
}

/// Per-restart outcome of a fit, for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Final log marginal likelihood of each restart (`-inf` if it failed).
    pub restart_lml: Vec<f64>,
    /// Number of training rows removed by duplicate merging.
    pub merged_duplicates: usize,
}

/// Serializable form of a fitted model: hyperparameters plus training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub hyperparams: GpHyperparams,
    pub inputs: Vec<Vec<f64>>,
    /// Merged training targets in original units.
    pub targets: Vec<f64>,
}

/// A Gaussian process fitted to one objective. Immutable; safe to share
/// across threads for prediction.
#[derive(Debug, Clone)]
pub struct FittedGp {
    hyperparams: GpHyperparams,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    standardized: Vec<f64>,
    target_mean: f64,
    target_std: f64,
    degenerate: bool,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
    report: FitReport,
}

fn merge_duplicates(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for (xi, yi) in x.iter().zip(y) {
        let found = rows.iter().position(|r| {
            r.iter()
                .zip(xi)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
        });
        match found {
            Some(k) => {
                sums[k].0 += yi;
                sums[k].1 += 1;
            }
            None => {
                rows.push(xi.clone());
                sums.push((*yi, 1));
            }
        }
    }
    let merged = x.len() - rows.len();
    (rows, sums.into_iter().map(|(s, c)| s / c as f64).collect(), merged)
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return (vec![0.0; y.len()], mean, 1.0, true);
    }
    (y.iter().map(|v| (v - mean) / std).collect(), mean, std, false)
}

impl FittedGp {
    /// Fits hyperparameters by maximizing the log marginal likelihood.
    /// Deterministic for a given `(x, y, config, seed)`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &GpConfig, seed: u64) -> Result<Self, SurrogateError> {
        if x.len() != y.len() {
            return Err(SurrogateError::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(SurrogateError::InsufficientData(x.len()));
        }
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(SurrogateError::Dimension {
                expected: d,
                got: x.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d),
            });
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite);
        }
        let (inputs, targets, merged) = merge_duplicates(x, y);
        if inputs.len() < 2 {
            return Err(SurrogateError::InsufficientData(inputs.len()));
        }
        let (standardized, mean, std, degenerate) = standardize(&targets);

        let (ls_lo, ls_hi) = config.lengthscale_bounds;
        let (sv_lo, sv_hi) = config.signal_variance_bounds;
        let (noise_lo, noise_hi, learn_noise) = match config.noise {
            NoiseSetting::Learned { lower, upper } => (lower, upper, true),
            NoiseSetting::Fixed { variance } => (variance, variance, false),
        };
        let mut lower: Vec<f64> = vec![ls_lo.ln(); d];
        lower.push(sv_lo.ln());
        let mut upper: Vec<f64> = vec![ls_hi.ln(); d];
        upper.push(sv_hi.ln());
        let fixed_noise_log = noise_lo.ln();
        if learn_noise {
            lower.push(noise_lo.ln());
            upper.push(noise_hi.ln());
        }
        let expand = |p: &[f64]| -> Vec<f64> {
            let mut full = p.to_vec();
            if !learn_noise {
                full.push(fixed_noise_log);
            }
            full
        };

        let default_start: Vec<f64> = {
            let mut p = vec![(0.5f64).clamp(ls_lo, ls_hi).ln(); d];
            p.push((1.0f64).clamp(sv_lo, sv_hi).ln());
            if learn_noise {
                p.push((1e-3f64).clamp(noise_lo, noise_hi).ln());
            }
            p
        };

        let mut restart_lml = Vec::new();
        let mut best: Option<(Vec<f64>, f64)> = None;
        if degenerate {
            best = Some((default_start.clone(), f64::NAN));
        } else {
            let objective = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
                let full = expand(p);
                let (v, mut g) = lml_inner(&inputs, &standardized, &full, 0.0, true)?;
                if !learn_noise {
                    g.pop();
                }
                Some((v, g))
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for restart in 0..config.restarts.max(1) {
                let start = if restart == 0 {
                    default_start.clone()
                } else {
                    lower
                        .iter()
                        .zip(&upper)
                        .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                        .collect()
                };
                match maximize_box(&objective, start, &lower, &upper, config.max_iterations) {
                    Some((p, v)) => {
                        restart_lml.push(v);
                        if best.as_ref().is_none_or(|(_, b)| v > *b) {
                            best = Some((p, v));
                        }
                    }
                    None => restart_lml.push(f64::NEG_INFINITY),
                }
            }
        }
        // Every restart failing to factorize at its start falls back to the
        // default point, factorized with jitter below.
        let params = expand(&best.map(|(p, _)| p).unwrap_or(default_start));
        let hyperparams = GpHyperparams::from_log_params(&params, mean);
        Self::assemble(
            hyperparams,
            inputs,
            targets,
            standardized,
            mean,
            std,
            degenerate,
            FitReport {
                restart_lml,
                merged_duplicates: merged,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        hyperparams: GpHyperparams,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        standardized: Vec<f64>,
        target_mean: f64,
        target_std: f64,
        degenerate: bool,
        report: FitReport,
    ) -> Result<Self, SurrogateError> {
        let mut k = kernel_matrix(&inputs, &hyperparams.lengthscales, hyperparams.signal_variance);
        for i in 0..inputs.len() {
            k[(i, i)] += hyperparams.noise_variance;
        }
        let (chol, jitter) = factor_with_ladder(k, 1.0)?;
        let alpha = chol.solve(&DVector::from_column_slice(&standardized));
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let n = inputs.len() as f64;
        let lml = -0.5 * DVector::from_column_slice(&standardized).dot(&alpha)
            - 0.5 * log_det
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            hyperparams,
            inputs,
            targets,
            standardized,
            target_mean,
            target_std,
            degenerate,
            chol,
            alpha,
            jitter,
            lml,
            report,
        })
    }

    /// Rebuilds a model from a snapshot without refitting hyperparameters.
    pub fn from_snapshot(snapshot: GpSnapshot) -> Result<Self, SurrogateError> {
        let GpSnapshot {
            hyperparams,
            inputs,
            targets,
        } = snapshot;
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(SurrogateError::InsufficientData(inputs.len().min(targets.len())));
        }
        let (standardized, mean, std, degenerate) = standardize(&targets);
        Self::assemble(
            hyperparams,
            inputs,
            targets,
            standardized,
            mean,
            std,
            degenerate,
            FitReport {
                restart_lml: Vec::new(),
                merged_duplicates: 0,
            },
        )
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            hyperparams: self.hyperparams.clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.lengthscales.len()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn standardized_targets(&self) -> &[f64] {
        &self.standardized
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Jitter that had to be added to factorize the kernel matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), SurrogateError> {
        if x.len() != self.dim() {
            return Err(SurrogateError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        let h = &self.hyperparams;
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| matern52(x, xi, &h.lengthscales, h.signal_variance)),
        )
    }

    /// Standardized-unit posterior of the latent function.
    fn latent(&self, x: &[f64]) -> Result<(f64, f64), SurrogateError> {
        let k = self.cross(x);
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .ok_or(SurrogateError::Conditioning(self.jitter))?;
        Ok((mean, self.hyperparams.signal_variance - v.norm_squared()))
    }

    /// Posterior predictive distribution of an observation at `x`, in original
    /// target units. The variance includes observation noise.
    pub fn predict(&self, x: &[f64]) -> Result<Posterior, SurrogateError> {
        self.check_dim(x)?;
        let (mean, latent_var) = self.latent(x)?;
        let raw = latent_var + self.hyperparams.noise_variance;
        if raw < -1e-8 {
            return Err(SurrogateError::NegativeVariance(raw));
        }
        Ok(Posterior {
            mean: self.target_mean + self.target_std * mean,
            variance: raw.max(0.0) * self.target_std * self.target_std,
        })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Posterior>, SurrogateError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Joint latent posterior mean and covariance over `candidates`, standardized.
    fn joint_latent(&self, candidates: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>), SurrogateError> {
        let h = &self.hyperparams;
        let n = self.inputs.len();
        let c = candidates.len();
        let mut cross = DMatrix::zeros(n, c);
        for (j, xc) in candidates.iter().enumerate() {
            self.check_dim(xc)?;
            for (i, xi) in self.inputs.iter().enumerate() {
                cross[(i, j)] = matern52(xc, xi, &h.lengthscales, h.signal_variance);
            }
        }
        let mean = cross.tr_mul(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or(SurrogateError::Conditioning(self.jitter))?;
        let mut cov = kernel_matrix(candidates, &h.lengthscales, h.signal_variance);
        cov -= v.tr_mul(&v);
        Ok((mean, cov))
    }

    /// One joint draw from the latent posterior over `candidates`, in original
    /// units. Deterministic in `seed`.
    pub fn sample_path(&self, candidates: &[Vec<f64>], seed: u64) -> Result<Vec<f64>, SurrogateError> {
        if candidates.is_empty() {
            return Err(SurrogateError::EmptyCandidates);
        }
        let (mean, cov) = self.joint_latent(candidates)?;
        let (chol, _) = factor_with_ladder(cov, self.hyperparams.signal_variance)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_iterator(candidates.len(), (0..candidates.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let draw = mean + chol.l() * z;
        Ok(draw
            .iter()
            .map(|v| self.target_mean + self.target_std * v)
            .collect())
    }

    /// A continuous function through one posterior draw: the posterior mean
    /// conditioned on the sampled values at `grid`.
    pub fn thompson_path(&self, grid: &[Vec<f64>], seed: u64) -> Result<ThompsonPath, SurrogateError> {
        if grid.is_empty() {
            return Err(SurrogateError::EmptyCandidates);
        }
        let (mean, cov) = self.joint_latent(grid)?;
        let (chol, _) = factor_with_ladder(cov, self.hyperparams.signal_variance)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_iterator(grid.len(), (0..grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let deviation = chol.l() * z;
        // f(x) = mu(x) + k_post(x, G) S^-1 (s - mu_G)
        //      = k(x, X) (alpha - K^-1 k(X, G) beta) + k(x, G) beta
        let beta = chol.solve(&deviation);
        let h = &self.hyperparams;
        let mut k_xg = DMatrix::zeros(self.inputs.len(), grid.len());
        for (j, g) in grid.iter().enumerate() {
            for (i, xi) in self.inputs.iter().enumerate() {
                k_xg[(i, j)] = matern52(g, xi, &h.lengthscales, h.signal_variance);
            }
        }
        let gamma = self.chol.solve(&(k_xg * &beta));
        Ok(ThompsonPath {
            train_inputs: self.inputs.clone(),
            grid: grid.to_vec(),
            train_weights: (&self.alpha - gamma).iter().copied().collect(),
            grid_weights: beta.iter().copied().collect(),
            lengthscales: h.lengthscales.clone(),
            signal_variance: h.signal_variance,
            target_mean: self.target_mean,
            target_std: self.target_std,
            grid_values: (mean + deviation)
                .iter()
                .map(|v| self.target_mean + self.target_std * v)
                .collect(),
        })
    }
}

/// A deterministic function interpolating one joint posterior sample.
#[derive(Debug, Clone)]
pub struct ThompsonPath {
    train_inputs: Vec<Vec<f64>>,
    grid: Vec<Vec<f64>>,
    train_weights: Vec<f64>,
    grid_weights: Vec<f64>,
    lengthscales: Vec<f64>,
    signal_variance: f64,
    target_mean: f64,
    target_std: f64,
    grid_values: Vec<f64>,
}

impl ThompsonPath {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let k = |a: &[f64], b: &[f64]| matern52(a, b, &self.lengthscales, self.signal_variance);
        let from_train: f64 = self
            .train_inputs
            .iter()
            .zip(&self.train_weights)
            .map(|(xi, w)| w * k(x, xi))
            .sum();
        let from_grid: f64 = self
            .grid
            .iter()
            .zip(&self.grid_weights)
            .map(|(g, w)| w * k(x, g))
            .sum();
        self.target_mean + self.target_std * (from_train + from_grid)
    }

    /// The sampled values at the grid points, original units.
    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_1d(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let y = x.iter().map(|v| (6.0 * v[0]).sin() + v[0]).collect();
        (x, y)
    }

    fn noise_floor() -> GpConfig {
        GpConfig {
            noise: NoiseSetting::Fixed { variance: 1e-10 },
            ..GpConfig::default()
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            FittedGp::fit(&[vec![0.0]], &[1.0], &GpConfig::default(), 0),
            Err(SurrogateError::InsufficientData(1))
        ));
        assert!(matches!(
            FittedGp::fit(&[vec![0.0], vec![f64::NAN]], &[1.0, 2.0], &GpConfig::default(), 0),
            Err(SurrogateError::NonFinite)
        ));
        // duplicates merge down to one row
        assert!(matches!(
            FittedGp::fit(&[vec![0.5], vec![0.5]], &[1.0, 2.0], &GpConfig::default(), 0),
            Err(SurrogateError::InsufficientData(1))
        ));
    }

    #[test]
    fn constant_targets_predict_constant() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let gp = FittedGp::fit(&x, &[3.0, 3.0, 3.0], &GpConfig::default(), 1).unwrap();
        assert!(gp.is_degenerate());
        assert_eq!(gp.hyperparams().prior_mean, 3.0);
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert!((gp.predict(&[t]).unwrap().mean - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_training_points() {
        let (x, y) = smooth_1d(5);
        let gp = FittedGp::fit(&x, &y, &noise_floor(), 3).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = gp.predict(xi).unwrap();
            let standardized_err = (p.mean - yi).abs() / gp.target_std();
            assert!(standardized_err < 1e-6, "{standardized_err}");
            assert!(p.variance < 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let (x, y) = smooth_1d(6);
        let gp = FittedGp::fit(&x, &y, &GpConfig::default(), 3).unwrap();
        let far = 11.0 * gp.hyperparams().lengthscales[0] + 1.0;
        let p = gp.predict(&[far]).unwrap();
        let h = gp.hyperparams();
        let prior_var = (h.signal_variance + h.noise_variance) * gp.target_std().powi(2);
        assert!((p.mean - h.prior_mean).abs() < 0.01 * gp.target_std());
        assert!((p.variance - prior_var).abs() < 0.01 * prior_var);
    }

    #[test]
    fn batch_matches_pointwise_and_dimension_checked() {
        let (x, y) = smooth_1d(5);
        let gp = FittedGp::fit(&x, &y, &GpConfig::default(), 0).unwrap();
        let q: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 7.0]).collect();
        let batch = gp.predict_batch(&q).unwrap();
        for (xi, p) in q.iter().zip(batch) {
            assert_eq!(gp.predict(xi).unwrap(), p);
        }
        assert!(matches!(gp.predict(&[0.0, 1.0]), Err(SurrogateError::Dimension { .. })));
    }

    #[test]
    fn fit_is_seed_deterministic_and_best_of_restarts() {
        let (x, y) = smooth_1d(8);
        let a = FittedGp::fit(&x, &y, &GpConfig::default(), 42).unwrap();
        let b = FittedGp::fit(&x, &y, &GpConfig::default(), 42).unwrap();
        assert_eq!(a.hyperparams(), b.hyperparams());
        let best = a
            .report()
            .restart_lml
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((a.log_marginal_likelihood() - best).abs() < 1e-9 * best.abs().max(1.0));
    }

    #[test]
    fn standardization_round_trip() {
        let (x, y) = smooth_1d(7);
        let y: Vec<f64> = y.iter().map(|v| 1000.0 + 50.0 * v).collect();
        let gp = FittedGp::fit(&x, &y, &noise_floor(), 0).unwrap();
        let mean_pred = x.iter().map(|xi| gp.predict(xi).unwrap().mean).sum::<f64>() / x.len() as f64;
        let mean_obs = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean_pred - mean_obs).abs() < 1e-10 * mean_obs.abs().max(1.0) * 1e3);
    }

    #[test]
    fn sample_at_training_point_matches_observation() {
        let (x, y) = smooth_1d(5);
        let gp = FittedGp::fit(&x, &y, &noise_floor(), 0).unwrap();
        let s = gp.sample_path(&[x[2].clone()], 9).unwrap();
        assert!((s[0] - y[2]).abs() < 1e-3, "{} vs {}", s[0], y[2]);
        assert_eq!(gp.sample_path(&[x[2].clone()], 9).unwrap(), s);
        assert!(matches!(gp.sample_path(&[], 0), Err(SurrogateError::EmptyCandidates)));
    }

    #[test]
    fn thompson_path_passes_through_grid_sample() {
        let (x, y) = smooth_1d(6);
        let gp = FittedGp::fit(&x, &y, &GpConfig::default(), 0).unwrap();
        let grid: Vec<Vec<f64>> = (0..9).map(|i| vec![0.05 + i as f64 * 0.11]).collect();
        let path = gp.thompson_path(&grid, 4).unwrap();
        for (g, v) in grid.iter().zip(path.grid_values()) {
            assert!((path.eval(g) - v).abs() < 1e-4 * gp.target_std().max(1.0), "{} vs {}", path.eval(g), v);
        }
    }

    #[test]
    fn snapshot_round_trip_preserves_predictions() {
        let (x, y) = smooth_1d(6);
        let gp = FittedGp::fit(&x, &y, &GpConfig::default(), 0).unwrap();
        let snap = gp.snapshot();
        let text = toml::to_string(&snap).unwrap();
        let back = FittedGp::from_snapshot(toml::from_str(&text).unwrap()).unwrap();
        for t in [0.1, 0.45, 0.8] {
            let (a, b) = (gp.predict(&[t]).unwrap(), back.predict(&[t]).unwrap());
            assert!((a.mean - b.mean).abs() < 1e-12 && (a.variance - b.variance).abs() < 1e-12);
        }
    }
}
