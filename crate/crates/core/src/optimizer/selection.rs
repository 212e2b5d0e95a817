//! Batch selection from the solver's candidate front.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pareto::{hypervolume_clipped, hypervolume_monte_carlo, ParetoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionSpec {
    HypervolumeImprovement,
    Uncertainty,
    Random {
        #[serde(default)]
        seed: u64,
    },
    /// Lowest first acquisition value first. Used for scalarized pipelines.
    BestAcquisition,
}

impl SelectionSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SelectionSpec::HypervolumeImprovement => "hypervolume_improvement",
            SelectionSpec::Uncertainty => "uncertainty",
            SelectionSpec::Random { .. } => "random",
            SelectionSpec::BestAcquisition => "best_acquisition",
        }
    }
}

/// A solver output point with its posterior, in the internal (minimization)
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub encoded: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub acq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Indices into the candidate list, in pick order.
    pub chosen: Vec<usize>,
    /// Score of each pick: HV gain, summed variance, acquisition value or 0.
    pub scores: Vec<f64>,
    /// Fewer candidates than requested.
    pub shortfall: bool,
}

const MC_SELECTION_SAMPLES: usize = 20_000;

/// Hypervolume used for greedy selection: exact up to 3 objectives, a fixed
/// seed Monte Carlo estimate beyond.
pub fn selection_hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64, ParetoError> {
    if reference.len() <= 3 {
        return hypervolume_clipped(points, reference);
    }
    let inside: Vec<&Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a <= r))
        .collect();
    if inside.is_empty() {
        return Ok(0.0);
    }
    Ok(hypervolume_monte_carlo(&inside, reference, MC_SELECTION_SAMPLES, 0)?.value)
}

/// Picks up to `count` candidates. `evaluated_front` and `reference` only
/// matter for hypervolume improvement.
pub fn select(
    candidates: &[Candidate],
    spec: &SelectionSpec,
    count: usize,
    evaluated_front: &[Vec<f64>],
    reference: &[f64],
) -> Result<Selection, ParetoError> {
    let take = count.min(candidates.len());
    let shortfall = take < count;
    let (chosen, scores) = match spec {
        SelectionSpec::HypervolumeImprovement => greedy_hvi(candidates, take, evaluated_front, reference)?,
        SelectionSpec::Uncertainty => {
            let total: Vec<f64> = candidates.iter().map(|c| c.variance.iter().sum()).collect();
            top_by(&total, take, |a, b| b.total_cmp(a))
        }
        SelectionSpec::BestAcquisition => {
            let first: Vec<f64> = candidates
                .iter()
                .map(|c| c.acq.first().copied().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY))
                .collect();
            top_by(&first, take, |a, b| a.total_cmp(b))
        }
        SelectionSpec::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let chosen = sample(&mut rng, candidates.len(), take).into_vec();
            let scores = vec![0.0; chosen.len()];
            (chosen, scores)
        }
    };
    Ok(Selection {
        chosen,
        scores,
        shortfall,
    })
}

fn top_by(values: &[f64], take: usize, cmp: impl Fn(&f64, &f64) -> std::cmp::Ordering) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp(&values[a], &values[b]).then(a.cmp(&b)));
    order.truncate(take);
    let scores = order.iter().map(|&i| values[i]).collect();
    (order, scores)
}

fn greedy_hvi(
    candidates: &[Candidate],
    take: usize,
    evaluated_front: &[Vec<f64>],
    reference: &[f64],
) -> Result<(Vec<usize>, Vec<f64>), ParetoError> {
    let mut set: Vec<Vec<f64>> = evaluated_front.to_vec();
    let mut base = selection_hypervolume(&set, reference)?;
    let mut used = vec![false; candidates.len()];
    let mut chosen = Vec::with_capacity(take);
    let mut scores = Vec::with_capacity(take);
    for _ in 0..take {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            set.push(c.mean.clone());
            let gain = selection_hypervolume(&set, reference)? - base;
            set.pop();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, gain) = best.expect("take never exceeds candidates");
        used[i] = true;
        set.push(candidates[i].mean.clone());
        base += gain;
        chosen.push(i);
        scores.push(gain);
    }
    Ok((chosen, scores))
}
