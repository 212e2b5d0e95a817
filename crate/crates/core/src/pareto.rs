//! Multi-objective arithmetic shared by the solver, selection and reporting.
//!
//! Every function here assumes the minimization convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default Monte Carlo sample count for `m >= 4` hypervolume.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParetoError {
    #[error("point has {got} objectives, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty point set")]
    Empty,
    #[error("point {0} has a non-finite objective value")]
    NonFinite(usize),
    #[error("point {index} is worse than the reference point in objective {objective}")]
    BeyondReference { index: usize, objective: usize },
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, ParetoError> {
    if a.len() != b.len() {
        return Err(ParetoError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// `a` is no worse than `b` in every objective.
#[inline]
pub(crate) fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Successive non-dominated fronts, front 0 first. Indices refer to the
/// input slice and are ascending within each front.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontPartition {
    pub fronts: Vec<Vec<usize>>,
}

impl FrontPartition {
    /// Front index of every input point.
    pub fn ranks(&self) -> Vec<usize> {
        let n = self.fronts.iter().map(Vec::len).sum();
        let mut ranks = vec![0; n];
        for (r, front) in self.fronts.iter().enumerate() {
            for &i in front {
                ranks[i] = r;
            }
        }
        ranks
    }

    pub fn first(&self) -> &[usize] {
        self.fronts.first().map_or(&[], Vec::as_slice)
    }
}

fn check_uniform<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, ParetoError> {
    let m = points.first().ok_or(ParetoError::Empty)?.as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != m {
            return Err(ParetoError::LengthMismatch {
                expected: m,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ParetoError::NonFinite(i));
        }
    }
    Ok(m)
}

/// Fast non-dominated sorting (O(m·n²)).
pub fn non_dominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Result<FrontPartition, ParetoError> {
    check_uniform(points)?;
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates_unchecked(a, b) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates_unchecked(b, a) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(FrontPartition { fronts })
}

/// Indices of the non-dominated points, ascending. Empty input gives empty output.
pub fn non_dominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .any(|q| dominates_unchecked(q.as_ref(), points[i].as_ref()))
        })
        .collect()
}

/// Crowding distance of each point of a front.
///
/// A point holding the minimum or maximum of any objective gets +inf. Otherwise
/// each objective adds the gap between the nearest strictly smaller and nearest
/// strictly larger values, divided by that objective's range. Using distinct
/// neighbor values keeps the result independent of input order when values tie.
/// An objective with zero range contributes nothing.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n < 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut distance = vec![0.0; n];
    let mut column: Vec<f64> = Vec::with_capacity(n);
    for j in 0..m {
        column.clear();
        column.extend(front.iter().map(|p| p.as_ref()[j]));
        let mut sorted = column.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for (i, &v) in column.iter().enumerate() {
            if v == lo || v == hi {
                distance[i] = f64::INFINITY;
                continue;
            }
            let pos = sorted.partition_point(|&s| s < v);
            distance[i] += (sorted[pos + 1] - sorted[pos - 1]) / range;
        }
    }
    distance
}

/// A Monte Carlo hypervolume estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn check_reference<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<(), ParetoError> {
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(ParetoError::NonFinite(usize::MAX));
    }
    for (index, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != reference.len() {
            return Err(ParetoError::LengthMismatch {
                expected: reference.len(),
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ParetoError::NonFinite(index));
        }
        if let Some(objective) = p.iter().zip(reference).position(|(x, r)| x > r) {
            return Err(ParetoError::BeyondReference { index, objective });
        }
    }
    Ok(())
}

/// Hypervolume dominated by `points` and bounded by `reference`.
///
/// Exact for two and three objectives; a seeded Monte Carlo estimate with
/// [`DEFAULT_MC_SAMPLES`] samples for four or more.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64, ParetoError> {
    check_reference(points, reference)?;
    if points.is_empty() {
        return Ok(0.0);
    }
    Ok(match reference.len() {
        0 => 0.0,
        1 => {
            let best = points
                .iter()
                .map(|p| p.as_ref()[0])
                .fold(f64::INFINITY, f64::min);
            reference[0] - best
        }
        2 => hv2(points.iter().map(|p| [p.as_ref()[0], p.as_ref()[1]]).collect(), reference),
        3 => hv3(points, reference),
        _ => monte_carlo_unchecked(points, reference, DEFAULT_MC_SAMPLES, 0).value,
    })
}

/// Hypervolume of the points that weakly dominate `reference`; others are
/// ignored because they contribute nothing.
pub fn hypervolume_clipped<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64, ParetoError> {
    let inside: Vec<&[f64]> = points
        .iter()
        .map(AsRef::as_ref)
        .filter(|p| p.len() == reference.len() && weakly_dominates(p, reference))
        .collect();
    hypervolume(&inside, reference)
}

fn hv2(mut pts: Vec<[f64; 2]>, reference: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut volume = 0.0;
    let mut floor = reference[1];
    for [x, y] in pts {
        if y < floor {
            volume += (reference[0] - x) * (floor - y);
            floor = y;
        }
    }
    volume
}

fn hv3<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> f64 {
    let mut pts: Vec<[f64; 3]> = points
        .iter()
        .map(|p| {
            let p = p.as_ref();
            [p[0], p[1], p[2]]
        })
        .collect();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    for i in 0..pts.len() {
        let top = if i + 1 < pts.len() { pts[i + 1][2] } else { reference[2] };
        let depth = top - pts[i][2];
        if depth <= 0.0 {
            continue;
        }
        let slice: Vec<[f64; 2]> = pts[..=i].iter().map(|p| [p[0], p[1]]).collect();
        volume += depth * hv2(slice, reference);
    }
    volume
}

/// Seeded Monte Carlo hypervolume estimate for any number of objectives.
/// Samples uniformly in the box between the ideal point and `reference`.
pub fn hypervolume_monte_carlo<P: AsRef<[f64]>>(
    points: &[P],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> Result<HvEstimate, ParetoError> {
    check_reference(points, reference)?;
    Ok(monte_carlo_unchecked(points, reference, samples, seed))
}

fn monte_carlo_unchecked<P: AsRef<[f64]>>(
    points: &[P],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> HvEstimate {
    let m = reference.len();
    if points.is_empty() || samples == 0 {
        return HvEstimate {
            value: 0.0,
            std_error: 0.0,
            samples,
        };
    }
    let front: Vec<&[f64]> = {
        let all: Vec<&[f64]> = points.iter().map(AsRef::as_ref).collect();
        non_dominated_indices(&all).into_iter().map(|i| all[i]).collect()
    };
    let lower: Vec<f64> = (0..m)
        .map(|j| front.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let box_volume: f64 = lower.iter().zip(reference).map(|(l, r)| r - l).product();
    if box_volume <= 0.0 {
        return HvEstimate {
            value: 0.0,
            std_error: 0.0,
            samples,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..samples {
        for j in 0..m {
            sample[j] = lower[j] + rng.random::<f64>() * (reference[j] - lower[j]);
        }
        if front.iter().any(|p| weakly_dominates(p, &sample)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    HvEstimate {
        value: box_volume * frac,
        std_error: box_volume * (frac * (1.0 - frac) / samples as f64).sqrt(),
        samples,
    }
}
