//! Independent reference implementations used to check the library.
#![allow(dead_code)]

/// Plain weak-dominance-plus-strict-improvement check, written out directly.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
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

/// Fronts by repeated peeling: each round keeps the points no remaining
/// point dominates.
pub fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Hypervolume by inclusion-exclusion over all non-empty subsets.
pub fn hv_inclusion_exclusion(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut vol = 1.0;
        for (j, r) in reference.iter().enumerate() {
            let worst = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| points[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            vol *= (r - worst).max(0.0);
        }
        total += if mask.count_ones() % 2 == 1 { vol } else { -vol };
    }
    total
}

/// Central finite differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += step;
            lo[k] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}

/// Largest hypervolume over all `k`-subsets of `candidates` added to `base`.
pub fn best_subset_hv(base: &[Vec<f64>], candidates: &[Vec<f64>], k: usize, reference: &[f64]) -> f64 {
    let n = candidates.len();
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut pts: Vec<Vec<f64>> = base.to_vec();
        pts.extend((0..n).filter(|i| mask & (1 << i) != 0).map(|i| candidates[i].clone()));
        pts.retain(|p| p.iter().zip(reference).all(|(a, r)| a <= r));
        best = best.max(hv_inclusion_exclusion(&pts, reference));
    }
    best
}
