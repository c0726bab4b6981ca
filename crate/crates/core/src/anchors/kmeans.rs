//! Lloyd's algorithm with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::squared_distance;
use crate::random::seeded_rng;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no center moves farther than this (Euclidean).
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub centers: Array2<T>,
    /// Nearest-center index of every point under the final centers.
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

fn distinct_rows<T: Scalar>(points: ArrayView2<'_, T>) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64().to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn nearest_center<T: Scalar>(p: ArrayView1<'_, T>, centers: &Array2<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = squared_distance(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeding<T: Scalar, R: Rng>(points: ArrayView2<'_, T>, k: usize, rng: &mut R) -> Array2<T> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| squared_distance(p, points.row(first)).as_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        // total > 0 because there are at least k distinct points
        let mut u = rng.random_range(0.0..total);
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        if d2[pick] == 0.0 {
            pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
        }
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            let d = squared_distance(p, points.row(pick)).as_f64();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

pub fn kmeans<T: Scalar>(points: ArrayView2<'_, T>, k: usize, config: &KMeansConfig) -> Result<KMeansResult<T>> {
    let n = points.nrows();
    if k == 0 {
        return Err(invalid("k-means needs k >= 1"));
    }
    let distinct = distinct_rows(points);
    if k > distinct {
        return Err(invalid(format!("k = {k} exceeds the {distinct} distinct points")));
    }
    let mut rng = seeded_rng(config.seed);
    let mut centers = plus_plus_seeding(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut dists = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut objective = T::zero();
        for (i, p) in points.rows().into_iter().enumerate() {
            let (c, d) = nearest_center(p, &centers);
            assignments[i] = c;
            dists[i] = d;
            objective += d;
        }
        history.push(objective);

        let mut sums = Array2::<T>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let mut row = sums.row_mut(assignments[i]);
            row += &p;
            counts[assignments[i]] += 1;
        }
        let mut updated = centers.clone();
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / T::of(counts[c] as f64);
                updated.row_mut(c).assign(&mean);
            } else {
                // Empty cluster: move it onto the point worst served by the
                // current assignment.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None::<usize>, |best, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                taken[far] = true;
                updated.row_mut(c).assign(&points.row(far));
            }
        }
        let shift = centers
            .rows()
            .into_iter()
            .zip(updated.rows())
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(T::zero(), T::max);
        centers = updated;
        if shift.as_f64() < config.tol {
            converged = true;
            break;
        }
    }

    for (i, p) in points.rows().into_iter().enumerate() {
        assignments[i] = nearest_center(p, &centers).0;
    }
    Ok(KMeansResult { centers, assignments, objective_history: history, iterations, converged })
}
