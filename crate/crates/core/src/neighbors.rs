//! Brute-force Euclidean nearest-neighbor search.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{invalid, mismatch, Result};
use crate::linalg::squared_distance;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub distance: T,
}

fn by_distance_then_index<T: Scalar>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// The `k` rows of `points` closest to `query`, nearest first. Equal
/// distances resolve to the lower row index.
pub fn k_nearest<T: Scalar>(points: ArrayView2<'_, T>, query: ArrayView1<'_, T>, k: usize) -> Result<Vec<Neighbor<T>>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(invalid(format!("neighbor count {k} outside 1..={n}")));
    }
    if points.ncols() != query.len() {
        return Err(mismatch(format!("query has {} features, points have {}", query.len(), points.ncols())));
    }
    let mut d2: Vec<(usize, T)> = points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| (i, squared_distance(row, query)))
        .collect();
    if k < n {
        d2.select_nth_unstable_by(k - 1, by_distance_then_index);
        d2.truncate(k);
    }
    d2.sort_by(by_distance_then_index);
    Ok(d2
        .into_iter()
        .map(|(index, sq)| Neighbor { index, distance: sq.sqrt() })
        .collect())
}
