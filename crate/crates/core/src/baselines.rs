//! Reference regressors for benchmarks: one global ridge model and plain
//! k-nearest-neighbor averaging.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, mismatch, FallError, Result};
use crate::linalg::{augment, augment_rows, ridge_solve};
use crate::neighbors::k_nearest;
use crate::predict::neighbor_weights;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel<T> {
    /// `d' x m` coefficients, bias in the last row when enabled.
    pub w: Array2<T>,
    pub alpha: T,
    pub with_bias: bool,
}

impl<T: Scalar> RidgeModel<T> {
    pub fn fit(data: &Dataset<T>, alpha: T, with_bias: bool) -> Result<Self> {
        if !(alpha > T::zero()) {
            return Err(invalid(format!("ridge alpha must be positive, got {alpha}")));
        }
        let x = augment_rows(data.x.view(), with_bias);
        let w = ridge_solve(x.view(), data.y.view(), alpha)?;
        Ok(Self { w, alpha, with_bias })
    }

    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let x_aug = augment(x, self.with_bias);
        if x_aug.len() != self.w.nrows() {
            return Err(mismatch("input width does not match ridge model"));
        }
        Ok(self.w.t().dot(&x_aug))
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let xa = augment_rows(x, self.with_bias);
        if xa.ncols() != self.w.nrows() {
            return Err(mismatch("input width does not match ridge model"));
        }
        Ok(xa.dot(&self.w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeighting {
    Uniform,
    InverseDistance,
}

impl fmt::Display for KnnWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnnWeighting::Uniform => "uniform",
            KnnWeighting::InverseDistance => "distance",
        })
    }
}

impl FromStr for KnnWeighting {
    type Err = FallError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KnnWeighting::Uniform),
            "distance" | "inverse_distance" => Ok(KnnWeighting::InverseDistance),
            other => Err(invalid(format!("unknown knn weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    pub train_x: Array2<T>,
    pub train_y: Array2<T>,
    pub k: usize,
    pub weighting: KnnWeighting,
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit(data: &Dataset<T>, k: usize, weighting: KnnWeighting) -> Result<Self> {
        if k == 0 || k > data.n() {
            return Err(invalid(format!("knn k = {k} outside 1..={}", data.n())));
        }
        Ok(Self { train_x: data.x.clone(), train_y: data.y.clone(), k, weighting })
    }

    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let (indices, weights): (Vec<usize>, Vec<T>) = match self.weighting {
            KnnWeighting::Uniform => {
                let w = T::one() / T::of(self.k as f64);
                k_nearest(self.train_x.view(), x, self.k)?.into_iter().map(|nb| (nb.index, w)).unzip()
            }
            KnnWeighting::InverseDistance => {
                let nw = neighbor_weights(x, self.train_x.view(), self.k, 1e-12)?;
                (nw.indices, nw.alphas.to_vec())
            }
        };
        let mut out = Array1::zeros(self.train_y.ncols());
        for (i, w) in indices.into_iter().zip(weights) {
            out.scaled_add(w, &self.train_y.row(i));
        }
        Ok(out)
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut out = Array2::zeros((x.nrows(), self.train_y.ncols()));
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            out.row_mut(i).assign(&self.predict(row)?);
        }
        Ok(out)
    }
}

/// Convenience wrapper matching the free-function style of the other modules.
pub fn knn_predict<T: Scalar>(model: &KnnModel<T>, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
    model.predict(x)
}

pub fn ridge_fit<T: Scalar>(data: &Dataset<T>, alpha: T, with_bias: bool) -> Result<RidgeModel<T>> {
    RidgeModel::fit(data, alpha, with_bias)
}
