//! Anchor models: choose `k` anchor points, take the `K` nearest training
//! rows of each, and fit one ridge model per neighborhood.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, mismatch, FallError, Result};
use crate::linalg::{augment_rows, ridge_solve};
use crate::neighbors::k_nearest;
use crate::random::seeded_rng;
use crate::Scalar;

pub mod kmeans;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMethod {
    /// `k` distinct training rows, uniformly without replacement.
    Random,
    /// Lloyd centers after k-means++ seeding.
    Kmeans,
}

impl fmt::Display for AnchorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorMethod::Random => "random",
            AnchorMethod::Kmeans => "kmeans",
        })
    }
}

impl FromStr for AnchorMethod {
    type Err = FallError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AnchorMethod::Random),
            "kmeans" => Ok(AnchorMethod::Kmeans),
            other => Err(invalid(format!("unknown anchor method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub k: usize,
    /// Neighborhood size used for each anchor fit.
    pub anchor_neighbors: usize,
    pub method: AnchorMethod,
    pub ridge_alpha: f64,
    pub with_bias: bool,
    pub seed: u64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            k: 20,
            anchor_neighbors: 20,
            method: AnchorMethod::Kmeans,
            ridge_alpha: 1.0,
            with_bias: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet<T> {
    /// `k` matrices of shape `d' x m`, `d' = d + with_bias`.
    pub models: Vec<Array2<T>>,
    /// Empty when the set was built from a-priori models.
    pub anchor_points: Vec<Array1<T>>,
    pub neighbor_sets: Vec<Vec<usize>>,
    pub with_bias: bool,
    pub ridge_alpha: T,
}

impl<T: Scalar> AnchorSet<T> {
    /// Wraps precomputed anchor models (no points or neighborhoods).
    pub fn from_models(models: Vec<Array2<T>>, with_bias: bool) -> Result<Self> {
        let set = Self { models, anchor_points: Vec::new(), neighbor_sets: Vec::new(), with_bias, ridge_alpha: T::zero() };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.models.first().ok_or_else(|| invalid("anchor set needs k >= 1"))?;
        let shape = first.dim();
        if self.with_bias && shape.0 == 0 {
            return Err(mismatch("biased anchors need at least one row"));
        }
        for (l, a) in self.models.iter().enumerate() {
            if a.dim() != shape {
                return Err(mismatch(format!("anchor {l} has shape {:?}, anchor 0 has {:?}", a.dim(), shape)));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(FallError::NonFiniteResult("anchor model"));
            }
        }
        if self.neighbor_sets.iter().any(Vec::is_empty) {
            return Err(invalid("empty anchor neighbor set"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    /// Row count `d'` of every anchor model.
    pub fn augmented_dim(&self) -> usize {
        self.models[0].nrows()
    }

    /// Raw input dimension `d`.
    pub fn input_dim(&self) -> usize {
        self.augmented_dim() - usize::from(self.with_bias)
    }

    pub fn output_dim(&self) -> usize {
        self.models[0].ncols()
    }

    /// `A_l^T x~` for an already augmented input.
    pub fn predict_augmented(&self, l: usize, x_aug: ArrayView1<'_, T>) -> Array1<T> {
        self.models[l].t().dot(&x_aug)
    }
}

/// Anchor locations in input space.
pub fn select_anchor_points<T: Scalar>(data: &Dataset<T>, k: usize, method: AnchorMethod, seed: u64) -> Result<Vec<Array1<T>>> {
    if k == 0 {
        return Err(invalid("need at least one anchor"));
    }
    match method {
        AnchorMethod::Random => {
            if k > data.n() {
                return Err(invalid(format!("{k} random anchors requested from {} rows", data.n())));
            }
            let mut rng = seeded_rng(seed);
            let picked = rand::seq::index::sample(&mut rng, data.n(), k);
            Ok(picked.iter().map(|i| data.x.row(i).to_owned()).collect())
        }
        AnchorMethod::Kmeans => {
            let res = kmeans::kmeans(data.x.view(), k, &kmeans::KMeansConfig { seed, ..Default::default() })?;
            Ok(res.centers.axis_iter(Axis(0)).map(|c| c.to_owned()).collect())
        }
    }
}

/// Indices of the `anchor_neighbors` rows nearest to `anchor_point`, nearest
/// first, ties to the lower index.
pub fn neighbor_set<T: Scalar>(data: &Dataset<T>, anchor_point: ArrayView1<'_, T>, anchor_neighbors: usize) -> Result<Vec<usize>> {
    Ok(k_nearest(data.x.view(), anchor_point, anchor_neighbors)?
        .into_iter()
        .map(|nb| nb.index)
        .collect())
}

/// Ridge model on the rows `indices`, bias column appended when requested.
/// The bias coefficient is penalized like every other entry.
pub fn fit_anchor_model<T: Scalar>(data: &Dataset<T>, indices: &[usize], ridge_alpha: T, with_bias: bool) -> Result<Array2<T>> {
    if indices.is_empty() {
        return Err(invalid("anchor neighborhood is empty"));
    }
    if !(ridge_alpha > T::zero()) {
        return Err(invalid(format!("ridge alpha must be positive, got {ridge_alpha}")));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(invalid(format!("row index {bad} out of range for {} rows", data.n())));
    }
    let xs = augment_rows(data.x.select(Axis(0), indices).view(), with_bias);
    let ys = data.y.select(Axis(0), indices);
    ridge_solve(xs.view(), ys.view(), ridge_alpha)
}

/// Points, neighborhoods and per-anchor ridge fits in one pass. The fits are
/// independent and run on the current rayon pool.
pub fn build_anchor_set<T: Scalar>(data: &Dataset<T>, config: &AnchorConfig) -> Result<AnchorSet<T>> {
    if config.anchor_neighbors == 0 || config.anchor_neighbors > data.n() {
        return Err(invalid(format!(
            "anchor neighborhood size {} outside 1..={}",
            config.anchor_neighbors,
            data.n()
        )));
    }
    let alpha = T::of(config.ridge_alpha);
    let points = select_anchor_points(data, config.k, config.method, config.seed)?;
    let fitted: Vec<(Vec<usize>, Array2<T>)> = points
        .par_iter()
        .map(|p| {
            let set = neighbor_set(data, p.view(), config.anchor_neighbors)?;
            let model = fit_anchor_model(data, &set, alpha, config.with_bias)?;
            Ok((set, model))
        })
        .collect::<Result<_>>()?;
    let (neighbor_sets, models) = fitted.into_iter().unzip();
    let set = AnchorSet { models, anchor_points: points, neighbor_sets, with_bias: config.with_bias, ridge_alpha: alpha };
    set.validate()?;
    Ok(set)
}
