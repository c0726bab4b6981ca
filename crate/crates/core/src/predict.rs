//! Prediction for unseen inputs: average the local models of the nearest
//! training samples, weighted by inverse distance, then apply the averaged
//! model to the input.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{invalid, mismatch, FallError, Result};
use crate::linalg::augment;
use crate::local::FallModel;
use crate::neighbors::k_nearest;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    /// Number of neighbor models averaged per prediction.
    pub k_pred: usize,
    /// Distances at or below this count as exact matches.
    pub exact_match_epsilon: f64,
}

impl PredictConfig {
    pub fn new(k_pred: usize) -> Self {
        Self { k_pred, exact_match_epsilon: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborWeights<T> {
    /// Neighbor rows, nearest first.
    pub indices: Vec<usize>,
    /// Convex weights aligned with `indices`.
    pub alphas: Array1<T>,
}

/// Normalized inverse-distance weights over the `k_pred` nearest rows.
///
/// If any neighbor lies within `exact_match_epsilon`, the weights become
/// uniform over those matches and zero elsewhere (the limit of `1/d`).
pub fn neighbor_weights<T: Scalar>(
    x: ArrayView1<'_, T>,
    train_x: ArrayView2<'_, T>,
    k_pred: usize,
    exact_match_epsilon: f64,
) -> Result<NeighborWeights<T>> {
    let nn = k_nearest(train_x, x, k_pred)?;
    let eps = T::of(exact_match_epsilon);
    let exact = nn.iter().filter(|nb| nb.distance <= eps).count();
    let alphas: Array1<T> = if exact > 0 {
        let w = T::one() / T::of(exact as f64);
        nn.iter().map(|nb| if nb.distance <= eps { w } else { T::zero() }).collect()
    } else {
        let inv: Vec<T> = nn.iter().map(|nb| T::one() / nb.distance).collect();
        let total: T = inv.iter().copied().sum();
        inv.into_iter().map(|v| v / total).collect()
    };
    Ok(NeighborWeights { indices: nn.into_iter().map(|nb| nb.index).collect(), alphas })
}

/// `W_pred = C_pred + R_pred` for one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedModel<T> {
    /// Weighted average of the neighbors' corrections.
    pub correction: Array2<T>,
    /// Weighted mixture of the neighbors' assigned anchors.
    pub anchor_mix: Array2<T>,
    pub weights: NeighborWeights<T>,
}

impl<T: Scalar> AveragedModel<T> {
    pub fn model(&self) -> Array2<T> {
        &self.correction + &self.anchor_mix
    }
}

fn check_model<T: Scalar>(model: &FallModel<T>, x_len: usize) -> Result<()> {
    if model.n() == 0 {
        return Err(FallError::EmptyModel);
    }
    if x_len != model.input_dim() {
        return Err(mismatch(format!("input has {x_len} features, model expects {}", model.input_dim())));
    }
    Ok(())
}

pub fn averaged_model<T: Scalar>(model: &FallModel<T>, x: ArrayView1<'_, T>, config: &PredictConfig) -> Result<AveragedModel<T>> {
    check_model(model, x.len())?;
    if config.k_pred > model.n() {
        return Err(invalid(format!("k_pred = {} exceeds the {} training samples", config.k_pred, model.n())));
    }
    let weights = neighbor_weights(x, model.train_x.view(), config.k_pred, config.exact_match_epsilon)?;
    let shape = model.anchor_set.models[0].dim();
    let mut correction = Array2::zeros(shape);
    let mut anchor_mix = Array2::zeros(shape);
    for (&i, &a) in weights.indices.iter().zip(weights.alphas.iter()) {
        let local = &model.locals[i];
        correction.scaled_add(a, &local.correction);
        anchor_mix.scaled_add(a, &model.anchor_set.models[local.assignment]);
    }
    Ok(AveragedModel { correction, anchor_mix, weights })
}

/// `y_pred = W_pred^T x~`.
pub fn predict<T: Scalar>(model: &FallModel<T>, x: ArrayView1<'_, T>, config: &PredictConfig) -> Result<Array1<T>> {
    let avg = averaged_model(model, x, config)?;
    Ok(avg.model().t().dot(&augment(x, model.with_bias)))
}

/// Row-wise [`predict`]; rows run on the current rayon pool, output order
/// matches input order.
pub fn predict_batch<T: Scalar>(model: &FallModel<T>, x: ArrayView2<'_, T>, config: &PredictConfig) -> Result<Array2<T>> {
    check_model(model, x.ncols())?;
    let rows: Vec<Array1<T>> = (0..x.nrows()).into_par_iter().map(|i| predict(model, x.row(i), config)).collect::<Result<_>>()?;
    let mut out = Array2::zeros((x.nrows(), model.output_dim()));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
    Ok(out)
}

/// Index of the largest entry, first one on ties.
pub fn argmax<T: Scalar>(scores: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Raw scores from a model fitted on one-hot targets, plus their argmax.
pub fn predict_class<T: Scalar>(model: &FallModel<T>, x: ArrayView1<'_, T>, config: &PredictConfig) -> Result<(usize, Array1<T>)> {
    let scores = predict(model, x, config)?;
    Ok((argmax(scores.view()), scores))
}
