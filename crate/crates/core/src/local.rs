//! Closed-form per-sample models.
//!
//! For a sample `(x, y)` with augmented input `x~`, the anchor-regularized
//! problem is minimized by the anchor `l` with the smallest residual
//! `||y - A_l^T x~||`, plus the rank-one correction
//!
//! ```text
//! C = x~ (y - A_l^T x~)^T / (lambda + x~^T x~),      W = A_l + C.
//! ```
//!
//! No matrix is inverted; the shrinkage `beta = lambda / (lambda + ||x~||^2)`
//! is the weight the anchor keeps in the training prediction
//! `W^T x~ = (1 - beta) y + beta A_l^T x~`.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::anchors::{build_anchor_set, AnchorConfig, AnchorSet};
use crate::dataset::Dataset;
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{augment, squared_norm};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel<T> {
    /// Index of the best-fitting anchor (0-based).
    pub assignment: usize,
    /// Anchor weight in the training prediction, in `(0, 1]`.
    pub beta: T,
    /// `W_i - A_{l_i}`, shape `d' x m`.
    pub correction: Array2<T>,
    /// `||y_i - A_{l_i}^T x~_i||`.
    pub residual_norm: T,
}

impl<T: Scalar> LocalModel<T> {
    /// Materializes `W_i = C_i + A_{l_i}`.
    pub fn full_model(&self, anchors: &AnchorSet<T>) -> Array2<T> {
        &self.correction + &anchors.models[self.assignment]
    }

    /// `||y_i - W_i^T x~_i|| = beta_i * residual_norm_i`.
    pub fn training_error(&self) -> T {
        self.beta * self.residual_norm
    }
}

/// Hyperparameters of the full pipeline: anchors, regularization strength
/// and the default neighbor count used at prediction time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FallParams {
    pub anchors: AnchorConfig,
    pub lambda: f64,
    pub k_pred: usize,
}

impl Default for FallParams {
    fn default() -> Self {
        Self { anchors: AnchorConfig::default(), lambda: 1.0, k_pred: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallModel<T> {
    pub anchor_set: AnchorSet<T>,
    pub locals: Vec<LocalModel<T>>,
    /// Training inputs (unaugmented), kept for neighbor lookup.
    pub train_x: Array2<T>,
    pub lambda: T,
    pub with_bias: bool,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Set when the anchors were built by this crate from a known config.
    pub params: Option<FallParams>,
}

impl<T: Scalar> FallModel<T> {
    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train_x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.anchor_set.output_dim()
    }

    pub fn full_model(&self, i: usize) -> Array2<T> {
        self.locals[i].full_model(&self.anchor_set)
    }

    /// `W_i^T x~_i` for training row `i`.
    pub fn training_prediction(&self, i: usize) -> Array1<T> {
        let x_aug = augment(self.train_x.row(i), self.with_bias);
        self.full_model(i).t().dot(&x_aug)
    }

    pub fn assignments(&self) -> Vec<usize> {
        self.locals.iter().map(|l| l.assignment).collect()
    }
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

fn check_sample<T: Scalar>(x: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>) -> Result<()> {
    if x.len() != anchors.input_dim() {
        return Err(mismatch(format!("input has {} features, anchors expect {}", x.len(), anchors.input_dim())));
    }
    if y.len() != anchors.output_dim() {
        return Err(mismatch(format!("target has {} outputs, anchors produce {}", y.len(), anchors.output_dim())));
    }
    Ok(())
}

/// Best anchor for an already augmented input. Ties go to the lowest index.
pub(crate) fn assign_augmented<T: Scalar>(x_aug: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>) -> (usize, T) {
    let mut best = (0usize, T::infinity());
    for l in 0..anchors.k() {
        let pred = anchors.predict_augmented(l, x_aug);
        let r2: T = y.iter().zip(pred.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        if r2 < best.1 {
            best = (l, r2);
        }
    }
    (best.0, best.1.sqrt())
}

/// `(l, ||y - A_l^T x~||)` for the anchor with the smallest residual.
pub fn assign_anchor<T: Scalar>(x: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>) -> Result<(usize, T)> {
    check_sample(x, y, anchors)?;
    Ok(assign_augmented(augment(x, anchors.with_bias).view(), y, anchors))
}

fn local_from_augmented<T: Scalar>(x_aug: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>, lambda: T) -> LocalModel<T> {
    let (assignment, residual_norm) = assign_augmented(x_aug, y, anchors);
    let sq = squared_norm(x_aug);
    let denom = lambda + sq;
    let residual = &y - &anchors.predict_augmented(assignment, x_aug);
    let scaled = residual / denom;
    let correction = Array2::from_shape_fn((x_aug.len(), y.len()), |(r, c)| x_aug[r] * scaled[c]);
    LocalModel { assignment, beta: lambda / denom, correction, residual_norm }
}

/// Closed-form minimizer for one sample.
pub fn fit_local_model<T: Scalar>(x: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>, lambda: T) -> Result<LocalModel<T>> {
    check_lambda(lambda)?;
    check_sample(x, y, anchors)?;
    Ok(local_from_augmented(augment(x, anchors.with_bias).view(), y, anchors, lambda))
}

/// One local model per training row. Rows are independent and processed on
/// the current rayon pool; the result does not depend on the pool size.
pub fn fit<T: Scalar>(data: &Dataset<T>, anchor_set: AnchorSet<T>, lambda: T) -> Result<FallModel<T>> {
    check_lambda(lambda)?;
    anchor_set.validate()?;
    if data.d() != anchor_set.input_dim() || data.m() != anchor_set.output_dim() {
        return Err(mismatch(format!(
            "data is {}->{}, anchors are {}->{}",
            data.d(),
            data.m(),
            anchor_set.input_dim(),
            anchor_set.output_dim()
        )));
    }
    let with_bias = anchor_set.with_bias;
    let locals: Vec<LocalModel<T>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let x_aug = augment(data.x.row(i), with_bias);
            local_from_augmented(x_aug.view(), data.y.row(i), &anchor_set, lambda)
        })
        .collect();
    Ok(FallModel {
        anchor_set,
        locals,
        train_x: data.x.clone(),
        lambda,
        with_bias,
        feature_names: data.feature_names.clone(),
        target_names: data.target_names.clone(),
        params: None,
    })
}

/// Builds anchors from `params` and fits every local model.
pub fn fit_with_params<T: Scalar>(data: &Dataset<T>, params: &FallParams) -> Result<FallModel<T>> {
    let anchors = build_anchor_set(data, &params.anchors)?;
    let mut model = fit(data, anchors, T::of(params.lambda))?;
    model.params = Some(params.clone());
    Ok(model)
}
