//! The per-sample objective over `(W, p)` and its reduction to a quadratic
//! in the anchor weights `p`. Used to check the closed form, not to compute it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::anchors::AnchorSet;
use crate::error::{invalid, mismatch, FallError, Result};
use crate::linalg::{augment, frobenius_sq, squared_norm, symmetric_eigenvalues};
use crate::local::assign_augmented;
use crate::random::{seeded_rng, uniform_simplex};
use crate::Scalar;

fn simplex_tolerance<T: Scalar>(k: usize) -> T {
    T::of(1e-9).max(T::epsilon() * T::of(16.0 * k as f64))
}

pub fn check_simplex<T: Scalar>(p: ArrayView1<'_, T>) -> Result<()> {
    let tol = simplex_tolerance::<T>(p.len());
    let sum: T = p.sum();
    let min = p.iter().copied().fold(T::infinity(), T::min);
    if p.is_empty() || min < -tol || (sum - T::one()).abs() > tol || !sum.is_finite() {
        return Err(FallError::NotOnSimplex { sum: sum.as_f64(), min: min.as_f64() });
    }
    Ok(())
}

fn check_shapes<T: Scalar>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    p: Option<ArrayView1<'_, T>>,
    w: Option<ArrayView2<'_, T>>,
    anchors: &AnchorSet<T>,
) -> Result<()> {
    if x.len() != anchors.input_dim() || y.len() != anchors.output_dim() {
        return Err(mismatch("sample does not match anchor dimensions"));
    }
    if let Some(p) = p {
        if p.len() != anchors.k() {
            return Err(mismatch(format!("p has {} entries for {} anchors", p.len(), anchors.k())));
        }
    }
    if let Some(w) = w {
        if w.dim() != anchors.models[0].dim() {
            return Err(mismatch(format!("W has shape {:?}, anchors {:?}", w.dim(), anchors.models[0].dim())));
        }
    }
    Ok(())
}

/// `||y - W^T x~||^2 + lambda * sum_l p_l ||W - A_l||_F^2`.
///
/// Accepts `lambda = 0` so it can serve as a reference for the pure data term.
pub fn objective<T: Scalar>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    w: ArrayView2<'_, T>,
    p: ArrayView1<'_, T>,
    anchors: &AnchorSet<T>,
    lambda: T,
) -> Result<T> {
    check_shapes(x, y, Some(p), Some(w), anchors)?;
    check_simplex(p)?;
    if lambda < T::zero() {
        return Err(invalid("lambda must be non-negative"));
    }
    let x_aug = augment(x, anchors.with_bias);
    let fit = squared_norm((&y - &w.t().dot(&x_aug)).view());
    let mut reg = T::zero();
    for (l, a) in anchors.models.iter().enumerate() {
        if p[l] != T::zero() {
            let diff: T = w.iter().zip(a.iter()).map(|(&u, &v)| (u - v) * (u - v)).sum();
            reg += p[l] * diff;
        }
    }
    Ok(fit + lambda * reg)
}

/// `dJ/dW = 2 x~ (x~^T W - y^T) + 2 lambda sum_l p_l (W - A_l)`.
pub fn objective_gradient<T: Scalar>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    w: ArrayView2<'_, T>,
    p: ArrayView1<'_, T>,
    anchors: &AnchorSet<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_shapes(x, y, Some(p), Some(w), anchors)?;
    let two = T::of(2.0);
    let x_aug = augment(x, anchors.with_bias);
    let resid = &w.t().dot(&x_aug) - &y;
    let mut g = Array2::from_shape_fn(w.dim(), |(r, c)| two * x_aug[r] * resid[c]);
    for (l, a) in anchors.models.iter().enumerate() {
        g.zip_mut_with(&(&w - a), |gv, &dv| *gv += two * lambda * p[l] * dv);
    }
    Ok(g)
}

/// `G = sum_l p_l A_l`.
pub fn anchor_mixture<T: Scalar>(p: ArrayView1<'_, T>, anchors: &AnchorSet<T>) -> Array2<T> {
    let mut g = Array2::zeros(anchors.models[0].dim());
    for (l, a) in anchors.models.iter().enumerate() {
        g.scaled_add(p[l], a);
    }
    g
}

/// Minimizer over `W` for fixed `p`: `x~ (y - G^T x~)^T / (lambda + ||x~||^2) + G`.
pub fn fixed_p_optimum<T: Scalar>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    p: ArrayView1<'_, T>,
    anchors: &AnchorSet<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_shapes(x, y, Some(p), None, anchors)?;
    if !(lambda > T::zero()) {
        return Err(invalid("lambda must be positive"));
    }
    let x_aug = augment(x, anchors.with_bias);
    let g = anchor_mixture(p, anchors);
    let r = (&y - &g.t().dot(&x_aug)) / (lambda + squared_norm(x_aug.view()));
    Ok(Array2::from_shape_fn(g.dim(), |(i, j)| x_aug[i] * r[j]) + g)
}

/// `J(W(p), p) = p^T H p + b^T p + constant` over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct QpForm<T> {
    pub h: Array2<T>,
    pub b: Array1<T>,
    pub constant: T,
}

impl<T: Scalar> QpForm<T> {
    pub fn evaluate(&self, p: ArrayView1<'_, T>) -> T {
        p.dot(&self.h.dot(&p)) + self.b.dot(&p) + self.constant
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        symmetric_eigenvalues(self.h.view())
    }

    pub fn max_eigenvalue(&self) -> T {
        *self.eigenvalues().last().expect("k >= 1")
    }

    /// Largest `|H_ij - H_ji|`.
    pub fn asymmetry(&self) -> T {
        let k = self.h.nrows();
        let mut worst = T::zero();
        for i in 0..k {
            for j in 0..k {
                worst = worst.max((self.h[[i, j]] - self.h[[j, i]]).abs());
            }
        }
        worst
    }
}

/// `H_ll' = beta x~^T A_l A_l'^T x~ - lambda tr(A_l^T A_l')`,
/// `b_l = -2 beta y^T A_l^T x~ + lambda ||A_l||_F^2`, `constant = beta ||y||^2`,
/// with `beta = lambda / (lambda + ||x~||^2)`.
pub fn build_qp<T: Scalar>(x: ArrayView1<'_, T>, y: ArrayView1<'_, T>, anchors: &AnchorSet<T>, lambda: T) -> Result<QpForm<T>> {
    check_shapes(x, y, None, None, anchors)?;
    if !(lambda > T::zero()) {
        return Err(invalid("lambda must be positive"));
    }
    let x_aug = augment(x, anchors.with_bias);
    let beta = lambda / (lambda + squared_norm(x_aug.view()));
    let k = anchors.k();
    let preds: Vec<Array1<T>> = (0..k).map(|l| anchors.predict_augmented(l, x_aug.view())).collect();
    let mut h = Array2::zeros((k, k));
    for l in 0..k {
        for lp in l..k {
            let inner: T = anchors.models[l].iter().zip(anchors.models[lp].iter()).map(|(&a, &b)| a * b).sum();
            let v = beta * preds[l].dot(&preds[lp]) - lambda * inner;
            h[[l, lp]] = v;
            h[[lp, l]] = v;
        }
    }
    let b = Array1::from_shape_fn(k, |l| -T::of(2.0) * beta * y.dot(&preds[l]) + lambda * frobenius_sq(anchors.models[l].view()));
    Ok(QpForm { h, b, constant: beta * squared_norm(y) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexReport<T> {
    /// Anchor picked by the closed form.
    pub chosen: usize,
    pub chosen_value: T,
    /// Objective at every vertex, each with its own optimal `W`.
    pub vertex_values: Vec<T>,
    /// Largest `(J_chosen - J_p) / max(|J_chosen|, |J_p|)` seen; zero or
    /// negative rounding noise means the chosen vertex is optimal.
    pub worst_violation: T,
    /// Points whose relative violation exceeded the tolerance.
    pub violations: usize,
    /// Number of simplex points compared (vertices plus interior draws).
    pub evaluated: usize,
}

fn relative_excess<T: Scalar>(chosen: T, other: T) -> T {
    let scale = chosen.abs().max(other.abs());
    if scale == T::zero() {
        T::zero()
    } else {
        (chosen - other) / scale
    }
}

/// Brute-force check that the chosen vertex beats every vertex and `trials`
/// uniform interior points of the simplex, each evaluated at its own
/// fixed-`p` optimum through [`objective`].
pub fn verify_vertex_optimality<T: Scalar>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    anchors: &AnchorSet<T>,
    lambda: T,
    trials: usize,
    tolerance: T,
    seed: u64,
) -> Result<VertexReport<T>> {
    if trials == 0 {
        return Err(invalid("need at least one interior trial"));
    }
    check_shapes(x, y, None, None, anchors)?;
    let k = anchors.k();
    let value_at = |p: &Array1<T>| -> Result<T> {
        let w = fixed_p_optimum(x, y, p.view(), anchors, lambda)?;
        objective(x, y, w.view(), p.view(), anchors, lambda)
    };
    let vertex = |l: usize| {
        let mut p = Array1::zeros(k);
        p[l] = T::one();
        p
    };
    let (chosen, _) = assign_augmented(augment(x, anchors.with_bias).view(), y, anchors);
    let chosen_value = value_at(&vertex(chosen))?;

    let mut worst = T::zero();
    let mut violations = 0;
    let mut record = |v: T| {
        let excess = relative_excess(chosen_value, v);
        worst = worst.max(excess);
        if excess > tolerance {
            violations += 1;
        }
    };
    let mut vertex_values = Vec::with_capacity(k);
    for l in 0..k {
        let v = value_at(&vertex(l))?;
        record(v);
        vertex_values.push(v);
    }
    let mut rng = seeded_rng(seed);
    for _ in 0..trials {
        let p = uniform_simplex::<T, _>(&mut rng, k);
        record(value_at(&p)?);
    }
    Ok(VertexReport { chosen, chosen_value, vertex_values, worst_violation: worst, violations, evaluated: k + trials })
}

/// Random simplex points for callers that want to drive their own checks.
pub fn random_simplex_points<T: Scalar, R: Rng>(rng: &mut R, k: usize, count: usize) -> Vec<Array1<T>> {
    (0..count).map(|_| uniform_simplex(rng, k)).collect()
}
