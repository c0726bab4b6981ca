//! Small dense kernels: bias augmentation, SPD solves, symmetric eigenvalues.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{mismatch, FallError, Result};
use crate::Scalar;

/// `(x, 1)` when `with_bias`, else a copy of `x`.
pub fn augment<T: Scalar>(x: ArrayView1<'_, T>, with_bias: bool) -> Array1<T> {
    if !with_bias {
        return x.to_owned();
    }
    let mut out = Array1::from_elem(x.len() + 1, T::one());
    out.slice_mut(s![..x.len()]).assign(&x);
    out
}

/// Row-wise [`augment`].
pub fn augment_rows<T: Scalar>(x: ArrayView2<'_, T>, with_bias: bool) -> Array2<T> {
    if !with_bias {
        return x.to_owned();
    }
    let (n, d) = x.dim();
    let mut out = Array2::from_elem((n, d + 1), T::one());
    out.slice_mut(s![.., ..d]).assign(&x);
    out
}

pub fn squared_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().map(|&a| a * a).sum()
}

pub fn frobenius_sq<T: Scalar>(m: ArrayView2<'_, T>) -> T {
    m.iter().map(|&a| a * a).sum()
}

pub fn squared_distance<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&u, &v)| (u - v) * (u - v)).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(a: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(mismatch(format!("cholesky of a {}x{} matrix", n, a.ncols())));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(FallError::NotPositiveDefinite);
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T X = B` given the factor from [`cholesky`].
pub fn cholesky_solve<T: Scalar>(l: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut acc = col[i];
            for k in 0..i {
                acc -= l[[i, k]] * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut acc = col[i];
            for k in (i + 1)..n {
                acc -= l[[k, i]] * col[k];
            }
            col[i] = acc / l[[i, i]];
        }
    }
    x
}

/// `argmin_A ||Y - X A||_F^2 + alpha ||A||_F^2` through the normal equations
/// `(X^T X + alpha I) A = X^T Y`.
pub fn ridge_solve<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView2<'_, T>, alpha: T) -> Result<Array2<T>> {
    if x.nrows() != y.nrows() {
        return Err(mismatch(format!("{} input rows vs {} target rows", x.nrows(), y.nrows())));
    }
    let mut gram = x.t().dot(&x);
    for i in 0..gram.nrows() {
        gram[[i, i]] += alpha;
    }
    let rhs = x.t().dot(&y);
    let l = cholesky(gram.view())?;
    let a = cholesky_solve(l.view(), rhs.view());
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FallError::NonFiniteResult("ridge solve"));
    }
    Ok(a)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Meant for the small `k x k` matrices that show up in the anchor QP.
pub fn symmetric_eigenvalues<T: Scalar>(a: ArrayView2<'_, T>) -> Vec<T> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let total = frobenius_sq(m.view());
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(T::one()));
                let c = T::one() / t.hypot(T::one());
                let sn = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}
