//! Seeded randomness shared by the generators, k-means and the oracles.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::Scalar;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `index` of a seeded job.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(StandardNormal.sample(rng))
}

pub fn gaussian_vector<T: Scalar, R: Rng + ?Sized>(rng: &mut R, len: usize) -> Array1<T> {
    Array1::from_shape_fn(len, |_| gaussian(rng))
}

pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| gaussian(rng))
}

/// Uniform draw from the probability simplex (flat Dirichlet).
pub fn uniform_simplex<T: Scalar, R: Rng + ?Sized>(rng: &mut R, k: usize) -> Array1<T> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    Array1::from_iter(e.into_iter().map(|v| T::of(v / total)))
}
