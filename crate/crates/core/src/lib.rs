//! Anchor-regularized local linear regression.
//!
//! Every training sample gets its own linear model `W_i`, pulled toward the
//! best-fitting member of a small set of precomputed *anchor* models. The
//! per-sample problem has a closed-form solution: pick the anchor with the
//! smallest residual on `(x_i, y_i)` and apply a rank-one correction. New
//! inputs are predicted by an inverse-distance-weighted average of the models
//! belonging to their nearest training samples.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root are what most callers want.
//!
//! ```
//! use fall::{anchors::{build_anchor_set, AnchorConfig}, dataset::synth_step, local, predict};
//!
//! let data = synth_step::<f64>(200, 0.1, 7).unwrap();
//! let cfg = AnchorConfig { k: 2, ..AnchorConfig::default() };
//! let anchors = build_anchor_set(&data, &cfg).unwrap();
//! let model = local::fit(&data, anchors, 1.0).unwrap();
//! let y = predict::predict(&model, data.x.row(0), &predict::PredictConfig::new(10)).unwrap();
//! assert_eq!(y.len(), 1);
//! ```

pub mod anchors;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod local;
pub mod neighbors;
pub mod parallel;
pub mod persist;
pub mod predict;
pub mod qp;
pub mod random;
pub mod scalar;
pub mod verify;

pub use error::{FallError, Result};
pub use scalar::Scalar;

pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type AnchorSet64 = anchors::AnchorSet<f64>;
pub type AnchorSet32 = anchors::AnchorSet<f32>;
pub type LocalModel64 = local::LocalModel<f64>;
pub type LocalModel32 = local::LocalModel<f32>;
pub type FallModel64 = local::FallModel<f64>;
pub type FallModel32 = local::FallModel<f32>;
pub type QpForm64 = qp::QpForm<f64>;
pub type RidgeModel64 = baselines::RidgeModel<f64>;
pub type KnnModel64 = baselines::KnnModel<f64>;
