//! Randomized self-check of the closed-form solution: the quadratic form
//! agrees with direct evaluation, its Hessian is symmetric and negative
//! definite for generic anchors, and the hot-vector solution beats every
//! other point of the simplex that was tried.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::anchors::AnchorSet;
use crate::error::{invalid, Result};
use crate::qp::{build_qp, fixed_p_optimum, objective, verify_vertex_optimality};
use crate::random::{derive_seed, gaussian_matrix, gaussian_vector, seeded_rng, uniform_simplex};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub instances: usize,
    /// Interior simplex points per instance for the optimality check.
    pub trials: usize,
    /// Simplex points per instance for the quadratic-form check.
    pub qp_points: usize,
    pub max_d: usize,
    pub max_m: usize,
    pub max_k: usize,
    /// Instance `i` uses `lambdas[i % len]`.
    pub lambdas: Vec<f64>,
    /// Relative slack allowed when another point beats the chosen vertex.
    pub tolerance: f64,
    pub qp_tolerance: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            trials: 1000,
            qp_points: 100,
            max_d: 10,
            max_m: 3,
            max_k: 5,
            lambdas: vec![0.01, 1.0, 100.0],
            tolerance: 1e-9,
            qp_tolerance: 1e-8,
            seed: 0,
        }
    }
}

/// One random single-sample problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    pub anchors: AnchorSet<f64>,
    pub lambda: f64,
}

/// Draws `d in 1..=max_d`, `m in 1..=max_m`, `k in 1..=max_k`, a coin-flip
/// bias column, and standard normal `x`, `y` and anchor entries.
pub fn random_instance<R: Rng>(rng: &mut R, max_d: usize, max_m: usize, max_k: usize, lambda: f64) -> Result<Instance> {
    if max_d == 0 || max_m == 0 || max_k == 0 {
        return Err(invalid("instance dimensions must be at least 1"));
    }
    let d = rng.random_range(1..=max_d);
    let m = rng.random_range(1..=max_m);
    let k = rng.random_range(1..=max_k);
    let with_bias = rng.random_bool(0.5);
    let dp = d + usize::from(with_bias);
    let models: Vec<Array2<f64>> = (0..k).map(|_| gaussian_matrix(rng, dp, m)).collect();
    Ok(Instance {
        x: gaussian_vector(rng, d),
        y: gaussian_vector(rng, m),
        anchors: AnchorSet::from_models(models, with_bias)?,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceResult {
    pub index: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub with_bias: bool,
    pub lambda: f64,
    pub qp_relative_error: f64,
    pub asymmetry: f64,
    /// `max eigenvalue / ||H||_F`; `None` when `k > d' m` and the anchors
    /// cannot be linearly independent.
    pub eigen_ratio: Option<f64>,
    pub vertex_violation: f64,
    pub vertex_violations: usize,
}

impl InstanceResult {
    fn qp_ok(&self, cfg: &VerifyConfig) -> bool {
        self.qp_relative_error <= cfg.qp_tolerance && self.asymmetry == 0.0
    }

    fn eigen_ok(&self) -> bool {
        self.eigen_ratio.is_none_or(|r| r < -1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub results: Vec<InstanceResult>,
}

fn worst_by<'a>(results: &'a [InstanceResult], key: impl Fn(&InstanceResult) -> f64) -> Option<&'a InstanceResult> {
    results.iter().max_by(|a, b| key(a).total_cmp(&key(b)))
}

impl VerifyReport {
    pub fn qp_failures(&self) -> usize {
        self.results.iter().filter(|r| !r.qp_ok(&self.config)).count()
    }

    pub fn eigen_checked(&self) -> usize {
        self.results.iter().filter(|r| r.eigen_ratio.is_some()).count()
    }

    pub fn eigen_failures(&self) -> usize {
        self.results.iter().filter(|r| !r.eigen_ok()).count()
    }

    pub fn vertex_failures(&self) -> usize {
        self.results.iter().filter(|r| r.vertex_violations > 0).count()
    }

    pub fn passed(&self) -> bool {
        self.qp_failures() == 0 && self.eigen_failures() == 0 && self.vertex_failures() == 0
    }

    pub fn worst_qp(&self) -> Option<&InstanceResult> {
        worst_by(&self.results, |r| r.qp_relative_error)
    }

    pub fn worst_eigen(&self) -> Option<&InstanceResult> {
        worst_by(&self.results, |r| r.eigen_ratio.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn worst_vertex(&self) -> Option<&InstanceResult> {
        worst_by(&self.results, |r| r.vertex_violation)
    }

    /// Multi-line human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let describe = |r: Option<&InstanceResult>| match r {
            Some(r) => format!("instance {} (d={}, m={}, k={}, bias={}, lambda={})", r.index, r.d, r.m, r.k, r.with_bias, r.lambda),
            None => "none".to_owned(),
        };
        let n = self.results.len();
        s.push_str(&format!(
            "quadratic form:   {}/{} ok, worst relative error {:.3e} at {}\n",
            n - self.qp_failures(),
            n,
            self.worst_qp().map_or(0.0, |r| r.qp_relative_error),
            describe(self.worst_qp())
        ));
        s.push_str(&format!(
            "negative definite: {}/{} ok, worst eigenvalue ratio {:.3e} at {}\n",
            self.eigen_checked() - self.eigen_failures(),
            self.eigen_checked(),
            self.worst_eigen().and_then(|r| r.eigen_ratio).unwrap_or(f64::NAN),
            describe(self.worst_eigen())
        ));
        s.push_str(&format!(
            "vertex optimality: {}/{} ok, worst relative excess {:.3e} at {}\n",
            n - self.vertex_failures(),
            n,
            self.worst_vertex().map_or(0.0, |r| r.vertex_violation),
            describe(self.worst_vertex())
        ));
        s.push_str(if self.passed() { "result: PASS" } else { "result: FAIL" });
        s
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn check_instance(index: usize, cfg: &VerifyConfig) -> Result<InstanceResult> {
    let mut rng = seeded_rng(derive_seed(cfg.seed, index as u64));
    let lambda = cfg.lambdas[index % cfg.lambdas.len()];
    let inst = random_instance(&mut rng, cfg.max_d, cfg.max_m, cfg.max_k, lambda)?;
    let (x, y, anchors) = (inst.x.view(), inst.y.view(), &inst.anchors);
    let qp = build_qp(x, y, anchors, lambda)?;

    let mut qp_err: f64 = 0.0;
    for _ in 0..cfg.qp_points {
        let p = uniform_simplex::<f64, _>(&mut rng, anchors.k());
        let w = fixed_p_optimum(x, y, p.view(), anchors, lambda)?;
        let direct = objective(x, y, w.view(), p.view(), anchors, lambda)?;
        qp_err = qp_err.max(relative_gap(qp.evaluate(p.view()), direct));
    }

    let k = anchors.k();
    let eigen_ratio = (k <= anchors.augmented_dim() * anchors.output_dim()).then(|| {
        let norm = qp.h.iter().map(|v| v * v).sum::<f64>().sqrt();
        qp.max_eigenvalue() / norm
    });

    let vertex = verify_vertex_optimality(x, y, anchors, lambda, cfg.trials, cfg.tolerance, rng.random())?;
    Ok(InstanceResult {
        index,
        d: anchors.input_dim(),
        m: anchors.output_dim(),
        k,
        with_bias: anchors.with_bias,
        lambda,
        qp_relative_error: qp_err,
        asymmetry: qp.asymmetry(),
        eigen_ratio,
        vertex_violation: vertex.worst_violation,
        vertex_violations: vertex.violations,
    })
}

/// Runs every instance on the current rayon pool. Results are ordered by
/// instance index and do not depend on the thread count.
pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.instances == 0 {
        return Err(invalid("need at least one instance"));
    }
    if cfg.trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    if cfg.lambdas.is_empty() || cfg.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(invalid("lambdas must be positive and finite"));
    }
    if !(cfg.tolerance >= 0.0) {
        return Err(invalid("tolerance must be non-negative"));
    }
    let results = (0..cfg.instances).into_par_iter().map(|i| check_instance(i, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { config: cfg.clone(), results })
}
