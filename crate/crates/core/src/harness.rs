//! Evaluation harness: k-fold cross-validation, exhaustive grid search and a
//! repeated train/test benchmark that compares methods on shared splits.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{AnchorConfig, AnchorMethod};
use crate::baselines::{KnnModel, KnnWeighting, RidgeModel};
use crate::dataset::{split_indices, Dataset, Standardizer};
use crate::error::{invalid, mismatch, FallError, Result};
use crate::local::{fit_with_params, FallModel, FallParams};
use crate::parallel::with_threads;
use crate::predict::{predict_batch, PredictConfig};
use crate::random::{derive_seed, seeded_rng};
use crate::Scalar;

/// Mean over rows of the squared Euclidean error.
pub fn mse<T: Scalar>(y_true: ArrayView2<'_, T>, y_pred: ArrayView2<'_, T>) -> Result<f64> {
    if y_true.dim() != y_pred.dim() {
        return Err(mismatch(format!("targets {:?} vs predictions {:?}", y_true.dim(), y_pred.dim())));
    }
    if y_true.nrows() == 0 {
        return Err(invalid("cannot score zero rows"));
    }
    let total: f64 = y_true.iter().zip(y_pred.iter()).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum();
    Ok(total / y_true.nrows() as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fall,
    Ridge,
    Knn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fall => "fall",
            Method::Ridge => "ridge",
            Method::Knn => "knn",
        })
    }
}

impl FromStr for Method {
    type Err = FallError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fall" => Ok(Method::Fall),
            "ridge" => Ok(Method::Ridge),
            "knn" => Ok(Method::Knn),
            other => Err(invalid(format!("unknown method '{other}' (expected fall, ridge or knn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ModelConfig {
    Fall(FallParams),
    Ridge { alpha: f64, with_bias: bool },
    Knn { k: usize, weighting: KnnWeighting },
}

impl ModelConfig {
    pub fn method(&self) -> Method {
        match self {
            ModelConfig::Fall(_) => Method::Fall,
            ModelConfig::Ridge { .. } => Method::Ridge,
            ModelConfig::Knn { .. } => Method::Knn,
        }
    }

    /// Compact `key=value` listing for reports.
    pub fn describe(&self) -> String {
        match self {
            ModelConfig::Fall(p) => format!(
                "lambda={} k={} anchor_neighbors={} k_pred={} alpha={} bias={} anchors={}",
                p.lambda, p.anchors.k, p.anchors.anchor_neighbors, p.k_pred, p.anchors.ridge_alpha, p.anchors.with_bias, p.anchors.method
            ),
            ModelConfig::Ridge { alpha, with_bias } => format!("alpha={alpha} bias={with_bias}"),
            ModelConfig::Knn { k, weighting } => format!("k={k} weights={weighting}"),
        }
    }

    fn with_seed(mut self, seed: u64) -> Self {
        if let ModelConfig::Fall(p) = &mut self {
            p.anchors.seed = seed;
        }
        self
    }
}

pub enum FittedModel<T> {
    Fall(FallModel<T>, usize),
    Ridge(RidgeModel<T>),
    Knn(KnnModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    /// Neighborhood sizes larger than the training set are clamped to it so
    /// that a grid tuned for the full data also runs on small folds.
    pub fn fit(data: &Dataset<T>, config: &ModelConfig) -> Result<Self> {
        let n = data.n();
        Ok(match config {
            ModelConfig::Fall(p) => {
                let mut p = p.clone();
                p.anchors.k = p.anchors.k.min(n);
                p.anchors.anchor_neighbors = p.anchors.anchor_neighbors.min(n);
                p.k_pred = p.k_pred.min(n);
                let k_pred = p.k_pred;
                FittedModel::Fall(fit_with_params(data, &p)?, k_pred)
            }
            ModelConfig::Ridge { alpha, with_bias } => FittedModel::Ridge(RidgeModel::fit(data, T::of(*alpha), *with_bias)?),
            ModelConfig::Knn { k, weighting } => FittedModel::Knn(KnnModel::fit(data, (*k).min(n), *weighting)?),
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        match self {
            FittedModel::Fall(m, k_pred) => predict_batch(m, x, &PredictConfig::new(*k_pred)),
            FittedModel::Ridge(m) => m.predict_batch(x),
            FittedModel::Knn(m) => m.predict_batch(x),
        }
    }
}

/// A model plus the preprocessing applied around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub model: ModelConfig,
    /// Z-score features with statistics from the training part only.
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

/// Fits on `train`, scores on `test`. Timings cover the fit and predict
/// calls only.
pub fn evaluate<T: Scalar>(train: &Dataset<T>, test: &Dataset<T>, pipeline: &Pipeline) -> Result<Evaluation> {
    let (train, test_x) = if pipeline.standardize {
        let s = Standardizer::fit(train, false);
        (s.transform(train), s.transform_inputs(test.x.view()))
    } else {
        (train.clone(), test.x.clone())
    };
    let t0 = Instant::now();
    let model = FittedModel::fit(&train, &pipeline.model)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let pred = model.predict(test_x.view())?;
    let predict_seconds = t1.elapsed().as_secs_f64();
    Ok(Evaluation { mse: mse(test.y.view(), pred.view())?, fit_seconds, predict_seconds })
}

/// Seeded partition of `0..n` into `folds` parts whose sizes differ by at
/// most one. Each part is sorted.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(invalid(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(invalid(format!("{folds} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut part = order[start..start + len].to_vec();
        part.sort_unstable();
        out.push(part);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub pipeline: Pipeline,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
    pub std_mse: f64,
    /// Mean per-fold wall time in seconds.
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub seed: u64,
}

pub fn kfold_cv<T: Scalar>(data: &Dataset<T>, pipeline: &Pipeline, folds: usize, seed: u64) -> Result<CvReport> {
    let parts = fold_indices(data.n(), folds, seed)?;
    let mut evals = Vec::with_capacity(folds);
    for (f, test_idx) in parts.iter().enumerate() {
        let train_idx: Vec<usize> = parts.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, p)| p.iter().copied()).collect();
        let mut train_idx = train_idx;
        train_idx.sort_unstable();
        evals.push(evaluate(&data.select_rows(&train_idx), &data.select_rows(test_idx), pipeline)?);
    }
    let fold_mse: Vec<f64> = evals.iter().map(|e| e.mse).collect();
    Ok(CvReport {
        pipeline: pipeline.clone(),
        mean_mse: mean(&fold_mse),
        std_mse: sample_std(&fold_mse),
        fit_seconds: mean(&evals.iter().map(|e| e.fit_seconds).collect::<Vec<_>>()),
        predict_seconds: mean(&evals.iter().map(|e| e.predict_seconds).collect::<Vec<_>>()),
        fold_mse,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub best: usize,
    /// One report per candidate, in candidate order.
    pub reports: Vec<CvReport>,
}

impl GridResult {
    pub fn best_report(&self) -> &CvReport {
        &self.reports[self.best]
    }
}

/// Cross-validates every candidate on the same folds. Candidates run on the
/// current rayon pool; the lowest mean MSE wins, ties to the earliest.
pub fn grid_search<T: Scalar>(data: &Dataset<T>, candidates: &[Pipeline], folds: usize, seed: u64) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(invalid("empty hyperparameter grid"));
    }
    let reports = candidates.par_iter().map(|p| kfold_cv(data, p, folds, seed)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.mean_mse < reports[best].mean_mse {
            best = i;
        }
    }
    Ok(GridResult { best, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub anchor_neighbors: Vec<usize>,
    pub k_preds: Vec<usize>,
    pub ridge_alphas: Vec<f64>,
    pub with_bias: Vec<bool>,
    pub anchor_method: AnchorMethod,
    pub knn_ks: Vec<usize>,
    pub knn_weightings: Vec<KnnWeighting>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.01, 1.0, 100.0],
            ks: vec![20, 60],
            anchor_neighbors: vec![10, 30],
            k_preds: vec![5, 20],
            ridge_alphas: vec![0.01, 1.0, 100.0],
            with_bias: vec![true],
            anchor_method: AnchorMethod::Kmeans,
            knn_ks: vec![5, 20],
            knn_weightings: vec![KnnWeighting::Uniform, KnnWeighting::InverseDistance],
        }
    }
}

impl HyperGrid {
    /// A grid holding exactly one FALL configuration. Ridge and KNN use the
    /// same alpha and neighbor count.
    pub fn single(params: &FallParams) -> Self {
        Self {
            lambdas: vec![params.lambda],
            ks: vec![params.anchors.k],
            anchor_neighbors: vec![params.anchors.anchor_neighbors],
            k_preds: vec![params.k_pred],
            ridge_alphas: vec![params.anchors.ridge_alpha],
            with_bias: vec![params.anchors.with_bias],
            anchor_method: params.anchors.method,
            knn_ks: vec![params.k_pred],
            knn_weightings: vec![KnnWeighting::InverseDistance],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        let counts = |v: &[usize]| !v.is_empty() && v.iter().all(|&x| x > 0);
        if !positive(&self.lambdas) || !positive(&self.ridge_alphas) {
            return Err(invalid("grid lambdas and alphas must be nonempty and positive"));
        }
        if !counts(&self.ks) || !counts(&self.anchor_neighbors) || !counts(&self.k_preds) || !counts(&self.knn_ks) {
            return Err(invalid("grid neighbor counts must be nonempty and positive"));
        }
        if self.with_bias.is_empty() || self.knn_weightings.is_empty() {
            return Err(invalid("grid bias and weighting lists must be nonempty"));
        }
        Ok(())
    }

    /// Every combination for `method`, in a fixed nesting order.
    pub fn candidates(&self, method: Method) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        match method {
            Method::Fall => {
                for &lambda in &self.lambdas {
                    for &k in &self.ks {
                        for &anchor_neighbors in &self.anchor_neighbors {
                            for &k_pred in &self.k_preds {
                                for &ridge_alpha in &self.ridge_alphas {
                                    for &with_bias in &self.with_bias {
                                        let anchors = AnchorConfig { k, anchor_neighbors, method: self.anchor_method, ridge_alpha, with_bias, seed: 0 };
                                        out.push(ModelConfig::Fall(FallParams { anchors, lambda, k_pred }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Method::Ridge => {
                for &alpha in &self.ridge_alphas {
                    for &with_bias in &self.with_bias {
                        out.push(ModelConfig::Ridge { alpha, with_bias });
                    }
                }
            }
            Method::Knn => {
                for &k in &self.knn_ks {
                    for &weighting in &self.knn_weightings {
                        out.push(ModelConfig::Knn { k, weighting });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub runs: usize,
    pub test_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    pub standardize: bool,
    /// Thread count for the timed refit and prediction of the chosen model.
    pub timing_threads: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self { runs: 10, test_fraction: 0.2, folds: 3, seed: 0, standardize: true, timing_threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: Method,
    pub run: usize,
    /// Hash of the test row indices; equal across methods within a run.
    pub split_hash: u64,
    pub test_mse: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub fit_time_mean: f64,
    pub predict_time_mean: f64,
    /// Most frequently chosen configuration, earliest run on ties.
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<RunRecord>,
    pub protocol: Protocol,
    pub timing_threads: usize,
}

const COLUMNS: [&str; 6] = ["method", "mse_mean", "mse_std", "fit_time_mean", "predict_time_mean", "params"];

impl BenchmarkReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    fn cells(s: &MethodSummary) -> [String; 6] {
        [
            s.method.to_string(),
            format!("{:.6}", s.mse_mean),
            format!("{:.6}", s.mse_std),
            format!("{:.3}", s.fit_time_mean),
            format!("{:.3}", s.predict_time_mean),
            s.params.clone(),
        ]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for s in &self.summaries {
            w.write_record(Self::cells(s))?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 6]> = self.summaries.iter().map(Self::cells).collect();
        let mut widths = COLUMNS.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            parts.join("  ").trim_end().to_owned()
        };
        let mut out = line(&COLUMNS.map(String::from));
        for r in &rows {
            out.push('\n');
            out.push_str(&line(r));
        }
        out.push_str(&format!(
            "\n({} runs, {} folds, test fraction {}, timing threads {})",
            self.protocol.runs, self.protocol.folds, self.protocol.test_fraction, self.timing_threads
        ));
        out
    }
}

fn hash_indices(indices: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    indices.hash(&mut h);
    h.finish()
}

fn mode(values: &[String]) -> String {
    let mut best = &values[0];
    let mut best_count = 0;
    for v in values {
        let c = values.iter().filter(|w| *w == v).count();
        if c > best_count {
            best = v;
            best_count = c;
        }
    }
    best.clone()
}

/// Repeats: split, tune each method by cross-validation on the training
/// part, refit the winner on the whole training part, score on the test
/// part. Every method sees the same splits and fold seeds.
pub fn run_benchmark<T: Scalar>(data: &Dataset<T>, methods: &[Method], grid: &HyperGrid, protocol: &Protocol) -> Result<BenchmarkReport> {
    if protocol.runs == 0 {
        return Err(invalid("need at least one run"));
    }
    if methods.is_empty() {
        return Err(invalid("no methods to benchmark"));
    }
    grid.validate()?;
    let mut runs = Vec::new();
    for r in 0..protocol.runs {
        let run_seed = derive_seed(protocol.seed, r as u64);
        let (train_idx, test_idx) = split_indices(data.n(), protocol.test_fraction, run_seed)?;
        let (train, test) = (data.select_rows(&train_idx), data.select_rows(&test_idx));
        let split_hash = hash_indices(&test_idx);
        for &method in methods {
            let candidates: Vec<Pipeline> = grid
                .candidates(method)
                .into_iter()
                .map(|m| Pipeline { model: m.with_seed(run_seed), standardize: protocol.standardize })
                .collect();
            let chosen = if candidates.len() == 1 {
                candidates[0].clone()
            } else {
                let g = grid_search(&train, &candidates, protocol.folds, derive_seed(run_seed, 1))?;
                candidates[g.best].clone()
            };
            let eval = with_threads(protocol.timing_threads, || evaluate(&train, &test, &chosen))??;
            runs.push(RunRecord {
                method,
                run: r,
                split_hash,
                test_mse: eval.mse,
                fit_seconds: eval.fit_seconds,
                predict_seconds: eval.predict_seconds,
                params: chosen.model.describe(),
            });
        }
    }
    let summaries = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.method == method).collect();
            let mses: Vec<f64> = mine.iter().map(|r| r.test_mse).collect();
            MethodSummary {
                method,
                mse_mean: mean(&mses),
                mse_std: sample_std(&mses),
                fit_time_mean: mean(&mine.iter().map(|r| r.fit_seconds).collect::<Vec<_>>()),
                predict_time_mean: mean(&mine.iter().map(|r| r.predict_seconds).collect::<Vec<_>>()),
                params: mode(&mine.iter().map(|r| r.params.clone()).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(BenchmarkReport { summaries, runs, protocol: protocol.clone(), timing_threads: protocol.timing_threads })
}
