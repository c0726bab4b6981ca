//! Numeric datasets: CSV ingestion, z-scoring, seeded splits and the two
//! synthetic generators (step function, two moons).
//!
//! Columns whose header starts with [`META_PREFIX`] are metadata. They are
//! never features or targets; the first one is parsed as integer group labels
//! (plateau or class membership for the synthetic sets).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, mismatch, FallError, Result};
use crate::random::{gaussian, seeded_rng};
use crate::Scalar;

pub const META_PREFIX: &str = "meta_";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    /// `n x d` inputs.
    pub x: Array2<T>,
    /// `n x m` targets.
    pub y: Array2<T>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Optional per-row group label carried through from a metadata column.
    pub groups: Option<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset with generated column names (`x0.., y0..`).
    pub fn from_arrays(x: Array2<T>, y: Array2<T>) -> Result<Self> {
        let feature_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        let target_names = (0..y.ncols()).map(|j| format!("y{j}")).collect();
        Self::new(x, y, feature_names, target_names)
    }

    pub fn new(x: Array2<T>, y: Array2<T>, feature_names: Vec<String>, target_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(mismatch(format!("{} input rows vs {} target rows", x.nrows(), y.nrows())));
        }
        if x.nrows() == 0 {
            return Err(invalid("dataset needs at least one row"));
        }
        if feature_names.len() != x.ncols() || target_names.len() != y.ncols() {
            return Err(mismatch("column names do not match matrix widths"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("dataset contains NaN or infinite entries"));
        }
        Ok(Self { x, y, feature_names, target_names, groups: None })
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.n() {
            return Err(mismatch(format!("{} group labels for {} rows", groups.len(), self.n())));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Rows `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            groups: self.groups.as_ref().map(|g| indices.iter().map(|&i| g[i]).collect()),
        }
    }

    /// Writes features, then targets, then a `meta_group` column when groups
    /// are present. Values use the shortest representation that parses back
    /// to the same float.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.feature_names.iter().chain(&self.target_names).cloned().collect();
        if self.groups.is_some() {
            header.push(format!("{META_PREFIX}group"));
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().chain(self.y.row(i).iter()).map(|v| v.to_string()).collect();
            if let Some(g) = &self.groups {
                rec.push(g[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| FallError::Io { path: "<csv writer>".into(), source: e })?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| FallError::Io { path: path.into(), source: e })?;
        self.write_csv(file)
    }
}

struct Table {
    names: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table<R: Read>(reader: R, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).trim(csv::Trim::All).from_reader(reader);
    let mut names: Vec<String> = if has_header {
        rdr.headers()?.iter().map(str::to_owned).collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    if !has_header {
        let width = rows.first().map_or(0, Vec::len);
        names = (0..width).map(|j| j.to_string()).collect();
    }
    Ok(Table { names, rows })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| FallError::Io { path: path.into(), source: e })
}

fn parse_cell<T: Scalar>(cell: &str, row: usize, column: &str) -> Result<T> {
    let v: f64 = cell.parse().map_err(|_| FallError::NonNumeric {
        row,
        column: column.to_owned(),
        value: cell.to_owned(),
    })?;
    if !v.is_finite() {
        return Err(FallError::NonFinite { row, column: column.to_owned() });
    }
    Ok(T::of(v))
}

/// Parses the listed columns of `table` into a matrix. Rows are reported
/// 1-based, counting data rows only.
fn columns_to_matrix<T: Scalar>(table: &Table, cols: &[usize]) -> Result<Array2<T>> {
    let mut out = Array2::zeros((table.rows.len(), cols.len()));
    for (i, row) in table.rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out[[i, j]] = parse_cell(&row[c], i + 1, &table.names[c])?;
        }
    }
    Ok(out)
}

fn parse_groups(table: &Table) -> Result<Option<Vec<usize>>> {
    let Some(c) = table.names.iter().position(|n| n.starts_with(META_PREFIX)) else {
        return Ok(None);
    };
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row[c].parse::<usize>().map_err(|_| FallError::NonNumeric {
                row: i + 1,
                column: table.names[c].clone(),
                value: row[c].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Loads a dataset: `target_columns` become `Y`, every other non-metadata
/// column becomes `X`, row order preserved. Without a header, columns are
/// named by their 0-based position (`"0"`, `"1"`, ...).
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target_columns: &[String], has_header: bool) -> Result<Dataset<T>> {
    let path = path.as_ref();
    read_dataset(open(path)?, target_columns, has_header).map_err(|e| match e {
        FallError::EmptyFile(_) => FallError::EmptyFile(path.into()),
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_dataset<T: Scalar, R: Read>(reader: R, target_columns: &[String], has_header: bool) -> Result<Dataset<T>> {
    if target_columns.is_empty() {
        return Err(invalid("at least one target column is required"));
    }
    let table = read_table(reader, has_header)?;
    if table.rows.is_empty() {
        return Err(FallError::EmptyFile("<input>".into()));
    }
    let mut target_idx = Vec::with_capacity(target_columns.len());
    for t in target_columns {
        let pos = table
            .names
            .iter()
            .position(|n| n == t)
            .ok_or_else(|| FallError::UnknownColumn(t.clone()))?;
        target_idx.push(pos);
    }
    let feature_idx: Vec<usize> = (0..table.names.len())
        .filter(|c| !target_idx.contains(c) && !table.names[*c].starts_with(META_PREFIX))
        .collect();
    let x = columns_to_matrix(&table, &feature_idx)?;
    let y = columns_to_matrix(&table, &target_idx)?;
    let feature_names = feature_idx.iter().map(|&c| table.names[c].clone()).collect();
    let target_names = target_idx.iter().map(|&c| table.names[c].clone()).collect();
    let mut ds = Dataset::new(x, y, feature_names, target_names)?;
    ds.groups = parse_groups(&table)?;
    Ok(ds)
}

/// Loads an input-only matrix for prediction. Columns listed in `exclude`
/// (when present) and metadata columns are dropped.
pub fn load_inputs<T: Scalar>(path: impl AsRef<Path>, exclude: &[String], has_header: bool) -> Result<(Array2<T>, Vec<String>)> {
    let path = path.as_ref();
    let table = read_table(open(path)?, has_header)?;
    if table.rows.is_empty() {
        return Err(FallError::EmptyFile(path.into()));
    }
    let keep: Vec<usize> = (0..table.names.len())
        .filter(|&c| !exclude.contains(&table.names[c]) && !table.names[c].starts_with(META_PREFIX))
        .collect();
    let x = columns_to_matrix(&table, &keep)?;
    Ok((x, keep.iter().map(|&c| table.names[c].clone()).collect()))
}

/// Per-column z-scoring statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
    pub applied_to_targets: bool,
    /// Zero and one respectively when targets are left raw.
    pub target_mean: Array1<T>,
    pub target_std: Array1<T>,
}

fn column_stats<T: Scalar>(m: ArrayView2<'_, T>) -> (Array1<T>, Array1<T>) {
    let n = T::of(m.nrows() as f64);
    let mean = m.sum_axis(Axis(0)) / n;
    let mut std = Array1::zeros(m.ncols());
    for (j, col) in m.axis_iter(Axis(1)).enumerate() {
        let var = col.iter().map(|&v| (v - mean[j]) * (v - mean[j])).sum::<T>() / n;
        let s = var.sqrt();
        // Constant columns (up to rounding in the mean) keep their scale.
        let floor = T::epsilon() * T::of(16.0) * mean[j].abs().max(T::one());
        std[j] = if s <= floor { T::one() } else { s };
    }
    (mean, std)
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(data: &Dataset<T>, standardize_targets: bool) -> Self {
        let (mean, std) = column_stats(data.x.view());
        let (target_mean, target_std) = if standardize_targets {
            column_stats(data.y.view())
        } else {
            (Array1::zeros(data.m()), Array1::ones(data.m()))
        };
        Self { mean, std, applied_to_targets: standardize_targets, target_mean, target_std }
    }

    pub fn transform_inputs(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        (&x - &self.mean) / &self.std
    }

    pub fn inverse_inputs(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        &x * &self.std + &self.mean
    }

    pub fn transform_targets(&self, y: ArrayView2<'_, T>) -> Array2<T> {
        (&y - &self.target_mean) / &self.target_std
    }

    pub fn inverse_targets(&self, y: ArrayView2<'_, T>) -> Array2<T> {
        &y * &self.target_std + &self.target_mean
    }

    pub fn transform(&self, data: &Dataset<T>) -> Dataset<T> {
        Dataset {
            x: self.transform_inputs(data.x.view()),
            y: self.transform_targets(data.y.view()),
            ..data.clone()
        }
    }

    pub fn inverse_transform(&self, data: &Dataset<T>) -> Dataset<T> {
        Dataset {
            x: self.inverse_inputs(data.x.view()),
            y: self.inverse_targets(data.y.view()),
            ..data.clone()
        }
    }
}

/// `(train, test)` row indices: `floor(n * test_fraction)` test rows drawn by
/// a seeded shuffle; each side is returned in ascending order.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    // the small offset keeps products like 0.29 * 100 from flooring to 28
    let n_test = (n as f64 * test_fraction + 1e-9).floor() as usize;
    if n_test == 0 || n_test >= n {
        return Err(invalid(format!("test fraction {test_fraction} leaves an empty side for n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split<T: Scalar>(data: &Dataset<T>, test_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, test) = split_indices(data.n(), test_fraction, seed)?;
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Inputs uniform on `[-1, 1]`; targets are `0` left of the midpoint and `1`
/// from it on, plus `N(0, noise_sigma^2)` noise. Groups hold the plateau.
pub fn synth_step<T: Scalar>(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 {
        return Err(invalid("step dataset needs n >= 2"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(invalid("noise sigma must be non-negative"));
    }
    let mut rng = seeded_rng(seed);
    let mut x = Array2::zeros((n, 1));
    let mut y = Array2::zeros((n, 1));
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let xi: f64 = rng.random_range(-1.0..1.0);
        let plateau = usize::from(xi >= 0.0);
        let noise = if noise_sigma > 0.0 { noise_sigma * gaussian::<f64, _>(&mut rng) } else { 0.0 };
        x[[i, 0]] = T::of(xi);
        y[[i, 0]] = T::of(plateau as f64 + noise);
        groups.push(plateau);
    }
    Dataset::new(x, y, vec!["x".into()], vec!["y".into()])?.with_groups(groups)
}

/// Two interleaved half circles: class 0 on `(cos t, sin t)`, class 1 on
/// `(1 - cos t, 0.5 - sin t)`, `t` evenly spaced on `[0, pi]`, Gaussian
/// noise on both coordinates, rows shuffled. Targets are one-hot.
pub fn synth_two_moons<T: Scalar>(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset<T>> {
    if n < 2 {
        return Err(invalid("two moons needs n >= 2"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(invalid("noise sigma must be non-negative"));
    }
    let n1 = n / 2;
    let n0 = n - n1;
    let mut rng = seeded_rng(seed);
    let spaced = |count: usize, i: usize| {
        if count == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    let mut pts: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    pts.extend((0..n0).map(|i| {
        let t = spaced(n0, i);
        (t.cos(), t.sin(), 0)
    }));
    pts.extend((0..n1).map(|i| {
        let t = spaced(n1, i);
        (1.0 - t.cos(), 0.5 - t.sin(), 1)
    }));
    pts.shuffle(&mut rng);
    let mut x = Array2::zeros((n, 2));
    let mut y = Array2::zeros((n, 2));
    let mut groups = Vec::with_capacity(n);
    for (i, (a, b, class)) in pts.into_iter().enumerate() {
        let (na, nb) = if noise_sigma > 0.0 {
            (noise_sigma * gaussian::<f64, _>(&mut rng), noise_sigma * gaussian::<f64, _>(&mut rng))
        } else {
            (0.0, 0.0)
        };
        x[[i, 0]] = T::of(a + na);
        x[[i, 1]] = T::of(b + nb);
        y[[i, class]] = T::one();
        groups.push(class);
    }
    Dataset::new(x, y, vec!["x1".into(), "x2".into()], vec!["y0".into(), "y1".into()])?.with_groups(groups)
}
