//! Model files.
//!
//! Layout: a magic line `FALLMODEL 1`, one line of JSON describing the
//! model (hyperparameters, shapes, names, payload layout), then a binary
//! payload of little-endian words in this order:
//!
//! | block            | type | count            |
//! |------------------|------|------------------|
//! | anchor models    | f64  | `k * d' * m`     |
//! | anchor points    | f64  | `k * d` or 0     |
//! | neighbor sets    | u64  | sum of set sizes |
//! | training inputs  | f64  | `n * d`          |
//! | assignments      | u64  | `n`              |
//! | betas            | f64  | `n`              |
//! | residual norms   | f64  | `n`              |
//! | corrections      | f64  | `n * d' * m`     |
//!
//! Matrices are row-major. Values are widened to `f64` and narrowed back on
//! load, so the round trip is bit-exact for `f32` and `f64` models.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{FallError, Result};
use crate::local::{FallModel, FallParams, LocalModel};
use crate::Scalar;

pub const MAGIC: &str = "FALLMODEL 1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub scalar: String,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub augmented_dim: usize,
    pub lambda: f64,
    pub with_bias: bool,
    pub ridge_alpha: f64,
    pub has_anchor_points: bool,
    pub neighbor_set_sizes: Vec<usize>,
    pub params: Option<FallParams>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub payload_bytes: usize,
}

fn format_err(msg: impl Into<String>) -> FallError {
    FallError::Format(msg.into())
}

struct Payload(Vec<u8>);

impl Payload {
    fn floats<'a, T: Scalar + 'a>(&mut self, values: impl IntoIterator<Item = &'a T>) {
        for v in values {
            self.0.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    fn ints(&mut self, values: impl IntoIterator<Item = usize>) {
        for v in values {
            self.0.extend_from_slice(&(v as u64).to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn word(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| format_err("payload truncated"))?;
        self.pos = end;
        Ok(chunk.try_into().expect("8 bytes"))
    }

    fn floats<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>> {
        (0..count)
            .map(|_| {
                let v = f64::from_le_bytes(self.word()?);
                let t = T::of(v);
                if t.as_f64().to_bits() != v.to_bits() {
                    return Err(format_err(format!("value {v} does not fit the {} model type", T::NAME)));
                }
                Ok(t)
            })
            .collect()
    }

    fn ints(&mut self, count: usize) -> Result<Vec<usize>> {
        (0..count)
            .map(|_| usize::try_from(u64::from_le_bytes(self.word()?)).map_err(|_| format_err("index overflow")))
            .collect()
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Array2<T>> {
        Array2::from_shape_vec((rows, cols), self.floats(rows * cols)?).map_err(|e| format_err(e.to_string()))
    }
}

/// Serializes `model`. Equal models produce identical bytes.
pub fn to_bytes<T: Scalar>(model: &FallModel<T>) -> Result<Vec<u8>> {
    let anchors = &model.anchor_set;
    let mut payload = Payload(Vec::new());
    for a in &anchors.models {
        payload.floats(a.iter());
    }
    for p in &anchors.anchor_points {
        payload.floats(p.iter());
    }
    for s in &anchors.neighbor_sets {
        payload.ints(s.iter().copied());
    }
    payload.floats(model.train_x.iter());
    payload.ints(model.locals.iter().map(|l| l.assignment));
    payload.floats(model.locals.iter().map(|l| &l.beta));
    payload.floats(model.locals.iter().map(|l| &l.residual_norm));
    for l in &model.locals {
        payload.floats(l.correction.iter());
    }

    let header = Header {
        format_version: FORMAT_VERSION,
        scalar: T::NAME.to_owned(),
        n: model.n(),
        d: model.input_dim(),
        m: model.output_dim(),
        k: anchors.k(),
        augmented_dim: anchors.augmented_dim(),
        lambda: model.lambda.as_f64(),
        with_bias: model.with_bias,
        ridge_alpha: anchors.ridge_alpha.as_f64(),
        has_anchor_points: !anchors.anchor_points.is_empty(),
        neighbor_set_sizes: anchors.neighbor_sets.iter().map(Vec::len).collect(),
        params: model.params.clone(),
        feature_names: model.feature_names.clone(),
        target_names: model.target_names.clone(),
        payload_bytes: payload.0.len(),
    };
    let json = serde_json::to_string(&header).map_err(|e| format_err(e.to_string()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + json.len() + payload.0.len() + 2);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&payload.0);
    Ok(out)
}

fn split_line(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err("missing header line"))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

/// Reads the JSON header without decoding the payload.
pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let (magic, rest) = split_line(bytes)?;
    if magic != MAGIC.as_bytes() {
        return Err(format_err("not a model file (bad magic line)"));
    }
    let (json, payload) = split_line(rest)?;
    let header: Header = serde_json::from_slice(json).map_err(|e| format_err(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {}", header.format_version)));
    }
    if payload.len() != header.payload_bytes {
        return Err(format_err(format!("payload is {} bytes, header says {}", payload.len(), header.payload_bytes)));
    }
    Ok((header, payload))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FallModel<T>> {
    let (h, payload) = read_header(bytes)?;
    if h.scalar != T::NAME {
        return Err(format_err(format!("file holds a {} model, requested {}", h.scalar, T::NAME)));
    }
    if h.augmented_dim != h.d + usize::from(h.with_bias) || h.k == 0 {
        return Err(format_err("inconsistent shapes in header"));
    }
    let mut cur = Cursor { bytes: payload, pos: 0 };
    let models = (0..h.k).map(|_| cur.matrix(h.augmented_dim, h.m)).collect::<Result<Vec<Array2<T>>>>()?;
    let anchor_points = if h.has_anchor_points {
        (0..h.k).map(|_| cur.floats(h.d).map(Array1::from)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let neighbor_sets = h.neighbor_set_sizes.iter().map(|&len| cur.ints(len)).collect::<Result<Vec<_>>>()?;
    let train_x = cur.matrix(h.n, h.d)?;
    let assignments = cur.ints(h.n)?;
    let betas: Vec<T> = cur.floats(h.n)?;
    let residuals: Vec<T> = cur.floats(h.n)?;
    let mut locals = Vec::with_capacity(h.n);
    for i in 0..h.n {
        if assignments[i] >= h.k {
            return Err(format_err(format!("row {i} assigned to anchor {} of {}", assignments[i], h.k)));
        }
        locals.push(LocalModel {
            assignment: assignments[i],
            beta: betas[i],
            correction: cur.matrix(h.augmented_dim, h.m)?,
            residual_norm: residuals[i],
        });
    }
    if cur.pos != payload.len() {
        return Err(format_err("trailing bytes after payload"));
    }
    let anchor_set = AnchorSet { models, anchor_points, neighbor_sets, with_bias: h.with_bias, ridge_alpha: T::of(h.ridge_alpha) };
    anchor_set.validate()?;
    Ok(FallModel {
        anchor_set,
        locals,
        train_x,
        lambda: T::of(h.lambda),
        with_bias: h.with_bias,
        feature_names: h.feature_names,
        target_names: h.target_names,
        params: h.params,
    })
}

pub fn save<T: Scalar>(model: &FallModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    let mut f = fs::File::create(path).map_err(|e| FallError::Io { path: path.into(), source: e })?;
    f.write_all(&bytes).map_err(|e| FallError::Io { path: path.into(), source: e })
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<FallModel<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FallError::Io { path: path.into(), source: e })?;
    from_bytes(&bytes)
}
