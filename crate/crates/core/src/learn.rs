//! Oracle-labelled training data, the eviction classifier, and model files.
//!
//! The classifier is a dense network (ReLU hidden layers, logistic output)
//! that scores each eviction candidate independently; the highest score is
//! evicted. Training data comes from replaying trace sets under the windowed
//! Bélády policy and labelling its victim 1 and every other candidate 0.
//!
//! # Model file layout
//!
//! All integers are little-endian `u32`, all floats little-endian `f64`.
//!
//! ```text
//! magic      8 bytes  "MLPEVICT"
//! version    u32      1
//! n_dims     u32      number of layer widths (layers + 1)
//! dims       u32 x n_dims
//! per layer i in 0..n_dims-1:
//!   weights  f64 x dims[i]*dims[i+1], row-major (input index major)
//!   bias     f64 x dims[i+1]
//! ```
//!
//! Trailing bytes are rejected.

use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{PolicyScope, SimConfig};
use crate::features::{feature_names, FEATURE_DIM, SYSTEM_DIM};
use crate::par;
use crate::policies::{Policy, PolicyKind};
use crate::rng;
use crate::sim::{self, SimError};
use crate::trace::InvocationEvent;
use crate::workload::WorkloadCatalog;

pub const MODEL_MAGIC: &[u8; 8] = b"MLPEVICT";
pub const MODEL_VERSION: u32 = 1;
pub const HIDDEN_LAYERS: usize = 5;
pub const HIDDEN_WIDTH: usize = 256;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("model file: {field}: {detail}")]
    Format { field: &'static str, detail: String },
    #[error("expected {expected} input features, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("no training samples")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("samples line {line}: {detail}")]
    Samples { line: usize, detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A feed-forward network. `weights[i]` has shape `(dims[i], dims[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

pub fn default_dims() -> Vec<usize> {
    let mut dims = vec![FEATURE_DIM];
    dims.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
    dims.push(1);
    dims
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, without overflow.
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl MlpModel {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "bad layer dims {dims:?}");
        Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|p| Array2::zeros((p[0], p[1]))).collect(),
            biases: dims.windows(2).map(|p| Array1::zeros(p[1])).collect(),
        }
    }

    /// He-uniform weights, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        let mut model = Self::zeros(dims);
        let mut rng = rng::stream(seed, "mlp-init", 0);
        for w in &mut model.weights {
            let limit = (6.0 / w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        model
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self, LearnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(LearnError::Format { field: "layers", detail: "weights and biases differ in count".into() });
        }
        let mut dims = vec![weights[0].nrows()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != dims[i] || b.len() != w.ncols() {
                return Err(LearnError::Format { field: "layers", detail: format!("layer {i} shape mismatch") });
            }
            dims.push(w.ncols());
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut zs: Vec<Array2<f64>> = Vec::with_capacity(self.layers());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = match i {
                0 => x.dot(w) + b,
                _ => zs[i - 1].mapv(|v| v.max(0.0)).dot(w) + b,
            };
            zs.push(z);
        }
        zs
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.forward_all(x).pop().expect("at least one layer").column(0).to_owned()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Probability for a single feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<f64, LearnError> {
        if features.len() != self.input_dim() {
            return Err(LearnError::Dimension { expected: self.input_dim(), found: features.len() });
        }
        let x = ArrayView2::from_shape((1, features.len()), features).expect("contiguous row");
        Ok(self.predict(x)[0])
    }

    /// Probabilities for equally sized rows. Panics on a width mismatch;
    /// callers validate dimensions first.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        let d = self.input_dim();
        let mut x = Array2::zeros((rows.len(), d));
        for (mut dst, src) in x.rows_mut().into_iter().zip(rows) {
            dst.assign(&ndarray::aview1(src));
        }
        self.predict(x.view()).to_vec()
    }

    /// Weighted mean binary cross-entropy and its gradients.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        weights: &[f64],
    ) -> (f64, Gradients) {
        let zs = self.forward_all(x);
        let logits = zs.last().expect("layer");
        let total_w: f64 = weights.iter().sum();
        let mut loss = 0.0;
        let mut delta = Array2::zeros((y.len(), 1));
        for i in 0..y.len() {
            let z = logits[[i, 0]];
            loss += weights[i] * bce_logit(z, y[i]);
            delta[[i, 0]] = weights[i] * (sigmoid(z) - y[i]) / total_w;
        }
        loss /= total_w;

        let n = self.layers();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let input = if l == 0 { x.to_owned() } else { zs[l - 1].mapv(|v| v.max(0.0)) };
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut next = delta.dot(&self.weights[l].t());
                next.zip_mut_with(&zs[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 8 * self.num_params());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MODEL_MAGIC {
            return Err(LearnError::Format { field: "magic", detail: "not a model file".into() });
        }
        let version = r.u32("version")?;
        if version != MODEL_VERSION {
            return Err(LearnError::Format {
                field: "version",
                detail: format!("unsupported version {version} (expected {MODEL_VERSION})"),
            });
        }
        let n = r.u32("n_dims")? as usize;
        if !(2..=64).contains(&n) {
            return Err(LearnError::Format { field: "n_dims", detail: format!("{n} layer widths is out of range") });
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            let d = r.u32("dims")? as usize;
            if d == 0 {
                return Err(LearnError::Format { field: "dims", detail: "zero-width layer".into() });
            }
            dims.push(d);
        }
        let params: usize = dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        let remaining = bytes.len() - r.pos;
        if params.checked_mul(8) != Some(remaining) {
            return Err(LearnError::Format {
                field: "dims",
                detail: format!(
                    "layer widths {dims:?} need {params} parameters but {remaining} bytes follow the header"
                ),
            });
        }
        let mut model = Self::zeros(&dims);
        for (w, b) in model.weights.iter_mut().zip(model.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = r.f64("weights")?;
            }
            for v in b.iter_mut() {
                *v = r.f64("bias")?;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&[u8], LearnError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(LearnError::Format { field, detail: format!("truncated at byte {}", self.bytes.len()) });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, LearnError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, LearnError> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }
}

/// Labelled samples stored row-major. Rows of one eviction decision share a
/// group id and sit next to each other.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    labels: Vec<f64>,
    groups: Vec<u64>,
}

/// One row of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub group: u64,
    pub features: Vec<f64>,
    pub label: f64,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn group_ids(&self) -> &[u64] {
        &self.groups
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> TrainingSample {
        TrainingSample { group: self.groups[i], features: self.row(i).to_vec(), label: self.labels[i] }
    }

    fn next_group(&self) -> u64 {
        self.groups.last().map_or(0, |g| g + 1)
    }

    /// Appends one decision: `rows[chosen]` gets label 1, the rest 0.
    pub fn push_group(&mut self, rows: &[Vec<f64>], chosen: usize) -> Result<(), LearnError> {
        let labels: Vec<f64> = (0..rows.len()).map(|i| if i == chosen { 1.0 } else { 0.0 }).collect();
        self.push_labelled(rows, &labels)
    }

    fn push_labelled(&mut self, rows: &[Vec<f64>], labels: &[f64]) -> Result<(), LearnError> {
        let g = self.next_group();
        for (row, &label) in rows.iter().zip(labels) {
            if row.len() != self.dim {
                return Err(LearnError::Dimension { expected: self.dim, found: row.len() });
            }
            self.x.extend_from_slice(row);
            self.labels.push(label);
            self.groups.push(g);
        }
        Ok(())
    }

    /// Index ranges of each group, in order.
    pub fn group_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.groups[i] != self.groups[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    pub fn num_groups(&self) -> usize {
        self.group_ranges().len()
    }

    /// Appends `other`, renumbering its groups after ours.
    pub fn extend(&mut self, other: &Dataset) -> Result<(), LearnError> {
        if other.is_empty() {
            return Ok(());
        }
        if other.dim != self.dim {
            return Err(LearnError::Dimension { expected: self.dim, found: other.dim });
        }
        for r in other.group_ranges() {
            let rows: Vec<Vec<f64>> = r.clone().map(|i| other.row(i).to_vec()).collect();
            self.push_labelled(&rows, &other.labels[r])?;
        }
        Ok(())
    }

    /// Loss weight per row: positives count (group size - 1), at least 1.
    pub fn sample_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.len()];
        for r in self.group_ranges() {
            let pos_weight = (r.len().saturating_sub(1)).max(1) as f64;
            for i in r {
                if self.labels[i] > 0.5 {
                    w[i] = pos_weight;
                }
            }
        }
        w
    }

    /// A random `fraction` of whole groups, in original order.
    pub fn sample_groups(&self, fraction: f64, seed: u64) -> Dataset {
        let ranges = self.group_ranges();
        let keep = ((fraction.clamp(0.0, 1.0) * ranges.len() as f64).round() as usize).min(ranges.len());
        let mut picked: Vec<usize> = (0..ranges.len()).collect();
        picked.shuffle(&mut rng::stream(seed, "mix-old", 0));
        picked.truncate(keep);
        picked.sort_unstable();
        let mut out = Dataset::new(self.dim);
        for g in picked {
            let r = ranges[g].clone();
            let rows: Vec<Vec<f64>> = r.clone().map(|i| self.row(i).to_vec()).collect();
            out.push_labelled(&rows, &self.labels[r]).expect("same dim");
        }
        out
    }

    fn batch(&self, idx: &[usize], weights: &[f64]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut x = Array2::zeros((idx.len(), self.dim));
        for (mut dst, &i) in x.rows_mut().into_iter().zip(idx) {
            dst.assign(&ndarray::aview1(self.row(i)));
        }
        (x, idx.iter().map(|&i| self.labels[i]).collect(), idx.iter().map(|&i| weights[i]).collect())
    }

    /// Writes a header of feature names plus `label`, one row per sample.
    pub fn write_csv(&self, path: &Path) -> Result<(), LearnError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = if self.dim == FEATURE_DIM {
            feature_names()
        } else {
            (0..self.dim).map(|i| format!("f{i}")).collect()
        };
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a sample CSV. Groups are rebuilt from adjacency: a new group
    /// starts when the system-state prefix changes or a second positive
    /// appears.
    pub fn read_csv(path: &Path) -> Result<Dataset, LearnError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let width = r.headers()?.len();
        if width < 2 {
            return Err(LearnError::Samples { line: 1, detail: "need at least one feature and a label".into() });
        }
        let dim = width - 1;
        let prefix = if dim == FEATURE_DIM { SYSTEM_DIM } else { dim };
        let mut ds = Dataset::new(dim);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<f64> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != width {
                return Err(LearnError::Samples { line, detail: format!("expected {width} columns, found {}", rec.len()) });
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| LearnError::Samples { line, detail: e.to_string() })?;
            let label = vals[dim];
            if label != 0.0 && label != 1.0 {
                return Err(LearnError::Samples { line, detail: format!("label {label} is not 0 or 1") });
            }
            let row = vals[..dim].to_vec();
            let new_group = rows.first().is_some_and(|first| {
                first[..prefix] != row[..prefix] || (label == 1.0 && labels.contains(&1.0))
            });
            if new_group {
                ds.push_labelled(&rows, &labels)?;
                rows.clear();
                labels.clear();
            }
            rows.push(row);
            labels.push(label);
        }
        if !rows.is_empty() {
            ds.push_labelled(&rows, &labels)?;
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mix_old_fraction: f64,
    /// Hidden layer widths; the input and output widths come from the data.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            mix_old_fraction: 0.0,
            hidden: vec![HIDDEN_WIDTH; HIDDEN_LAYERS],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.epochs == 0 {
            return Err(LearnError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.mix_old_fraction) {
            return Err(LearnError::Config(format!("mix_old_fraction {} outside [0, 1]", self.mix_old_fraction)));
        }
        if self.hidden.contains(&0) {
            return Err(LearnError::Config("hidden layers need a positive width".into()));
        }
        Ok(())
    }

    pub fn dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Epoch 0 is the full-set loss before training; later points are the
    /// sample-weighted mean of that epoch's batch losses.
    pub loss_curve: Vec<LossPoint>,
    pub final_loss: f64,
}

impl TrainOutcome {
    pub fn write_loss_csv(&self, path: &Path) -> Result<(), LearnError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss"])?;
        for p in &self.loss_curve {
            w.write_record([p.epoch.to_string(), p.loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &MlpModel, lr: f64) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, model: &mut MlpModel, g: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for l in 0..model.layers() {
            ndarray::Zip::from(&mut model.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut model.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Weighted loss over the whole set, evaluated in chunks.
pub fn dataset_loss(model: &MlpModel, data: &Dataset) -> f64 {
    let weights = data.sample_weights();
    let idx: Vec<usize> = (0..data.len()).collect();
    let (mut sum, mut total_w) = (0.0, 0.0);
    for chunk in idx.chunks(1024) {
        let (x, y, w) = data.batch(chunk, &weights);
        let logits = model.logits(x.view());
        for i in 0..chunk.len() {
            sum += w[i] * bce_logit(logits[i], y[i]);
            total_w += w[i];
        }
    }
    if total_w > 0.0 {
        sum / total_w
    } else {
        0.0
    }
}

/// Trains a fresh model.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    let model = MlpModel::init(&cfg.dims(data.dim()), cfg.seed);
    train_from(model, data, cfg)
}

/// Continues training `model` on `data` with Adam.
pub fn train_from(mut model: MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyCorpus);
    }
    if model.input_dim() != data.dim() {
        return Err(LearnError::Dimension { expected: model.input_dim(), found: data.dim() });
    }
    let weights = data.sample_weights();
    let initial = dataset_loss(&model, data);
    if !initial.is_finite() {
        return Err(LearnError::NonFinite { epoch: 0, batch: 0 });
    }
    let mut curve = vec![LossPoint { epoch: 0, loss: initial }];
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64));
        let (mut sum, mut total_w) = (0.0, 0.0);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y, w) = data.batch(idx, &weights);
            let (loss, grads) = model.loss_and_gradients(x.view(), &y, &w);
            if !loss.is_finite() {
                return Err(LearnError::NonFinite { epoch, batch });
            }
            let bw: f64 = w.iter().sum();
            sum += loss * bw;
            total_w += bw;
            adam.step(&mut model, &grads);
        }
        curve.push(LossPoint { epoch, loss: sum / total_w });
    }
    let final_loss = dataset_loss(&model, data);
    if !final_loss.is_finite() {
        return Err(LearnError::NonFinite { epoch: cfg.epochs, batch: 0 });
    }
    Ok(TrainOutcome { model, loss_curve: curve, final_loss })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrainStrategy {
    /// Fresh model, new data only.
    FromScratch,
    /// Base model (if any) trained further on new data plus a share of old.
    Mixed,
}

/// The corpus a retrain run would use.
pub fn retrain_corpus(
    old: &Dataset,
    new: &Dataset,
    strategy: RetrainStrategy,
    cfg: &TrainConfig,
) -> Result<Dataset, LearnError> {
    let mut corpus = new.clone();
    if strategy == RetrainStrategy::Mixed && cfg.mix_old_fraction > 0.0 {
        corpus.extend(&old.sample_groups(cfg.mix_old_fraction, cfg.seed))?;
    }
    Ok(corpus)
}

pub fn retrain(
    base: Option<&MlpModel>,
    old: &Dataset,
    new: &Dataset,
    strategy: RetrainStrategy,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    if new.is_empty() {
        return Err(LearnError::EmptyCorpus);
    }
    let corpus = retrain_corpus(old, new, strategy, cfg)?;
    match (strategy, base) {
        (RetrainStrategy::Mixed, Some(base)) => train_from(base.clone(), &corpus, cfg),
        _ => train(&corpus, cfg),
    }
}

/// Replays each trace set under the windowed Bélády policy and labels every
/// eviction decision that had more than one candidate. Sets run in parallel;
/// output keeps set order.
pub fn generate_training_data(
    sets: &[Vec<InvocationEvent>],
    cfg: &SimConfig,
    catalog: &WorkloadCatalog,
    seed: u64,
) -> Result<Dataset, LearnError> {
    let run_cfg = SimConfig { record_decisions: true, scope: PolicyScope::All, ..cfg.clone() };
    let logs = par::try_map(sets, |events| {
        sim::run(events, &run_cfg, catalog, Policy::new(PolicyKind::Belady), seed)
    })?;
    let mut data = Dataset::new(FEATURE_DIM);
    for log in &logs {
        // A lone candidate is evicted whatever the policy; it says nothing
        // about which containers the oracle prefers to keep.
        for d in log.decisions.iter().filter(|d| d.candidates.len() > 1) {
            data.push_group(&d.features, d.chosen)?;
        }
    }
    Ok(data)
}
