//! Reference trainer: a multinomial linear classifier on pooled scalogram
//! features.
//!
//! It is deliberately small. Its job is to exercise losses, schedules,
//! optimizers and metrics end to end on synthetic data, not to replace the
//! image network trained by the external fine-tuning stage.
//!
//! Features are the CWT magnitudes average-pooled to a 16x16 grid. The model
//! log-compresses them, standardizes with statistics of the training split,
//! and applies `softmax(W x + b)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cwt::Scalogram;
use crate::dataset::fingerprint;
use crate::losses::{loss_from_logits, softmax, LossKind, ProbVector, TargetLabel};
use crate::metrics::{acc, acc_pm1, ConfusionMatrix};
use crate::optim::{OptimizerKind, OptimizerParams, OptimizerState};
use crate::schedule::{OneCycleConfig, Schedule};
use crate::{Error, Result};

pub const POOL_ROWS: usize = 16;
pub const POOL_COLS: usize = 16;
pub const FEATURE_DIM: usize = POOL_ROWS * POOL_COLS;

const LOG_FLOOR: f64 = 1e-12;
const MODEL_MAGIC: &[u8; 4] = b"BWLM";

/// Area-weighted average pooling of a row-major `[rows x cols]` matrix.
///
/// Every output cell covers an equal fraction of the input, input cells that
/// straddle a boundary contribute proportionally, so the global mean is
/// preserved exactly.
pub fn pool_average(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols);
    let row_w = axis_weights(rows, out_rows);
    let col_w = axis_weights(cols, out_cols);
    // pool columns first, then rows
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let line = &src[r * cols..(r + 1) * cols];
        for &(i, o, w) in &col_w {
            tmp[r * out_cols + o] += w * line[i];
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for &(i, o, w) in &row_w {
        for c in 0..out_cols {
            out[o * out_cols + c] += w * tmp[i * out_cols + c];
        }
    }
    out
}

/// `(input, output, weight)` triples; weights of one output sum to 1.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let mut w = Vec::new();
    let step = n_in as f64 / n_out as f64;
    for o in 0..n_out {
        let lo = o as f64 * step;
        let hi = lo + step;
        let mut i = lo.floor() as usize;
        while (i as f64) < hi && i < n_in {
            let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
            if overlap > 0.0 {
                w.push((i, o, overlap / step));
            }
            i += 1;
        }
    }
    w
}

/// Raw pooled features of one scalogram, length [`FEATURE_DIM`].
pub fn featurize(s: &Scalogram) -> Vec<f64> {
    pool_average(&s.magnitudes, s.n_scales, s.n_time, POOL_ROWS, POOL_COLS)
}

fn compress(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v.max(0.0) + LOG_FLOOR).ln()).collect()
}

/// Per-feature affine standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot fit a standardizer on no rows".into()))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Raw pooled features, as returned by [`featurize`].
    pub features: Vec<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Onecycle,
    Constant,
    Piecewise,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "onecycle" | "1cycle" | "one_cycle" => Ok(ScheduleKind::Onecycle),
            "constant" => Ok(ScheduleKind::Constant),
            "piecewise" => Ok(ScheduleKind::Piecewise),
            other => Err(Error::InvalidParameter(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub optimizer_params: OptimizerParams,
    pub schedule: ScheduleKind,
    /// Peak rate for 1cycle, the rate for constant, the starting rate for piecewise.
    pub lr_max: f64,
    pub piecewise_drop_factor: f64,
    pub piecewise_drop_epochs: usize,
    pub seed: u64,
    /// Validation is run every `eval_every` iterations and after the last one.
    pub eval_every: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: crate::DEFAULT_CLASSES,
            epochs: 3,
            batch_size: 8,
            loss: LossKind::Pom1b,
            optimizer: OptimizerKind::Adamw,
            optimizer_params: OptimizerParams::default(),
            schedule: ScheduleKind::Onecycle,
            lr_max: 0.01,
            piecewise_drop_factor: 0.1,
            piecewise_drop_epochs: 10,
            seed: 0,
            eval_every: 50,
            init_std: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn iterations_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size.max(1))
    }

    pub fn build_schedule(&self, n_train: usize) -> Result<Schedule> {
        let per_epoch = self.iterations_per_epoch(n_train);
        let s = match self.schedule {
            ScheduleKind::Onecycle => {
                let cfg = OneCycleConfig::new(self.lr_max, (per_epoch * self.epochs).max(1));
                cfg.validate()?;
                Schedule::OneCycle(cfg)
            }
            ScheduleKind::Constant => Schedule::Constant { lr: self.lr_max },
            ScheduleKind::Piecewise => Schedule::Piecewise {
                lr: self.lr_max,
                drop_factor: self.piecewise_drop_factor,
                drop_every: (per_epoch * self.piecewise_drop_epochs).max(1),
            },
        };
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter("need at least 2 classes".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr_max = {} must be positive", self.lr_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_acc: Option<f64>,
    pub val_acc_pm1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("iteration,epoch,lr,train_loss,val_acc,val_acc_pm1\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.8e},{:.6},{},{}\n",
                r.iteration,
                r.epoch,
                r.lr,
                r.train_loss,
                opt(r.val_acc),
                opt(r.val_acc_pm1)
            ));
        }
        s
    }

    /// `(iteration, val_acc, val_acc_pm1)` for rows that carry validation numbers.
    pub fn validation_curve(&self) -> Vec<(usize, f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| Some((r.iteration, r.val_acc?, r.val_acc_pm1?)))
            .collect()
    }
}

/// Header of a saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub k: usize,
    pub dim: usize,
    pub loss: LossKind,
    pub fingerprint: String,
    pub config: TrainConfig,
    /// Order of the f64 blocks following the header.
    pub layout: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `[k x dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub standardizer: Standardizer,
    pub config: TrainConfig,
    pub fingerprint: String,
}

impl LinearSoftmaxModel {
    fn logits(&self, z: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn prepare(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                actual: raw.len(),
            });
        }
        Ok(self.standardizer.apply(&compress(raw)))
    }

    pub fn predict_proba(&self, raw: &[f64]) -> Result<ProbVector> {
        let z = self.prepare(raw)?;
        ProbVector::new(softmax(&self.logits(&z)))
    }

    /// Predicted 1-based class.
    pub fn predict(&self, raw: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(raw)?.argmax())
    }

    pub fn evaluate(&self, examples: &[Example]) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::new(self.k);
        for e in examples {
            cm.accumulate(e.class, self.predict(&e.features)?)?;
        }
        Ok(cm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = ModelHeader {
            format: "boltwave-linear-v1".into(),
            k: self.k,
            dim: self.dim,
            loss: self.config.loss,
            fingerprint: self.fingerprint.clone(),
            config: self.config.clone(),
            layout: vec![
                "weights[k*dim]".into(),
                "bias[k]".into(),
                "mean[dim]".into(),
                "std[dim]".into(),
            ],
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
        let mut bytes = Vec::with_capacity(8 + json.len() + 8 * (self.weights.len() + self.k + 2 * self.dim));
        bytes.extend_from_slice(MODEL_MAGIC);
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        for v in self
            .weights
            .iter()
            .chain(&self.bias)
            .chain(&self.standardizer.mean)
            .chain(&self.standardizer.std)
        {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Manifest(format!("{}: {msg}", path.display()));
        if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("not a model file"));
        }
        let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: ModelHeader = serde_json::from_slice(body).map_err(|e| Error::json(path, e))?;
        let (k, dim) = (header.k, header.dim);
        let blob = &bytes[8 + hlen..];
        let expected = k * dim + k + 2 * dim;
        if blob.len() != expected * 8 {
            return Err(Error::LengthMismatch {
                expected,
                actual: blob.len() / 8,
            });
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let (weights, rest) = values.split_at(k * dim);
        let (bias, rest) = rest.split_at(k);
        let (mean, std) = rest.split_at(dim);
        Ok(Self {
            k,
            dim,
            weights: weights.to_vec(),
            bias: bias.to_vec(),
            standardizer: Standardizer {
                mean: mean.to_vec(),
                std: std.to_vec(),
            },
            config: header.config,
            fingerprint: header.fingerprint,
        })
    }
}

fn check_examples(examples: &[Example], k: usize, dim: usize, what: &str) -> Result<()> {
    for e in examples {
        if e.class == 0 || e.class > k {
            return Err(Error::ClassOutOfRange { class: e.class, k });
        }
        if e.features.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                actual: e.features.len(),
            });
        }
    }
    if examples.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} set is empty")));
    }
    Ok(())
}

/// Fits the model with mini-batch gradient descent.
///
/// The same inputs and seed give bit-identical results. With zero epochs the
/// initialization is returned untouched.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<(LinearSoftmaxModel, TrainingLog)> {
    cfg.validate()?;
    let k = cfg.k;
    let dim = train_set
        .first()
        .map(|e| e.features.len())
        .ok_or_else(|| Error::InvalidParameter("training set is empty".into()))?;
    check_examples(train_set, k, dim, "training")?;
    check_examples(val_set, k, dim, "validation")?;
    for c in 1..=k {
        if !train_set.iter().any(|e| e.class == c) {
            return Err(Error::InvalidParameter(format!("class {c} has no training examples")));
        }
    }

    let compressed: Vec<Vec<f64>> = train_set.iter().map(|e| compress(&e.features)).collect();
    let standardizer = Standardizer::fit(&compressed)?;
    let xs: Vec<Vec<f64>> = compressed.iter().map(|x| standardizer.apply(x)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, cfg.init_std.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let n_weights = k * dim;
    // theta = [weights | bias]
    let mut theta: Vec<f64> = (0..n_weights).map(|_| init.sample(&mut rng)).collect();
    theta.extend(std::iter::repeat(0.0).take(k));

    let fp = fingerprint(&(cfg, train_set.len(), val_set.len()));
    let mut model = LinearSoftmaxModel {
        k,
        dim,
        weights: theta[..n_weights].to_vec(),
        bias: theta[n_weights..].to_vec(),
        standardizer,
        config: cfg.clone(),
        fingerprint: fp,
    };
    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    let schedule = cfg.build_schedule(train_set.len())?;
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.optimizer_params, theta.len());
    let per_epoch = cfg.iterations_per_epoch(train_set.len());
    let total = per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grad = vec![0.0; theta.len()];
    let mut iteration = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let lr = schedule.lr_at(iteration)?;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let x = &xs[i];
                let logits: Vec<f64> = (0..k)
                    .map(|c| {
                        theta[n_weights + c]
                            + theta[c * dim..(c + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                let t = TargetLabel::new(train_set[i].class, k)?;
                let lg = loss_from_logits(cfg.loss, &t, &logits)?;
                loss += lg.value * scale;
                for (c, dz) in lg.wrt_logits.iter().enumerate() {
                    let d = dz * scale;
                    for (g, xv) in grad[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *g += d * xv;
                    }
                    grad[n_weights + c] += d;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { iteration, loss });
            }
            opt.step(&mut theta, &grad, lr)?;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { iteration, loss });
            }
            iteration += 1;

            let (mut val_acc, mut val_pm1) = (None, None);
            if iteration % cfg.eval_every.max(1) == 0 || iteration == total {
                model.weights.copy_from_slice(&theta[..n_weights]);
                model.bias.copy_from_slice(&theta[n_weights..]);
                let cm = model.evaluate(val_set)?;
                val_acc = Some(acc(&cm)?);
                val_pm1 = Some(acc_pm1(&cm)?);
            }
            log.rows.push(LogRow {
                iteration,
                epoch,
                lr,
                train_loss: loss,
                val_acc,
                val_acc_pm1: val_pm1,
            });
        }
    }
    model.weights.copy_from_slice(&theta[..n_weights]);
    model.bias.copy_from_slice(&theta[n_weights..]);
    log::info!(
        "trained {} iterations, final train loss {:.4}",
        iteration,
        log.rows.last().map(|r| r.train_loss).unwrap_or(f64::NAN)
    );
    Ok((model, log))
}
