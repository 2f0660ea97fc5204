//! Surrogate next-state predictor.
//!
//! Windows of `h` consecutive contexts, each concatenated with the flight's
//! configuration, are fed to an LSTM that predicts the state unit at the
//! following tick. Features are min-max scaled to [-1, 1]: context
//! dimensions from the training logs, configuration dimensions from the
//! parameter ranges.

pub mod lstm;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flightlog::{Context, LogSet, Segment};
use crate::paramspec::{Configuration, ParameterTable};
use crate::rng;
use crate::simkernel::StateUnit;

pub use lstm::{Adam, Lstm};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.lgd";
pub const CONTEXT_DIM: usize = Context::LEN;
pub const OUTPUT_DIM: usize = StateUnit::LEN;
/// Features beyond this magnitude indicate a broken normalizer.
pub const FEATURE_HARD_LIMIT: f64 = 10.0;
pub const MIN_TRAINING_WINDOWS: usize = 100;
const RESIDUAL_SCALE_FLOOR: f64 = 1e-6;

/// Per-dimension affine map of [min, max] onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![-1.0; dim],
            max: vec![1.0; dim],
        }
    }

    /// Context statistics over every entry of `logset`, configuration
    /// dimensions from the table ranges.
    pub fn fit(logset: &LogSet, table: &ParameterTable) -> Result<Self> {
        let mut min = vec![f64::INFINITY; CONTEXT_DIM];
        let mut max = vec![f64::NEG_INFINITY; CONTEXT_DIM];
        for e in logset.flights.iter().flat_map(|f| &f.entries) {
            for (k, v) in e.context.to_array().into_iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if min[0].is_infinite() {
            return Err(Error::Empty("log set has no entries".into()));
        }
        for s in table.specs() {
            min.push(s.lower);
            max.push(s.upper);
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply(&self, k: usize, x: f64) -> f64 {
        let w = self.max[k] - self.min[k];
        if w > 0.0 {
            2.0 * (x - self.min[k]) / w - 1.0
        } else {
            0.0
        }
    }

    pub fn invert(&self, k: usize, y: f64) -> f64 {
        self.min[k] + (y + 1.0) * 0.5 * (self.max[k] - self.min[k])
    }

    pub fn context(&self, c: &Context) -> [f64; CONTEXT_DIM] {
        let mut out = c.to_array();
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.apply(k, *v);
        }
        out
    }

    pub fn state(&self, s: &StateUnit) -> [f64; OUTPUT_DIM] {
        let mut out = s.to_array();
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.apply(k, *v);
        }
        out
    }

    pub fn config(&self, config: &Configuration) -> Vec<f64> {
        config
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| self.apply(CONTEXT_DIM + j, v))
            .collect()
    }
}

/// One training example: `h` rows of `[context | config]` and the state
/// at the following tick, all normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub rows: Vec<Vec<f64>>,
    pub target: [f64; OUTPUT_DIM],
}

/// Flat storage for many windows of equal shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub h: usize,
    pub input_dim: usize,
    /// `len * h * input_dim` values
    pub inputs: Vec<f64>,
    /// `len * OUTPUT_DIM` values
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(h: usize, input_dim: usize) -> Self {
        Self {
            h,
            input_dim,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len() / OUTPUT_DIM
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, window: &FeatureWindow) -> Result<()> {
        if window.rows.len() != self.h {
            return Err(Error::DimensionMismatch {
                expected: self.h,
                actual: window.rows.len(),
            });
        }
        for row in &window.rows {
            if row.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    actual: row.len(),
                });
            }
            self.inputs.extend_from_slice(row);
        }
        self.targets.extend_from_slice(&window.target);
        Ok(())
    }

    pub fn window(&self, n: usize) -> FeatureWindow {
        let per = self.h * self.input_dim;
        let mut target = [0.0; OUTPUT_DIM];
        target.copy_from_slice(&self.targets[n * OUTPUT_DIM..(n + 1) * OUTPUT_DIM]);
        FeatureWindow {
            rows: self.inputs[n * per..(n + 1) * per]
                .chunks_exact(self.input_dim)
                .map(<[f64]>::to_vec)
                .collect(),
            target,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let per = self.h * self.input_dim;
        let mut out = Dataset::new(self.h, self.input_dim);
        for &n in idx {
            out.inputs.extend_from_slice(&self.inputs[n * per..(n + 1) * per]);
            out.targets
                .extend_from_slice(&self.targets[n * OUTPUT_DIM..(n + 1) * OUTPUT_DIM]);
        }
        out
    }

    /// Shuffled split into (train, validation).
    pub fn split(&self, validation_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, &[0x5B]));
        let n_val =
            ((self.len() as f64 * validation_fraction).round() as usize).clamp(1, self.len().saturating_sub(1).max(1));
        let (val, train) = idx.split_at(n_val);
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        (self.subset(&train), self.subset(&val))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dataset: Dataset,
    pub normalizer: Normalizer,
    /// Flights too short to yield a single window.
    pub skipped_flights: usize,
}

/// Sliding windows (stride 1, within each flight). When more than
/// `max_windows` windows exist, a uniform subsample is kept.
pub fn extract_features(
    logset: &LogSet,
    table: &ParameterTable,
    h: usize,
    max_windows: Option<usize>,
    seed: u64,
) -> Result<Features> {
    if h == 0 {
        return Err(Error::Precondition("window length h must be at least 1".into()));
    }
    if logset.flights.is_empty() {
        return Err(Error::Empty("log set has no flights".into()));
    }
    let normalizer = Normalizer::fit(logset, table)?;
    let mut all = Vec::new();
    let mut skipped = 0;
    for (fi, f) in logset.flights.iter().enumerate() {
        table.check_dim(&f.config)?;
        if f.entries.len() <= h {
            skipped += 1;
            continue;
        }
        all.extend((0..f.entries.len() - h).map(|s| (fi, s)));
    }
    if let Some(max) = max_windows {
        if all.len() > max {
            let mut r = rng::stream(seed, &[0xFE]);
            let mut picked = rand::seq::index::sample(&mut r, all.len(), max).into_vec();
            picked.sort_unstable();
            all = picked.into_iter().map(|k| all[k]).collect();
        }
    }

    let input_dim = CONTEXT_DIM + table.dim();
    let mut dataset = Dataset::new(h, input_dim);
    dataset.inputs.reserve(all.len() * h * input_dim);
    let mut cfg_cache: Option<(usize, Vec<f64>)> = None;
    for (fi, start) in all {
        let f = &logset.flights[fi];
        let cfg = match &cfg_cache {
            Some((i, c)) if *i == fi => c.clone(),
            _ => {
                let c = normalizer.config(&f.config);
                cfg_cache = Some((fi, c.clone()));
                c
            }
        };
        for e in &f.entries[start..start + h] {
            dataset.inputs.extend_from_slice(&normalizer.context(&e.context));
            dataset.inputs.extend_from_slice(&cfg);
        }
        dataset
            .targets
            .extend_from_slice(&normalizer.state(&f.entries[start + h].context.state));
    }
    if let Some(v) = dataset
        .inputs
        .iter()
        .chain(&dataset.targets)
        .find(|v| !(v.abs() <= FEATURE_HARD_LIMIT))
    {
        return Err(Error::Precondition(format!(
            "normalized feature {v} outside ±{FEATURE_HARD_LIMIT}"
        )));
    }
    Ok(Features {
        dataset,
        normalizer,
        skipped_flights: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorHyperparams {
    pub h: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Cap on training windows drawn from the logs.
    pub max_windows: usize,
    /// Learn the scaled one-step change of the state instead of the state.
    #[serde(default)]
    pub residual: bool,
}

impl Default for PredictorHyperparams {
    fn default() -> Self {
        Self {
            h: 4,
            hidden_size: 64,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 64,
            validation_fraction: 0.2,
            patience: 5,
            max_windows: 6000,
            residual: false,
        }
    }
}

impl PredictorHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(m.to_string()));
        if self.h < 1 {
            return bad("h must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad("validation fraction must lie in (0, 0.5]");
        }
        if self.hidden_size == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("hidden size, batch size and epochs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSplit {
    Train,
    Val,
}

impl std::str::FromStr for ThresholdSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(ThresholdSplit::Train),
            "val" => Ok(ThresholdSplit::Val),
            _ => Err(format!("expected `train` or `val`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Validation loss before the first update.
    pub initial_val_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainingReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss
            .get(self.best_epoch.wrapping_sub(1))
            .copied()
            .unwrap_or(self.initial_val_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub format_version: u32,
    pub h: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub hidden_size: usize,
    pub parameters: Vec<String>,
    pub normalizer: Normalizer,
    pub threshold: f64,
    pub threshold_split: ThresholdSplit,
    pub hyperparams: PredictorHyperparams,
    /// Per-output scale of the learned state change; `None` when the
    /// network predicts the state directly.
    #[serde(default)]
    pub residual_scale: Option<Vec<f64>>,
    pub training: TrainingReport,
    pub net: Lstm,
}

/// Trains with mini-batch Adam and early stopping; the returned weights are
/// those with the lowest validation loss (the untrained weights included).
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    hp: &PredictorHyperparams,
    seed: u64,
) -> Result<(Lstm, TrainingReport)> {
    hp.validate()?;
    if train_set.len() + val_set.len() < MIN_TRAINING_WINDOWS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_TRAINING_WINDOWS} windows, got {}",
            train_set.len() + val_set.len()
        )));
    }
    if train_set.is_empty()
        || val_set.is_empty()
        || train_set.input_dim != val_set.input_dim
        || train_set.h != val_set.h
    {
        return Err(Error::Precondition(
            "train and validation sets must be non-empty and aligned".into(),
        ));
    }
    let mut net = Lstm::init(
        train_set.input_dim,
        hp.hidden_size,
        OUTPUT_DIM,
        &mut rng::stream(seed, &[0x1A]),
    );
    let mut adam = Adam::new(net.params.len(), hp.learning_rate);
    let val_idx: Vec<usize> = (0..val_set.len()).collect();
    let train_idx: Vec<usize> = (0..train_set.len()).collect();
    let h = train_set.h;

    let initial_val_loss = net.loss(&val_set.inputs, &val_set.targets, h, &val_idx);
    let mut best = (initial_val_loss, 0usize, net.params.clone());
    let mut report = TrainingReport {
        epochs_run: 0,
        best_epoch: 0,
        initial_val_loss,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        n_train: train_set.len(),
        n_val: val_set.len(),
    };
    let mut order = train_idx.clone();
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng::stream(seed, &[0xE0, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let (loss, grad) = net.loss_and_grad(&train_set.inputs, &train_set.targets, h, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut net.params, &grad);
        }
        let val = net.loss(&val_set.inputs, &val_set.targets, h, &val_idx);
        if !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.val_loss.push(val);
        report.epochs_run = epoch;
        if val < best.0 {
            best = (val, epoch, net.params.clone());
        } else if epoch - best.1 >= hp.patience {
            break;
        }
    }
    report.best_epoch = best.1;
    net.params = best.2;
    Ok((net, report))
}

impl SurrogateModel {
    /// Extracts features, trains, and calibrates the threshold.
    pub fn fit(
        logset: &LogSet,
        table: &ParameterTable,
        hp: &PredictorHyperparams,
        split: ThresholdSplit,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        let features = extract_features(logset, table, hp.h, Some(hp.max_windows), seed)?;
        let (train_set, val_set) = features.dataset.split(hp.validation_fraction, seed);
        let residual_scale = hp.residual.then(|| step_scale(&train_set));
        let (net, training) = match &residual_scale {
            Some(scale) => train(&to_residual(&train_set, scale), &to_residual(&val_set, scale), hp, seed)?,
            None => train(&train_set, &val_set, hp, seed)?,
        };
        let mut model = Self {
            format_version: MODEL_FORMAT_VERSION,
            h: hp.h,
            d: table.dim(),
            hidden_size: hp.hidden_size,
            parameters: table.names().map(str::to_string).collect(),
            normalizer: features.normalizer,
            threshold: 0.0,
            threshold_split: split,
            hyperparams: hp.clone(),
            residual_scale,
            training,
            net,
        };
        let calib = match split {
            ThresholdSplit::Train => &train_set,
            ThresholdSplit::Val => &val_set,
        };
        model.threshold = calibrate_threshold(&model, calib)?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        CONTEXT_DIM + self.d
    }

    pub fn check_table(&self, table: &ParameterTable) -> Result<()> {
        if table.dim() != self.d || !table.names().eq(self.parameters.iter().map(String::as_str)) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: table.dim(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, window: &FeatureWindow) -> Result<[f64; OUTPUT_DIM]> {
        if window.rows.len() != self.h {
            return Err(Error::DimensionMismatch {
                expected: self.h,
                actual: window.rows.len(),
            });
        }
        let mut flat = Vec::with_capacity(self.h * self.input_dim());
        for row in &window.rows {
            if row.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    actual: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Ok(self.output(&flat))
    }

    /// Normalized next state for one flat `h x input_dim` window.
    pub(crate) fn output(&self, flat: &[f64]) -> [f64; OUTPUT_DIM] {
        let y = self.net.forward(flat);
        self.compose(&flat[(self.h - 1) * self.input_dim()..], &y)
    }

    fn compose(&self, last_row: &[f64], y: &[f64]) -> [f64; OUTPUT_DIM] {
        let mut out = [0.0; OUTPUT_DIM];
        match &self.residual_scale {
            Some(scale) => {
                for k in 0..OUTPUT_DIM {
                    out[k] = last_row[k] + scale[k] * y[k];
                }
            }
            None => out.copy_from_slice(y),
        }
        out
    }

    /// Window built from the first `h` contexts of `segment` and `config`.
    pub fn window(&self, segment: &Segment, config: &Configuration) -> Result<(FeatureWindow, [f64; OUTPUT_DIM])> {
        if segment.contexts.len() != self.h + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.h + 1,
                actual: segment.contexts.len(),
            });
        }
        if config.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: config.len(),
            });
        }
        let cfg = self.normalizer.config(config);
        let rows = segment.contexts[..self.h]
            .iter()
            .map(|c| {
                let mut row = self.normalizer.context(c).to_vec();
                row.extend_from_slice(&cfg);
                row
            })
            .collect();
        let truth = self.normalizer.state(&segment.contexts[self.h].state);
        Ok((FeatureWindow { rows, target: truth }, truth))
    }

    /// L1 distance between the predicted and the recorded next state, in
    /// normalized units.
    pub fn deviation(&self, segment: &Segment, config: &Configuration) -> Result<f64> {
        let (window, truth) = self.window(segment, config)?;
        Ok(l1(&self.predict(&window)?, &truth))
    }

    /// Deviation evaluator for one segment, taking configurations in the
    /// unit box. The context half of the input projection is computed once.
    pub fn evaluator(&self, segment: &Segment, table: &ParameterTable) -> Result<SegmentEvaluator<'_>> {
        self.check_table(table)?;
        let (window, truth) = self.window(segment, &table.default_configuration())?;
        let hd = self.hidden_size;
        let cols = self.input_dim() + hd;
        let w = self.net.w();
        let bias = self.net.bias();
        let context_proj = window
            .rows
            .iter()
            .map(|row| {
                (0..4 * hd)
                    .map(|r| bias[r] + (0..CONTEXT_DIM).map(|k| w[r * cols + k] * row[k]).sum::<f64>())
                    .collect()
            })
            .collect();
        // unit u -> normalized feature a*u + b
        let affine = table
            .specs()
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let lo = self.normalizer.apply(CONTEXT_DIM + j, s.lower);
                let hi = self.normalizer.apply(CONTEXT_DIM + j, s.upper);
                (hi - lo, lo)
            })
            .collect();
        let last_state = window.rows[self.h - 1][..OUTPUT_DIM].to_vec();
        Ok(SegmentEvaluator {
            model: self,
            context_proj,
            affine,
            truth,
            last_state,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model: Self = serde_json::from_value(value)?;
        let expect = Lstm::n_params(model.input_dim(), model.hidden_size, OUTPUT_DIM);
        if model.net.params.len() != expect || model.normalizer.dim() != model.input_dim() {
            return Err(Error::Truncated {
                path: path.display().to_string(),
                message: "weight or normalizer size does not match the header".into(),
            });
        }
        Ok(model)
    }
}

/// Standard deviation of the one-step state change per output, floored.
fn step_scale(ds: &Dataset) -> Vec<f64> {
    let per = ds.h * ds.input_dim;
    let last = (ds.h - 1) * ds.input_dim;
    let n = ds.len().max(1) as f64;
    let mut sum = [0.0; OUTPUT_DIM];
    let mut sq = [0.0; OUTPUT_DIM];
    for i in 0..ds.len() {
        for k in 0..OUTPUT_DIM {
            let d = ds.targets[i * OUTPUT_DIM + k] - ds.inputs[i * per + last + k];
            sum[k] += d;
            sq[k] += d * d;
        }
    }
    (0..OUTPUT_DIM)
        .map(|k| {
            (sq[k] / n - (sum[k] / n).powi(2))
                .max(0.0)
                .sqrt()
                .max(RESIDUAL_SCALE_FLOOR)
        })
        .collect()
}

fn to_residual(ds: &Dataset, scale: &[f64]) -> Dataset {
    let per = ds.h * ds.input_dim;
    let last = (ds.h - 1) * ds.input_dim;
    let mut out = ds.clone();
    for i in 0..ds.len() {
        for k in 0..OUTPUT_DIM {
            let t = &mut out.targets[i * OUTPUT_DIM + k];
            *t = (*t - ds.inputs[i * per + last + k]) / scale[k];
        }
    }
    out
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Largest deviation of any window in `dataset` from its own target.
pub fn calibrate_threshold(model: &SurrogateModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("threshold calibration set".into()));
    }
    let per = dataset.h * dataset.input_dim;
    Ok((0..dataset.len())
        .map(|n| {
            let y = model.output(&dataset.inputs[n * per..(n + 1) * per]);
            l1(&y, &dataset.targets[n * OUTPUT_DIM..(n + 1) * OUTPUT_DIM])
        })
        .fold(0.0, f64::max))
}

pub struct SegmentEvaluator<'a> {
    model: &'a SurrogateModel,
    context_proj: Vec<Vec<f64>>,
    affine: Vec<(f64, f64)>,
    truth: [f64; OUTPUT_DIM],
    last_state: Vec<f64>,
}

impl SegmentEvaluator<'_> {
    /// Deviation for a configuration given in the unit box.
    pub fn deviation_unit(&self, unit: &[f64]) -> f64 {
        let net = &self.model.net;
        let hd = net.hidden;
        let cols = net.input + hd;
        let w = net.w();
        let cfg: Vec<f64> = unit.iter().zip(&self.affine).map(|(u, (a, b))| a * u + b).collect();
        let cfg_proj: Vec<f64> = (0..4 * hd)
            .map(|r| {
                let row = &w[r * cols + CONTEXT_DIM..r * cols + CONTEXT_DIM + cfg.len()];
                row.iter().zip(&cfg).map(|(a, b)| a * b).sum()
            })
            .collect();
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut z = vec![0.0; 4 * hd];
        for proj in &self.context_proj {
            for r in 0..4 * hd {
                z[r] = proj[r] + cfg_proj[r];
            }
            net.cell(&mut z, &mut h, &mut c);
        }
        l1(&self.model.compose(&self.last_state, &net.head(&h)), &self.truth)
    }
}

#[cfg(test)]
mod tests;
