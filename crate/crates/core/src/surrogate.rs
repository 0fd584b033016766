//! VQC surrogate of the cart-pole dynamics.
//!
//! The model maps the scaled `(state, action)` to the scaled state delta.
//! Training minimizes the MSE on scaled targets with Adam and keeps the
//! parameters of the epoch with the lowest validation loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cartpole::{Action, CartPoleState};
use crate::dataset::{Sample, Scaler, Split, SplitDataset};
use crate::error::{config_err, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::policy::Dynamics;
use crate::seed;
use crate::vqc::{BoundVqc, ParamVector, VqcSnapshot, VqcTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Adjoint differentiation; same values as the parameter-shift rule at a
    /// fraction of the cost.
    Adjoint,
    /// Two-term parameter-shift rule with shift π/2.
    ParameterShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gradient: GradientMethod,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, epochs: 20, batch_size: 32, seed: 0, gradient: GradientMethod::Adjoint }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    template: VqcTemplate,
    params: ParamVector,
    scaler: Scaler,
    history: Vec<EpochRecord>,
    selected_epoch: Option<usize>,
    bound: BoundVqc,
}

impl SurrogateModel {
    /// Wraps fixed parameters (no training history).
    pub fn new(template: VqcTemplate, params: ParamVector, scaler: Scaler) -> Result<Self> {
        if template.num_inputs() != 5 || template.num_outputs() != 4 {
            return Err(config_err(format!(
                "surrogate template must have 5 inputs and 4 outputs, has {} and {}",
                template.num_inputs(),
                template.num_outputs()
            )));
        }
        let bound = template.bind(&params)?;
        Ok(Self { template, params, scaler, history: Vec::new(), selected_epoch: None, bound })
    }

    /// An untrained model with parameters uniform in `[-π, π)`.
    pub fn random(template: VqcTemplate, scaler: Scaler, seed: u64) -> Result<Self> {
        let mut rng = seed::stream_rng(seed, seed::STREAM_PARAM_INIT);
        let params = ParamVector::random_uniform(template.num_params(), &mut rng);
        Self::new(template, params, scaler)
    }

    pub fn template(&self) -> &VqcTemplate {
        &self.template
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn selected_epoch(&self) -> Option<usize> {
        self.selected_epoch
    }

    /// Scaled-space outputs for one scaled input.
    pub fn predict_scaled(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.bound.evaluate(input)
    }

    /// Next-state prediction `s + unscale(m(scale(s), a))`.
    pub fn predict(&self, state: &CartPoleState, action: Action) -> CartPoleState {
        let input = self.scaler.scale_input(state, action);
        match self.bound.evaluate(&input) {
            Ok(out) => {
                let delta = self.scaler.unscale_target(&out);
                let s = state.to_array();
                CartPoleState::from_array(std::array::from_fn(|d| s[d] + delta[d]))
            }
            // input arity is fixed by construction
            Err(_) => CartPoleState::from_array([f64::NAN; 4]),
        }
    }

    /// MSE over scaled targets, averaged over samples and dimensions.
    pub fn evaluate_loss(&self, samples: &[Sample]) -> Result<f64> {
        mean_loss(&self.bound, samples)
    }

    pub fn evaluate_split(&self, dataset: &SplitDataset, split: Split) -> Result<f64> {
        self.evaluate_loss(dataset.samples(split))
    }

    pub fn snapshot(&self) -> SurrogateSnapshot {
        SurrogateSnapshot {
            schema_version: SURROGATE_SCHEMA_VERSION,
            vqc: VqcSnapshot::new(&self.template, self.params.clone()),
            scaler: self.scaler.clone(),
            selected_epoch: self.selected_epoch,
            history: self.history.clone(),
        }
    }

    pub fn from_snapshot(snap: SurrogateSnapshot) -> Result<Self> {
        if snap.schema_version != SURROGATE_SCHEMA_VERSION {
            return Err(Error::Schema {
                what: "surrogate model".into(),
                expected: SURROGATE_SCHEMA_VERSION,
                found: snap.schema_version,
            });
        }
        let (template, params) = snap.vqc.restore()?;
        let mut model = Self::new(template, params, snap.scaler)?;
        model.history = snap.history;
        model.selected_epoch = snap.selected_epoch;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.snapshot())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snap: SurrogateSnapshot = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::from_snapshot(snap)
    }

    /// `epoch,train_loss,val_loss` rows.
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        write_history_csv(path, &self.history)
    }
}

impl Dynamics for SurrogateModel {
    fn predict(&self, state: &CartPoleState, action: Action) -> CartPoleState {
        SurrogateModel::predict(self, state, action)
    }
}

pub const SURROGATE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSnapshot {
    pub schema_version: u32,
    pub vqc: VqcSnapshot,
    pub scaler: Scaler,
    pub selected_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in history {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_loss(bound: &BoundVqc, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate loss on an empty split".into()));
    }
    let losses = samples
        .par_iter()
        .map(|s| {
            let out = bound.evaluate(&s.input)?;
            Ok(out.iter().zip(&s.target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / 4.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Loss and mean gradient over a batch. Per-sample terms are computed in
/// parallel and reduced in index order.
fn batch_gradient(
    template: &VqcTemplate,
    params: &ParamVector,
    batch: &[Sample],
    method: GradientMethod,
) -> Result<(f64, Vec<f64>)> {
    let bound = template.bind(params)?;
    let terms = batch
        .par_iter()
        .map(|s| match method {
            GradientMethod::Adjoint => bound.mse_gradient(&s.input, &s.target),
            GradientMethod::ParameterShift => {
                template.mse_gradient_parameter_shift(&s.input, params, &s.target)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in &terms {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Gradient of the mean batch MSE; exposed for gradient checks.
pub fn loss_gradient(
    template: &VqcTemplate,
    params: &ParamVector,
    batch: &[Sample],
    method: GradientMethod,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    batch_gradient(template, params, batch, method)
}

pub fn train(dataset: &SplitDataset, template: VqcTemplate, config: &TrainConfig) -> Result<SurrogateModel> {
    train_on(dataset.samples(Split::Train), dataset.samples(Split::Val), dataset.scaler(), template, config)
}

/// Trains on explicit train/val samples (used by the data-fraction study).
pub fn train_on(
    train: &[Sample],
    val: &[Sample],
    scaler: &Scaler,
    template: VqcTemplate,
    config: &TrainConfig,
) -> Result<SurrogateModel> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("training needs nonempty train and val splits".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(config_err("batch size and epochs must be positive"));
    }
    let mut model = SurrogateModel::random(template, scaler.clone(), config.seed)?;
    let mut params = model.params.clone();
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, params.len());
    let mut shuffle_rng = seed::stream_rng(config.seed, seed::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, ParamVector)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grad) = batch_gradient(&model.template, &params, &batch, config.gradient)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss {loss} at epoch {epoch}, batch {b}")));
            }
            adam.step(&mut params.0, &grad)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += loss * batch.len() as f64;
        }
        let val_loss = mean_loss(&model.template.bind(&params)?, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        history.push(EpochRecord { epoch, train_loss: loss_sum / train.len() as f64, val_loss });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }

    let (_, epoch, best_params) = best.expect("at least one epoch");
    model.bound = model.template.bind(&best_params)?;
    model.params = best_params;
    model.history = history;
    model.selected_epoch = Some(epoch);
    Ok(model)
}
