//! Maximum-likelihood training with Adam, grid search and gradient checks.
//!
//! The update loop itself runs on one thread and is bit-reproducible from
//! the seed. Validation losses and grid configurations go through
//! [`crate::par`].

mod gradcheck;
mod grid;

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gradcheck::{
    compare_gradients, crosses_kink, gradient_check, live_coordinates, numeric_gradient, relative_error, GradCheck,
};
pub use grid::{grid_search, GridOutcome, GridResult, GridSpec};

use crate::corpus::{ArticleIndex, Case, LabelMatrix, OutcomeLabel};
use crate::encoder::{EncoderConfig, EncoderKind, FactInput, VectorTable};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::{Architecture, Model};
use crate::par;

pub const BATCH_SIZE: usize = 16;
pub const MAX_EPOCHS: usize = 10;

const DROPOUT_STREAM: u64 = 0xD0;
const SHUFFLE_STREAM: u64 = 0x5F;

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub dropout: f64,
    pub hidden: usize,
}

impl std::fmt::Display for HyperParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "lr={} dropout={} hidden={}", self.learning_rate, self.dropout, self.hidden)
    }
}

/// Everything needed to train one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub grid: GridSpec,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::desk(),
            batch_size: BATCH_SIZE,
            max_epochs: MAX_EPOCHS,
            seed: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "grid",
    "learning_rate",
    "dropout",
    "hidden",
    "batch_size",
    "max_epochs",
    "seed",
    "encoder",
    "vocab_buckets",
    "width",
    "max_tokens",
];

impl TrainConfig {
    /// Reads the training keys of `kv`; other keys are left to the caller.
    ///
    /// `grid = full|desk` picks a preset, and `learning_rate`, `dropout`
    /// and `hidden` (comma-separated lists) override its axes.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        if let Some(name) = kv.get("grid") {
            cfg.grid = GridSpec::preset(name)?;
        }
        if let Some(v) = kv.list("learning_rate")? {
            cfg.grid.learning_rates = v;
        }
        if let Some(v) = kv.list("dropout")? {
            cfg.grid.dropouts = v;
        }
        if let Some(v) = kv.list("hidden")? {
            cfg.grid.hidden = v;
        }
        if let Some(v) = kv.parsed("batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = kv.parsed("max_epochs")? {
            cfg.max_epochs = v;
        }
        if let Some(v) = kv.parsed("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = kv.parsed("encoder")? {
            cfg.encoder.kind = v;
        }
        if let Some(v) = kv.parsed("vocab_buckets")? {
            cfg.encoder.vocab_buckets = v;
        }
        if let Some(v) = kv.parsed("width")? {
            cfg.encoder.width = v;
        }
        if let Some(v) = kv.parsed("max_tokens")? {
            cfg.encoder.max_tokens = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(TRAIN_KEYS)?;
        Self::from_kv(&kv)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.grid.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Encoded facts plus the aligned label matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<FactInput>,
    pub labels: LabelMatrix,
}

impl Dataset {
    pub fn new(cases: &[Case], index: &ArticleIndex, encoder: &EncoderConfig) -> Result<Self> {
        let labels = LabelMatrix::build(cases, index)?;
        let inputs = par::map(cases, |c| FactInput::new(c.case_id.clone(), &c.facts, encoder));
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn gold(&self, case: usize) -> &[OutcomeLabel] {
        self.labels.row(case)
    }
}

/// Mean over `cases` of the per-case negative log-likelihood, dropout off.
pub fn nll_loss(model: &Model, data: &Dataset, cases: &[usize]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    let losses = par::map(cases, |&i| model.case_loss(&data.inputs[i], data.gold(i)));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / cases.len() as f64)
}

pub fn full_loss(model: &Model, data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    nll_loss(model, data, &all)
}

/// Mean loss and gradient over a batch. `dropout` is `(rate, seed of the
/// first case)`; case `i` of the batch uses `mix_seed(seed, i)`.
pub fn batch_gradient(
    model: &Model,
    data: &Dataset,
    cases: &[usize],
    dropout: Option<(f64, u64)>,
) -> Result<(f64, Vec<f64>, usize)> {
    let scale = 1.0 / cases.len() as f64;
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    let mut clamped = 0;
    for (slot, &i) in cases.iter().enumerate() {
        let d = dropout.map(|(rate, seed)| (rate, par::mix_seed(seed, slot as u64)));
        let cg = model.case_gradient(&data.inputs[i], data.gold(i), d)?;
        loss += cg.loss * scale;
        clamped += cg.clamped;
        model.accumulate(&data.inputs[i], &cg, scale, &mut grad);
    }
    Ok((loss, grad, clamped))
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching any state.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            index,
            value,
            step: state.t,
        });
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        let m = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        if m != 0.0 {
            params[i] -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub hyper: HyperParams,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// JSONL: one record per epoch, then a `selected` record.
    pub fn write_log(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for e in &self.epochs {
            writeln!(out, "{}", serde_json::to_string(e).expect("record serializes"))?;
        }
        let sel = serde_json::json!({
            "selected_epoch": self.best_epoch,
            "validation_loss": self.best_validation_loss,
            "learning_rate": self.hyper.learning_rate,
            "dropout": self.hyper.dropout,
            "hidden": self.hyper.hidden,
        });
        writeln!(out, "{sel}")
    }
}

/// Shared inputs of a training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub articles: &'a ArticleIndex,
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    pub vectors: Option<&'a Arc<VectorTable>>,
}

/// Trains one configuration and returns the epoch with the lowest
/// validation loss. Epoch 0 is the initialisation.
pub fn train(arch: Architecture, hyper: HyperParams, cfg: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let mut model = Model::new(arch, data.articles.clone(), cfg.encoder, hyper.hidden, cfg.seed)?;
    if cfg.encoder.kind == EncoderKind::Precomputed {
        let table = data
            .vectors
            .ok_or_else(|| Error::Config("precomputed encoder needs a vector table".into()))?;
        model.attach_vectors(Arc::clone(table))?;
    }
    let diverged = |epoch: usize, loss: f64| Error::Diverged {
        epoch,
        loss,
        config: format!("{arch} {hyper}"),
    };

    let initial = full_loss(&model, data.validation)?;
    if !initial.is_finite() {
        return Err(diverged(0, initial));
    }
    let mut best = (model.clone(), 0, initial);
    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut adam = AdamState::new(model.n_params());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let dropout_seed = par::mix_seed(cfg.seed, DROPOUT_STREAM);
    let mut step = 0u64;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(par::mix_seed(par::mix_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64));
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut clamped = 0;
        for batch in order.chunks(cfg.batch_size) {
            let seed = par::mix_seed(dropout_seed, step.wrapping_mul(cfg.batch_size as u64));
            let dropout = (hyper.dropout > 0.0).then_some((hyper.dropout, seed));
            let (loss, grad, c) = batch_gradient(&model, data.train, batch, dropout)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, loss));
            }
            adam_step(model.params_mut(), &grad, &mut adam, hyper.learning_rate)?;
            // A step can overflow the weights before the loss notices.
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(diverged(epoch, loss));
            }
            train_loss += loss * batch.len() as f64;
            clamped += c;
            step += 1;
        }
        train_loss /= data.train.len() as f64;
        let validation_loss = full_loss(&model, data.validation)?;
        if !validation_loss.is_finite() {
            return Err(diverged(epoch, validation_loss));
        }
        if clamped > 0 {
            log::warn!("{arch} {hyper}: epoch {epoch} clamped {clamped} zero-probability terms");
        }
        log::debug!("{arch} {hyper}: epoch {epoch} train {train_loss:.5} validation {validation_loss:.5}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            clamped,
        });
        if validation_loss < best.2 {
            best = (model.clone(), epoch, validation_loss);
        }
    }
    let (model, best_epoch, best_validation_loss) = best;
    Ok(TrainOutcome {
        model,
        hyper,
        best_epoch,
        best_validation_loss,
        epochs,
    })
}
