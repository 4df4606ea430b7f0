//! Hyperparameter grid and model selection by validation loss.

use serde::{Deserialize, Serialize};

use super::{train, HyperParams, TrainConfig, TrainData, TrainOutcome};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub hidden: Vec<usize>,
}

impl GridSpec {
    /// 3 learning rates × 3 dropout rates × 4 hidden sizes.
    pub fn full() -> Self {
        Self {
            learning_rates: vec![3e-4, 3e-5, 3e-6],
            dropouts: vec![0.2, 0.3, 0.4],
            hidden: vec![50, 100, 200, 300],
        }
    }

    /// Shrunk grid for CPU runs.
    pub fn desk() -> Self {
        Self {
            learning_rates: vec![3e-4],
            dropouts: vec![0.2],
            hidden: vec![50, 100],
        }
    }

    pub fn single(hyper: HyperParams) -> Self {
        Self {
            learning_rates: vec![hyper.learning_rate],
            dropouts: vec![hyper.dropout],
            hidden: vec![hyper.hidden],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::Config(format!("unknown grid preset {name:?} (expected full or desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.dropouts.is_empty() || self.hidden.is_empty() {
            return Err(Error::Config("grid has an empty axis".into()));
        }
        if self.learning_rates.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if self.dropouts.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }

    /// Row-major over learning rate, dropout, hidden.
    pub fn configs(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &dropout in &self.dropouts {
                for &hidden in &self.hidden {
                    out.push(HyperParams {
                        learning_rate,
                        dropout,
                        hidden,
                    });
                }
            }
        }
        out
    }
}

/// Validation loss of one grid point, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub hyper: HyperParams,
    pub validation_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: TrainOutcome,
    pub results: Vec<GridResult>,
}

/// Trains every grid point (in parallel) and keeps the one with the lowest
/// validation loss; ties go to the earlier point. Diverged points are
/// recorded and skipped. Every point starts from the same seed.
pub fn grid_search(arch: Architecture, cfg: &TrainConfig, data: TrainData<'_>) -> Result<GridOutcome> {
    cfg.validate()?;
    let configs = cfg.grid.configs();
    let runs = par::map(&configs, |hyper| train(arch, *hyper, cfg, data));
    let mut results = Vec::with_capacity(runs.len());
    let mut best: Option<TrainOutcome> = None;
    for (hyper, run) in configs.iter().zip(runs) {
        match run {
            Ok(out) => {
                results.push(GridResult {
                    hyper: *hyper,
                    validation_loss: Some(out.best_validation_loss),
                    best_epoch: Some(out.best_epoch),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| out.best_validation_loss < b.best_validation_loss) {
                    best = Some(out);
                }
            }
            Err(e @ (Error::Diverged { .. } | Error::NonFiniteGradient { .. })) => {
                log::warn!("{arch} {hyper}: {e}");
                results.push(GridResult {
                    hyper: *hyper,
                    validation_loss: None,
                    best_epoch: None,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(best) => Ok(GridOutcome { best, results }),
        None => Err(Error::AllConfigsDiverged),
    }
}
