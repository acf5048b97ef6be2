//! Optimizer, training loop, evaluation, ablations and the scaling probe.

pub mod ablation;
pub mod adam;
pub mod scaling;
pub mod trainer;

pub use ablation::{run_ablation, write_ablation_csv, AblationKind, AblationRow, ABLATION_HEADER};
pub use adam::{Adam, AdamConfig};
pub use scaling::{linear_fit_r2, scaling_probe, ScalingConfig, ScalingReport, ScalingRow, SCALING_HEADER};
pub use trainer::{
    evaluate, per_sample_errors, sample_beta, sample_gradient, sample_loss, train, SampleGradient, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::model::SvdNoConfig;
use crate::par::Execution;
use serde::{Deserialize, Serialize};

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset stem (`<stem>.json` / `<stem>.bin`).
    pub data: String,
    pub out: String,
    pub model: SvdNoConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validation every this many epochs (the last epoch is always
    /// evaluated).
    pub eval_every: usize,
    pub ortho_weight: f64,
    pub adam: AdamConfig,
    /// Record wall-clock columns. Off by default so that output files are
    /// reproducible byte for byte.
    pub timing: bool,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: String::new(),
            out: String::new(),
            model: SvdNoConfig::default(),
            epochs: 200,
            batch_size: 16,
            seed: 0,
            eval_every: 1,
            ortho_weight: 1.0,
            adam: AdamConfig::default(),
            timing: false,
            execution: Execution::Parallel,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(self.ortho_weight >= 0.0) {
            return Err(Error::Config("ortho_weight must be non-negative".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
