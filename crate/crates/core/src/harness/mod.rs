//! Closes the loop between stage objectives and the scheduler: a small
//! differentiable model trained by gradient descent, and a scripted loss
//! simulator.

mod dynamics;
mod gradcheck;
mod toy;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::losses::{LossError, ObjectiveConfig};
use crate::registry::RegistryError;
use crate::scheduler::SchedulerError;

pub use dynamics::{run_dynamics_sim, CurveEvent, DomainCurves, DomainPool, DynamicsSpec, LossCurve, StageCurves};
pub use gradcheck::{finite_difference_check, GradCheck};
pub use toy::{tokenize, ItemEval, ToyItem, ToyModel, ToyModelConfig};
pub use train::{hard_pool_from, run_toy_training, ToyRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid harness configuration: {0}")]
    InvalidConfig(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("record {index} ({image_id}): {reason}")]
    InvalidRecord {
        index: usize,
        image_id: String,
        reason: String,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}, item {item}: {detail}")]
    NonFinite {
        epoch: u32,
        batch: usize,
        item: String,
        detail: String,
    },
    #[error("domain {0} has a pool but no loss curves")]
    MissingDomain(String),
    #[error("finite-difference check: {0}")]
    GradCheck(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Training-loop settings for the toy harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Items per batch. 32 at toy scale.
    pub batch_size: usize,
    pub epochs: u32,
    /// Plain gradient-descent step size.
    pub step_size: f64,
    pub seed: u64,
    pub model: ToyModelConfig,
    pub objectives: ObjectiveConfig,
    /// Hard-stage rationale selection: number of same-domain rationales
    /// scored per Hard item, 0 to disable.
    pub hard_rationale_candidates: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 40,
            step_size: 0.5,
            seed: 0,
            model: ToyModelConfig::default(),
            objectives: ObjectiveConfig::default(),
            hard_rationale_candidates: 0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(HarnessError::InvalidConfig("step_size must be finite and > 0".into()));
        }
        self.objectives
            .weights
            .validate()
            .map_err(HarnessError::InvalidConfig)?;
        self.model.validate()
    }
}
