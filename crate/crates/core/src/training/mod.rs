//! Loss assembly, AdaDelta optimization, the epoch loop, model selection
//! and domain adaptation.

mod adadelta;
mod adapt;
mod loss;
mod select;
mod trainer;

pub use adadelta::OptimizerState;
pub use adapt::adapt_parameters;
pub use loss::{
    alignment_cost_ce, alignment_cost_mse, alignment_cost_graph, combined_loss, pair_loss_graph,
    Divergence, LossBreakdown, PairLossNodes,
};
pub use select::select_model;
pub use trainer::{
    evaluate_decoder_cost, fresh_checkpoint, train, Checkpoint, CheckpointSink, DirSink,
    TrainLogEntry, TrainSet, VecSink,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the combined loss `H = w1 * G + w2 * H_D` and the per-epoch
/// decay applied to the alignment weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Alignment cost weight.
    pub w1: f64,
    /// Decoder cost weight.
    pub w2: f64,
    /// Multiplied into w1 after every epoch; 1.0 disables the schedule.
    pub decay_factor: f64,
    pub divergence: Divergence,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w1: 1.0, w2: 1.0, decay_factor: 1.0, divergence: Divergence::CrossEntropy }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.w1 == 0.0 && self.w2 == 0.0 {
            return Err(Error::Config("w1 and w2 must not both be zero".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Checkpoint every this many batches (a final checkpoint is always
    /// written).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Guided mode: every pair must carry an alignment matrix.
    pub guided: bool,
    /// Topic mode: every pair must carry a topic vector.
    pub topic: bool,
    pub adadelta_rho: f64,
    pub adadelta_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            max_epochs: 10,
            checkpoint_every: 1000,
            seed: 1,
            weights: LossWeights::default(),
            guided: false,
            topic: false,
            adadelta_rho: 0.95,
            adadelta_epsilon: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        self.weights.validate()
    }
}
