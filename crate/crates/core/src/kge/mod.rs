//! Knowledge-graph embedding: the translational baseline, the convolutional
//! triple likelihood, their losses, gradient training and a finite-difference
//! gradient checker.

mod conv;
mod gradcheck;
mod train;
mod transe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::Triple;

pub use conv::{bpr_kge_loss, conv_likelihood, KgeModel, ParamLayout};
pub use gradcheck::{grad_check, GradCheckReport};
pub use train::{train_kge, train_kge_from, TrainReport};
pub use transe::{train_transe, transe_margin_loss, transe_score};

/// Distance used by the translational score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            _ => Err(Error::Config(format!("unknown norm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeConfig {
    /// Hinge margin of the translational loss.
    pub margin: f64,
    pub norm: Norm,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Number of convolution kernels `m`.
    pub num_kernels: usize,
    /// Kernel width along the embedding axis.
    pub kernel_width: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Shuffle positive/negative pairs every epoch.
    pub shuffle: bool,
    /// Update token vectors together with the scorer parameters.
    pub update_embeddings: bool,
}

impl Default for KgeConfig {
    fn default() -> Self {
        KgeConfig {
            margin: 1.0,
            norm: Norm::L2,
            learning_rate: 0.05,
            epochs: 50,
            num_kernels: 4,
            kernel_width: 3,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Sgd,
            shuffle: true,
            update_embeddings: true,
        }
    }
}

impl KgeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be a nonnegative finite number");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a nonnegative finite number");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.num_kernels == 0 {
            return bad("at least one kernel is required");
        }
        if self.kernel_width == 0 {
            return bad("kernel width must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

/// Anything that assigns a plausibility (higher is better) to a triple.
pub trait TripleScorer {
    fn likelihood(&self, t: &Triple) -> f64;
}

impl<F> TripleScorer for F
where
    F: Fn(&Triple) -> f64,
{
    fn likelihood(&self, t: &Triple) -> f64 {
        self(t)
    }
}
