//! One binary head per class: `D -> 50 (ReLU) -> 1 (sigmoid)`, trained with
//! plain mini-batch SGD on binary cross-entropy.

mod balance;
mod checkpoint;
mod model;
mod train;

pub use balance::{balance, BalanceWarning, Balanced};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{init_model, sigmoid, Gradients, ModelParams, HIDDEN_UNITS, PROB_CLAMP};
pub use train::{train, TrainConfig, TrainStats};

use serde::{Deserialize, Serialize};

use crate::feature_store::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryExample {
    pub features: Vec<f32>,
    pub target: u8,
}

impl BinaryExample {
    pub fn new(features: Vec<f32>, positive: bool) -> Self {
        Self {
            features,
            target: u8::from(positive),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.target == 1
    }
}

/// Relabels a multi-class pool as positives (`target_class`) vs. the rest.
pub fn prepare_binary_dataset(
    labelled: &[(&Sample, &str)],
    target_class: &str,
) -> Vec<BinaryExample> {
    labelled
        .iter()
        .map(|(sample, label)| BinaryExample::new(sample.features.clone(), *label == target_class))
        .collect()
}
