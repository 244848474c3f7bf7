use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BinaryExample, ModelParams};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 20,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train_config.batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train_config.epochs", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(
                "train_config.learning_rate",
                "must be a finite non-negative number",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub duration: Duration,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
    /// Example-level forward/backward passes performed.
    pub examples_processed: u64,
    /// SGD updates applied.
    pub steps: u64,
}

/// Runs `config.epochs` passes of mini-batch SGD over `data`, in place.
///
/// Epoch `e` visits `data` in the order given by a Fisher-Yates shuffle
/// seeded with `config.seed + e`. A zero learning rate is accepted and
/// leaves the weights untouched.
pub fn train(
    params: &mut ModelParams,
    data: &[BinaryExample],
    config: &TrainConfig,
) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(Error::Argument(format!(
            "cannot train `{}` on an empty dataset",
            params.class_label
        )));
    }
    config.validate()?;
    let started = Instant::now();
    let initial_loss = params.loss(data)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut steps = 0;
    for epoch in 0..config.epochs {
        order.sort_unstable();
        SplitMix64::new(config.seed.wrapping_add(epoch as u64)).shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let grads = params.gradient_unchecked(chunk.iter().map(|&i| &data[i]));
            params.apply_step(&grads, config.learning_rate);
            steps += 1;
        }
    }

    let final_loss = params.loss(data)?;
    params.train_count += 1;
    params.version += 1;
    Ok(TrainStats {
        duration: started.elapsed(),
        initial_loss,
        final_loss,
        epochs_run: config.epochs,
        examples_processed: (data.len() * config.epochs) as u64,
        steps,
    })
}
