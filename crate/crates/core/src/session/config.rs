use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SortDirection {
    #[default]
    HighToLow,
    LowToHigh,
}

impl SortDirection {
    pub fn reversed(self) -> Self {
        match self {
            SortDirection::HighToLow => SortDirection::LowToHigh,
            SortDirection::LowToHigh => SortDirection::HighToLow,
        }
    }
}

/// How training and session durations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Wall time from a monotonic clock.
    #[default]
    Monotonic,
    /// Durations derived from work counters, so reports replay byte-for-byte.
    /// See [`LOGICAL_SECONDS_PER_TRAIN_EXAMPLE`] and [`LOGICAL_SECONDS_PER_INFERENCE`].
    Logical,
}

/// Logical cost of one example forward+backward pass through one head.
pub const LOGICAL_SECONDS_PER_TRAIN_EXAMPLE: f64 = 3e-6;
/// Logical cost of one forward pass through one head.
pub const LOGICAL_SECONDS_PER_INFERENCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub bootstrap_size: usize,
    pub batch_size: usize,
    pub mistake_threshold: usize,
    pub buffer_per_class: usize,
    pub select_per_class: usize,
    pub balancing: bool,
    pub sort_direction: SortDirection,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub timing: TimingMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            bootstrap_size: 30,
            batch_size: 30,
            mistake_threshold: 15,
            buffer_per_class: 20,
            select_per_class: 10,
            balancing: false,
            sort_direction: SortDirection::HighToLow,
            train_config: TrainConfig::default(),
            seed: 0,
            timing: TimingMode::Monotonic,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bootstrap_size", self.bootstrap_size),
            ("batch_size", self.batch_size),
            ("mistake_threshold", self.mistake_threshold),
            ("buffer_per_class", self.buffer_per_class),
            ("select_per_class", self.select_per_class),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.mistake_threshold >= self.batch_size {
            return Err(Error::config(
                "mistake_threshold",
                format!("must be below batch_size ({})", self.batch_size),
            ));
        }
        if self.select_per_class > self.buffer_per_class {
            return Err(Error::config(
                "select_per_class",
                format!("must not exceed buffer_per_class ({})", self.buffer_per_class),
            ));
        }
        self.train_config.validate()
    }
}
