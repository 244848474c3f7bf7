use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use binlabel_core::session::{SortDirection, TimingMode};
use binlabel_core::SessionConfig;
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    HighToLow,
    LowToHigh,
}

impl From<Direction> for SortDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::HighToLow => SortDirection::HighToLow,
            Direction::LowToHigh => SortDirection::LowToHigh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Timing {
    Monotonic,
    Logical,
}

impl From<Timing> for TimingMode {
    fn from(t: Timing) -> Self {
        match t {
            Timing::Monotonic => TimingMode::Monotonic,
            Timing::Logical => TimingMode::Logical,
        }
    }
}

/// Session configuration: an optional JSON or TOML file, then flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Session config file (.json or .toml). Flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Samples labelled by hand in each bootstrap round.
    #[arg(long)]
    pub bootstrap_size: Option<usize>,
    /// Samples pre-labelled per bulk-edit batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Re-bootstrap when a batch has more mistakes than this.
    #[arg(long)]
    pub mistake_threshold: Option<usize>,
    /// Buffer capacity per live class.
    #[arg(long)]
    pub buffer_per_class: Option<usize>,
    /// Buffer entries used per class when the buffer fills.
    #[arg(long)]
    pub select_per_class: Option<usize>,
    /// Oversample the minority side of each head's training set.
    #[arg(long, value_name = "BOOL")]
    pub balancing: Option<bool>,
    /// Which end of the confidence order the buffer selection takes.
    #[arg(long, value_enum)]
    pub sort_direction: Option<Direction>,
    /// SGD mini-batch size.
    #[arg(long)]
    pub train_batch_size: Option<usize>,
    /// SGD passes per training event.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Base seed for the per-epoch shuffles.
    #[arg(long)]
    pub train_seed: Option<u64>,
    /// Session seed: pool order, model init and balancing jitter.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clock used for the reported durations. `logical` makes reports reproducible.
    #[arg(long, value_enum)]
    pub timing: Option<Timing>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<SessionConfig> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => SessionConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(value) = self.$flag { config.$($field).+ = value.into(); })*
            };
        }
        set! {
            bootstrap_size => bootstrap_size,
            batch_size => batch_size,
            mistake_threshold => mistake_threshold,
            buffer_per_class => buffer_per_class,
            select_per_class => select_per_class,
            balancing => balancing,
            sort_direction => sort_direction,
            train_batch_size => train_config.batch_size,
            epochs => train_config.epochs,
            learning_rate => train_config.learning_rate,
            train_seed => train_config.seed,
            seed => seed,
            timing => timing,
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn load_config(path: &Path) -> Result<SessionConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        _ => bail!("{}: config files must end in .json or .toml", path.display()),
    };
    Ok(config)
}

/// Relative paths resolve against `data_dir` when one is set.
pub fn resolve_data_path(path: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "batch_size = 20\nseed = 4\n[train_config]\nepochs = 3\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            seed: Some(9),
            sort_direction: Some(Direction::LowToHigh),
            learning_rate: Some(0.5),
            ..ConfigArgs::default()
        };
        let config = args.resolve().unwrap();
        assert_eq!(config.batch_size, 20);
        assert_eq!(config.seed, 9);
        assert_eq!(config.train_config.epochs, 3);
        assert_eq!(config.train_config.learning_rate, 0.5);
        assert_eq!(config.sort_direction, SortDirection::LowToHigh);
        assert_eq!(config.bootstrap_size, 30);
    }

    #[test]
    fn invalid_overrides_fail() {
        let args = ConfigArgs {
            batch_size: Some(0),
            ..ConfigArgs::default()
        };
        assert!(args.resolve().is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.yaml");
        fs::write(&path, "").unwrap();
        assert!(load_config(&path).is_err());
    }
}
