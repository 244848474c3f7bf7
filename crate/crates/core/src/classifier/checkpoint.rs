//! Portable single-model checkpoints.
//!
//! JSON object, keys in this order: `format`, `version`, `class_label`,
//! `dim`, `hidden`, `train_count`, `param_version`, `w1`, `b1`, `w2`, `b2`.
//! Parameter arrays are base64 (standard alphabet, padded) of little-endian
//! IEEE-754 `f32`; `w1` is input-major. See `docs/formats.md`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ModelParams, HIDDEN_UNITS};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "binlabel-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub class_label: String,
    pub dim: usize,
    pub hidden: usize,
    pub train_count: u64,
    pub param_version: u64,
    pub w1: String,
    pub b1: String,
    pub w2: String,
    pub b2: String,
}

fn encode(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(field: &str, text: &str, expected: usize) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("{field}: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Checkpoint(format!(
            "{field}: expected {expected} floats, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl From<&ModelParams> for Checkpoint {
    fn from(p: &ModelParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            class_label: p.class_label.clone(),
            dim: p.dim,
            hidden: HIDDEN_UNITS,
            train_count: p.train_count,
            param_version: p.version,
            w1: encode(&p.w1),
            b1: encode(&p.b1),
            w2: encode(&p.w2),
            b2: encode(&[p.b2]),
        }
    }
}

impl TryFrom<&Checkpoint> for ModelParams {
    type Error = Error;

    fn try_from(c: &Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.hidden != HIDDEN_UNITS || c.dim == 0 {
            return Err(Error::Checkpoint(format!(
                "unsupported shape dim={} hidden={}",
                c.dim, c.hidden
            )));
        }
        let params = ModelParams {
            class_label: c.class_label.clone(),
            dim: c.dim,
            w1: decode("w1", &c.w1, c.dim * HIDDEN_UNITS)?,
            b1: decode("b1", &c.b1, HIDDEN_UNITS)?,
            w2: decode("w2", &c.w2, HIDDEN_UNITS)?,
            b2: decode("b2", &c.b2, 1)?[0],
            train_count: c.train_count,
            version: c.param_version,
        };
        if !params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(params)
    }
}

impl ModelParams {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint::from(self))?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let checkpoint: Checkpoint = serde_json::from_str(text)?;
        ModelParams::try_from(&checkpoint)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint_json()? + "\n")?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_json(&fs::read_to_string(path)?)
    }
}
