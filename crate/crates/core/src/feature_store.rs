//! JSONL datasets of precomputed feature vectors.
//!
//! One sample per line: `{"id": "...", "features": [..], "label": "..."}`.
//! The first sample fixes the dimension; `label` is optional and only present
//! in datasets meant for simulation. An optional `thumbnail_url` is carried
//! through for annotation front ends.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f32>,
    #[serde(rename = "label", default, skip_serializing_if = "Option::is_none")]
    pub truth_label: Option<String>,
    /// Display hint for annotators; not used by the models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
}

/// An immutable, validated collection of samples sharing one dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    samples: Vec<Sample>,
    dim: usize,
    classes: BTreeSet<String>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Dataset("dataset has no samples".into()))?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::Dataset(format!(
                "sample `{}` has an empty feature vector",
                first.id
            )));
        }
        let mut index = HashMap::with_capacity(samples.len());
        let mut classes = BTreeSet::new();
        for (pos, sample) in samples.iter().enumerate() {
            validate_sample(sample, dim)?;
            if index.insert(sample.id.clone(), pos).is_some() {
                return Err(Error::Dataset(format!("duplicate id `{}`", sample.id)));
            }
            if let Some(label) = &sample.truth_label {
                classes.insert(label.clone());
            }
        }
        Ok(Self {
            name: name.into(),
            samples,
            dim,
            classes,
            index,
        })
    }

    /// Loads a JSONL file; the dataset is named after the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::from_reader(name, File::open(path)?)
    }

    pub fn from_reader(name: impl Into<String>, reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut samples = Vec::new();
        let mut dim = None;
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let sample = parse_line(&line, line_no)?;
            let expected = *dim.get_or_insert(sample.features.len());
            validate_sample(&sample, expected)?;
            samples.push(sample);
        }
        Self::new(name, samples)
    }

    pub fn write_jsonl(&self, writer: impl Write) -> Result<()> {
        let mut writer = BufWriter::new(writer);
        for sample in &self.samples {
            serde_json::to_writer(&mut writer, sample)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &BTreeSet<String> {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.index.get(id).map(|&pos| &self.samples[pos])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// True when every sample carries a ground-truth label.
    pub fn is_fully_labelled(&self) -> bool {
        self.samples.iter().all(|s| s.truth_label.is_some())
    }

    /// A seeded permutation of all ids (Fisher-Yates over file order).
    pub fn shuffled_ids(&self, seed: u64) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.iter().map(|s| s.id.clone()).collect();
        SplitMix64::new(seed).shuffle(&mut ids);
        ids
    }

    /// SHA-256 over ids and the little-endian bytes of every feature.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for sample in &self.samples {
            hasher.update((sample.id.len() as u64).to_le_bytes());
            hasher.update(sample.id.as_bytes());
            for value in &sample.features {
                hasher.update(value.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<Sample> {
    serde_json::from_str::<Sample>(line).map_err(|err| {
        // JSON has no NaN/Infinity literals; report them as what they are.
        if ["NaN", "Infinity"].iter().any(|tok| line.contains(tok)) {
            Error::Dataset(format!("line {line_no}: non-finite feature value"))
        } else if err.to_string().starts_with("number out of range") {
            Error::Dataset(format!("line {line_no}: feature value outside the f32 range"))
        } else {
            Error::Parse {
                line: line_no,
                message: err.to_string(),
            }
        }
    })
}

fn validate_sample(sample: &Sample, dim: usize) -> Result<()> {
    if sample.id.trim().is_empty() {
        return Err(Error::Dataset("sample with an empty id".into()));
    }
    if sample.features.len() != dim {
        return Err(Error::Dataset(format!(
            "sample `{}` has {} features, expected {dim}",
            sample.id,
            sample.features.len()
        )));
    }
    if let Some(pos) = sample.features.iter().position(|v| !v.is_finite()) {
        return Err(Error::Dataset(format!(
            "sample `{}` has a non-finite feature at index {pos}",
            sample.id
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<Dataset> {
        Dataset::from_reader("t", text.as_bytes())
    }

    #[test]
    fn loads_three_samples() {
        let ds = load_str(concat!(
            r#"{"id":"x","features":[1,2,3,4],"label":"a"}"#,
            "\n",
            r#"{"id":"y","features":[0.5,0,0,1],"label":"a"}"#,
            "\n",
            r#"{"id":"z","features":[-1,2,3,4e-3],"label":"b"}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.len(), 3);
        assert_eq!(
            ds.classes().iter().map(String::as_str).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert_eq!(ds.samples()[1].id, "y");
        assert!(ds.is_fully_labelled());
    }

    #[test]
    fn dimension_mismatch_names_the_id() {
        let err = load_str(concat!(
            r#"{"id":"x","features":[1,2,3,4]}"#,
            "\n",
            r#"{"id":"short","features":[1,2,3]}"#
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Dataset(msg) if msg.contains("`short`")), "{err}");
    }

    #[test]
    fn nan_token_is_a_validation_error() {
        let err = load_str(r#"{"id":"x","features":[1,NaN]}"#).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)), "{err}");
    }

    #[test]
    fn overflowing_value_is_rejected() {
        let err = load_str(r#"{"id":"x","features":[1,1e39]}"#).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_str(concat!(
            r#"{"id":"x","features":[1,2]}"#,
            "\n",
            r#"{"id":"y","features":[1,2"#
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = load_str(concat!(
            r#"{"id":"x","features":[1]}"#,
            "\n",
            r#"{"id":"x","features":[2]}"#
        ))
        .unwrap_err();
        assert!(matches!(&err, Error::Dataset(m) if m.contains("duplicate")));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(load_str("").is_err());
        assert!(load_str(r#"{"id":"x","features":[]}"#).is_err());
        assert!(load_str(r#"{"id":" ","features":[1]}"#).is_err());
    }

    #[test]
    fn thumbnail_urls_round_trip() {
        let ds = load_str(r#"{"id":"x","features":[1],"thumbnail_url":"http://img/x.png"}"#).unwrap();
        assert_eq!(ds.get("x").unwrap().thumbnail_url.as_deref(), Some("http://img/x.png"));
        let mut out = Vec::new();
        ds.write_jsonl(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains(r#""thumbnail_url":"http://img/x.png""#));
    }

    #[test]
    fn unlabelled_dataset_has_no_classes() {
        let ds = load_str(r#"{"id":"x","features":[1]}"#).unwrap();
        assert!(ds.classes().is_empty());
        assert!(!ds.is_fully_labelled());
    }

    #[test]
    fn shuffle_is_deterministic() {
        let ds = load_str(concat!(
            r#"{"id":"x","features":[1]}"#,
            "\n",
            r#"{"id":"y","features":[1]}"#,
            "\n",
            r#"{"id":"z","features":[1]}"#
        ))
        .unwrap();
        assert_eq!(ds.shuffled_ids(7), ds.shuffled_ids(7));
    }
}
