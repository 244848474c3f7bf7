use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{SessionConfig, SortDirection};
use crate::error::{Error, Result};

/// A model mistake together with the user's correct label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub sample_id: String,
    pub predicted_class: String,
    pub predicted_confidence: f64,
    pub correct_class: String,
}

/// Buffer positions chosen for retraining, grouped by correct class.
pub(crate) fn select_indices(
    buffer: &[BufferEntry],
    direction: SortDirection,
    per_class: usize,
) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, entry) in buffer.iter().enumerate() {
        groups.entry(entry.correct_class.clone()).or_default().push(i);
    }
    for indices in groups.values_mut() {
        // Stable: equal confidences keep insertion order.
        indices.sort_by(|&a, &b| {
            let (ca, cb) = (buffer[a].predicted_confidence, buffer[b].predicted_confidence);
            match direction {
                SortDirection::HighToLow => cb.total_cmp(&ca),
                SortDirection::LowToHigh => ca.total_cmp(&cb),
            }
        });
        indices.truncate(per_class);
    }
    groups
}

/// Groups mistakes by correct class, orders each group by confidence and
/// keeps the first `select_per_class` of each.
pub fn select_from_buffer(
    buffer: &[BufferEntry],
    config: &SessionConfig,
) -> Result<BTreeMap<String, Vec<BufferEntry>>> {
    if buffer.is_empty() {
        return Err(Error::Argument("cannot select from an empty buffer".into()));
    }
    Ok(select_indices(buffer, config.sort_direction, config.select_per_class)
        .into_iter()
        .map(|(class, idx)| (class, idx.into_iter().map(|i| buffer[i].clone()).collect()))
        .collect())
}
