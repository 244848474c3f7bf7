use serde::{Deserialize, Serialize};
use tracing::warn;

use super::BinaryExample;
use crate::rng::SplitMix64;

/// Jitter standard deviation, as a fraction of the minority set's
/// per-component standard deviation.
pub const JITTER_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceWarning {
    /// Only one target value was present; nothing was synthesized.
    SingleClass { target: u8 },
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub examples: Vec<BinaryExample>,
    pub synthesized: usize,
    pub warning: Option<BalanceWarning>,
}

/// Oversamples the minority target until positives and negatives are equal.
///
/// Originals are kept in order; synthesized examples are appended. Each one
/// copies a uniformly drawn minority example and adds independent Gaussian
/// noise per component with standard deviation `JITTER_SCALE * std_k`, where
/// `std_k` is the population standard deviation of component `k` over the
/// minority set.
pub fn balance(data: &[BinaryExample], seed: u64) -> Balanced {
    let positives: Vec<&BinaryExample> = data.iter().filter(|e| e.is_positive()).collect();
    let negatives: Vec<&BinaryExample> = data.iter().filter(|e| !e.is_positive()).collect();

    let warning = match (positives.is_empty(), negatives.is_empty()) {
        (true, true) => Some(BalanceWarning::Empty),
        (false, true) => Some(BalanceWarning::SingleClass { target: 1 }),
        (true, false) => Some(BalanceWarning::SingleClass { target: 0 }),
        (false, false) => None,
    };
    if let Some(w) = warning {
        warn!(?w, "balancing skipped");
        return Balanced {
            examples: data.to_vec(),
            synthesized: 0,
            warning,
        };
    }

    let needed = positives.len().abs_diff(negatives.len());
    let minority = if positives.len() < negatives.len() {
        positives
    } else {
        negatives
    };

    let sigma: Vec<f64> = component_std(&minority)
        .into_iter()
        .map(|s| JITTER_SCALE * s)
        .collect();
    let mut rng = SplitMix64::new(seed);
    let mut examples = Vec::with_capacity(data.len() + needed);
    examples.extend_from_slice(data);
    for _ in 0..needed {
        let source = minority[rng.below(minority.len())];
        let features = source
            .features
            .iter()
            .zip(&sigma)
            .map(|(&x, &s)| {
                let noise = rng.standard_normal();
                (f64::from(x) + s * noise) as f32
            })
            .collect();
        examples.push(BinaryExample {
            features,
            target: source.target,
        });
    }
    Balanced {
        examples,
        synthesized: needed,
        warning: None,
    }
}

fn component_std(set: &[&BinaryExample]) -> Vec<f64> {
    let dim = set[0].features.len();
    let n = set.len() as f64;
    let mut mean = vec![0.0; dim];
    for e in set {
        for (m, &x) in mean.iter_mut().zip(&e.features) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for e in set {
        for ((v, &x), m) in var.iter_mut().zip(&e.features).zip(&mean) {
            *v += (f64::from(x) - m).powi(2);
        }
    }
    var.into_iter().map(|v| (v / n).sqrt()).collect()
}
