//! Independent oracles for integration and acceptance tests. Nothing here
//! calls the implementation paths it is used to check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use binlabel_core::classifier::{BinaryExample, Gradients, ModelParams, HIDDEN_UNITS};
use binlabel_core::{Dataset, Sample};

/// SplitMix64 written out from its published definition.
pub struct RefSplitMix(pub u64);

impl RefSplitMix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / 9007199254740992.0
    }

    pub fn gauss(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Fisher-Yates from the last index down, j = floor(u64 * (i+1) / 2^64).
pub fn ref_shuffle(ids: &[&str], seed: u64) -> Vec<String> {
    let mut out: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let mut rng = RefSplitMix(seed);
    let mut i = out.len();
    while i > 1 {
        i -= 1;
        let j = ((rng.next() as u128 * (i as u128 + 1)) >> 64) as usize;
        out.swap(i, j);
    }
    out
}

/// A plain f64 copy of a head, parameters flattened as w1, b1, w2, b2.
pub struct RefNet {
    pub dim: usize,
    pub theta: Vec<f64>,
}

impl RefNet {
    pub fn from_params(p: &ModelParams) -> Self {
        let mut theta: Vec<f64> = Vec::new();
        theta.extend(p.w1.iter().map(|&v| v as f64));
        theta.extend(p.b1.iter().map(|&v| v as f64));
        theta.extend(p.w2.iter().map(|&v| v as f64));
        theta.push(p.b2 as f64);
        Self { dim: p.dim, theta }
    }

    fn hidden_pre(theta: &[f64], dim: usize, x: &[f32]) -> Vec<f64> {
        let b1 = &theta[dim * HIDDEN_UNITS..dim * HIDDEN_UNITS + HIDDEN_UNITS];
        (0..HIDDEN_UNITS)
            .map(|j| {
                let mut z = b1[j];
                for i in 0..dim {
                    z += theta[i * HIDDEN_UNITS + j] * x[i] as f64;
                }
                z
            })
            .collect()
    }

    pub fn loss_at(theta: &[f64], dim: usize, batch: &[BinaryExample]) -> f64 {
        let w2_off = dim * HIDDEN_UNITS + HIDDEN_UNITS;
        let b2 = theta[w2_off + HIDDEN_UNITS];
        let mut total = 0.0;
        for e in batch {
            let z1 = Self::hidden_pre(theta, dim, &e.features);
            let mut logit = b2;
            for j in 0..HIDDEN_UNITS {
                if z1[j] > 0.0 {
                    logit += theta[w2_off + j] * z1[j];
                }
            }
            // Clamping p to [c, 1-c] is clamping the logit to +-ln((1-c)/c).
            // Softplus keeps ln(1-p) accurate when p is close to 1.
            let limit = ((1.0 - 1e-7) / 1e-7f64).ln();
            let logit = logit.clamp(-limit, limit);
            let softplus = |v: f64| v.max(0.0) + (-v.abs()).exp().ln_1p();
            total += if e.target == 1 { softplus(-logit) } else { softplus(logit) };
        }
        total / batch.len() as f64
    }

    pub fn min_abs_preactivation(&self, batch: &[BinaryExample]) -> f64 {
        batch
            .iter()
            .flat_map(|e| Self::hidden_pre(&self.theta, self.dim, &e.features))
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn central_differences(&self, batch: &[BinaryExample], eps: f64) -> Vec<f64> {
        let mut theta = self.theta.clone();
        (0..theta.len())
            .map(|k| {
                let orig = theta[k];
                theta[k] = orig + eps;
                let up = Self::loss_at(&theta, self.dim, batch);
                theta[k] = orig - eps;
                let down = Self::loss_at(&theta, self.dim, batch);
                theta[k] = orig;
                (up - down) / (2.0 * eps)
            })
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct GradientCheck {
    pub compared: usize,
    pub worst_relative_error: f64,
}

/// Compares analytic gradients with central differences; components where
/// both magnitudes are at most `floor` are skipped.
pub fn compare_gradients(analytic: &Gradients, numeric: &[f64], floor: f64) -> GradientCheck {
    let analytic = analytic.flatten();
    assert_eq!(analytic.len(), numeric.len());
    let mut check = GradientCheck::default();
    for (a, n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale <= floor {
            continue;
        }
        check.compared += 1;
        check.worst_relative_error = check.worst_relative_error.max((a - n).abs() / scale);
    }
    check
}

/// A random head away from ReLU kinks, with a batch of `batch_len` examples.
pub fn random_net(dim: usize, batch_len: usize, seed: u64) -> (ModelParams, Vec<BinaryExample>) {
    let mut rng = RefSplitMix(seed);
    loop {
        let mut p = ModelParams::zeroed("probe", dim);
        for w in p.w1.iter_mut() {
            *w = (rng.gauss() * 0.5) as f32;
        }
        for b in p.b1.iter_mut() {
            *b = (rng.gauss() * 0.3) as f32;
        }
        for w in p.w2.iter_mut() {
            *w = (rng.gauss() * 0.5) as f32;
        }
        p.b2 = (rng.gauss() * 0.3) as f32;
        let batch: Vec<BinaryExample> = (0..batch_len)
            .map(|_| BinaryExample {
                features: (0..dim).map(|_| rng.gauss() as f32).collect(),
                target: (rng.next() & 1) as u8,
            })
            .collect();
        // Keep finite differences away from the ReLU kink.
        if RefNet::from_params(&p).min_abs_preactivation(&batch) > 1e-3 {
            return (p, batch);
        }
    }
}

/// Accuracy of assigning each sample to the nearest empirical class centroid.
pub fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for s in ds.samples() {
        let label = s.truth_label.as_deref().unwrap();
        let entry = sums.entry(label).or_insert_with(|| (vec![0.0; ds.dim()], 0));
        for (acc, &x) in entry.0.iter_mut().zip(&s.features) {
            *acc += x as f64;
        }
        entry.1 += 1;
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let correct = ds
        .samples()
        .iter()
        .filter(|s| {
            let nearest = centroids
                .iter()
                .map(|(k, c)| {
                    let d: f64 = c.iter().zip(&s.features).map(|(a, &b)| (a - b as f64).powi(2)).sum();
                    (d, *k)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap()
                .1;
            Some(nearest) == s.truth_label.as_deref()
        })
        .count();
    correct as f64 / ds.len() as f64
}

/// Two-class set where `minority` keeps only one in ten of its samples
/// relative to the other class (1:9 positive:negative for that class).
pub fn skewed_dataset(base: &Dataset, minority: &str, keep: usize) -> Dataset {
    let mut kept = 0;
    let samples: Vec<Sample> = base
        .samples()
        .iter()
        .filter(|s| {
            if s.truth_label.as_deref() == Some(minority) {
                kept += 1;
                kept <= keep
            } else {
                true
            }
        })
        .cloned()
        .collect();
    Dataset::new(format!("{}-skewed", base.name()), samples).unwrap()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
