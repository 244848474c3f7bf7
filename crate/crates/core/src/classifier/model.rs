use serde::{Deserialize, Serialize};

use super::BinaryExample;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const HIDDEN_UNITS: usize = 50;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Weights of one binary head.
///
/// `w1` is stored input-major: the weight from input `i` to hidden unit `j`
/// lives at `w1[i * HIDDEN_UNITS + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub class_label: String,
    pub dim: usize,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: f32,
    pub train_count: u64,
    pub version: u64,
}

/// Parameter-shaped gradients, accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(dim: usize) -> Self {
        Self {
            w1: vec![0.0; dim * HIDDEN_UNITS],
            b1: vec![0.0; HIDDEN_UNITS],
            w2: vec![0.0; HIDDEN_UNITS],
            b2: 0.0,
        }
    }

    /// All components flattened in checkpoint order: w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + 2 * HIDDEN_UNITS + 1);
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(class_label: impl Into<String>, dim: usize, seed: u64) -> Result<ModelParams> {
    if dim == 0 {
        return Err(Error::Argument("model input dimension must be positive".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let hidden_limit = (6.0 / (dim + HIDDEN_UNITS) as f64).sqrt();
    let output_limit = (6.0 / (HIDDEN_UNITS + 1) as f64).sqrt();
    let w1 = (0..dim * HIDDEN_UNITS)
        .map(|_| rng.symmetric(hidden_limit) as f32)
        .collect();
    let w2 = (0..HIDDEN_UNITS)
        .map(|_| rng.symmetric(output_limit) as f32)
        .collect();
    Ok(ModelParams {
        class_label: class_label.into(),
        dim,
        w1,
        b1: vec![0.0; HIDDEN_UNITS],
        w2,
        b2: 0.0,
        train_count: 0,
        version: 0,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamped_bce(p: f64, target: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if target == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

impl ModelParams {
    /// A model with every parameter zero (outputs 0.5 everywhere).
    pub fn zeroed(class_label: impl Into<String>, dim: usize) -> Self {
        Self {
            class_label: class_label.into(),
            dim,
            w1: vec![0.0; dim * HIDDEN_UNITS],
            b1: vec![0.0; HIDDEN_UNITS],
            w2: vec![0.0; HIDDEN_UNITS],
            b2: 0.0,
            train_count: 0,
            version: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite()
            && self
                .w1
                .iter()
                .chain(&self.b1)
                .chain(&self.w2)
                .all(|v| v.is_finite())
    }

    pub fn is_consistent(&self) -> bool {
        self.dim > 0
            && self.w1.len() == self.dim * HIDDEN_UNITS
            && self.b1.len() == HIDDEN_UNITS
            && self.w2.len() == HIDDEN_UNITS
    }

    fn check_input(&self, features: &[f32]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::Argument(format!(
                "model `{}` expects {} features, got {}",
                self.class_label,
                self.dim,
                features.len()
            )));
        }
        Ok(())
    }

    fn hidden_preactivations(&self, x: &[f32], z1: &mut [f64; HIDDEN_UNITS]) {
        for (z, &b) in z1.iter_mut().zip(&self.b1) {
            *z = f64::from(b);
        }
        for (&xi, row) in x.iter().zip(self.w1.chunks_exact(HIDDEN_UNITS)) {
            let xi = f64::from(xi);
            if xi == 0.0 {
                continue;
            }
            for (z, &w) in z1.iter_mut().zip(row) {
                *z += xi * f64::from(w);
            }
        }
    }

    fn output_logit(&self, z1: &[f64; HIDDEN_UNITS]) -> f64 {
        f64::from(self.b2)
            + z1
                .iter()
                .zip(&self.w2)
                .map(|(&z, &w)| z.max(0.0) * f64::from(w))
                .sum::<f64>()
    }

    /// Confidence that `features` belong to this head's class.
    pub fn forward(&self, features: &[f32]) -> Result<f64> {
        self.check_input(features)?;
        Ok(self.forward_unchecked(features))
    }

    pub(crate) fn forward_unchecked(&self, features: &[f32]) -> f64 {
        let mut z1 = [0.0; HIDDEN_UNITS];
        self.hidden_preactivations(features, &mut z1);
        sigmoid(self.output_logit(&z1))
    }

    /// Mean clamped binary cross-entropy over `batch`.
    pub fn loss(&self, batch: &[BinaryExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("loss over an empty batch".into()));
        }
        let mut total = 0.0;
        for example in batch {
            self.check_input(&example.features)?;
            total += clamped_bce(self.forward_unchecked(&example.features), example.target);
        }
        Ok(total / batch.len() as f64)
    }

    /// Exact gradient of [`ModelParams::loss`] with respect to every parameter.
    pub fn gradient(&self, batch: &[BinaryExample]) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::Argument("gradient of an empty batch".into()));
        }
        for example in batch {
            self.check_input(&example.features)?;
        }
        Ok(self.gradient_unchecked(batch.iter()))
    }

    /// Same as [`ModelParams::gradient`] without dimension checks.
    pub(crate) fn gradient_unchecked<'a>(
        &self,
        batch: impl ExactSizeIterator<Item = &'a BinaryExample>,
    ) -> Gradients {
        let mut grads = Gradients::zeros(self.dim);
        let scale = 1.0 / batch.len() as f64;
        let mut z1 = [0.0; HIDDEN_UNITS];
        for example in batch {
            self.hidden_preactivations(&example.features, &mut z1);
            let p = sigmoid(self.output_logit(&z1));
            // d(loss)/d(logit) is p - y inside the clamp and zero where it saturates.
            let dz2 = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                (p - f64::from(example.target)) * scale
            } else {
                0.0
            };
            if dz2 == 0.0 {
                continue;
            }
            grads.b2 += dz2;
            let mut dz1 = [0.0; HIDDEN_UNITS];
            for j in 0..HIDDEN_UNITS {
                if z1[j] > 0.0 {
                    grads.w2[j] += dz2 * z1[j];
                    dz1[j] = dz2 * f64::from(self.w2[j]);
                    grads.b1[j] += dz1[j];
                }
            }
            for (&xi, row) in example
                .features
                .iter()
                .zip(grads.w1.chunks_exact_mut(HIDDEN_UNITS))
            {
                let xi = f64::from(xi);
                for (g, &d) in row.iter_mut().zip(&dz1) {
                    *g += xi * d;
                }
            }
        }
        grads
    }

    /// `params <- params - lr * grads`, rounding each result back to `f32`.
    pub(crate) fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        fn step(params: &mut [f32], grads: &[f64], lr: f64) {
            for (p, g) in params.iter_mut().zip(grads) {
                *p = (f64::from(*p) - lr * g) as f32;
            }
        }
        step(&mut self.w1, &grads.w1, lr);
        step(&mut self.b1, &grads.b1, lr);
        step(&mut self.w2, &grads.w2, lr);
        self.b2 = (f64::from(self.b2) - lr * grads.b2) as f32;
    }
}
