use crate::error::{Error, Result};
use crate::feature_store::{Dataset, Sample};
use crate::rng::{derive_seed, SplitMix64};

pub const WITHIN_CLUSTER_STD: f64 = 1.0;

const ATTEMPTS_PER_CENTER: usize = 1000;

/// Isotropic Gaussian clusters, one per class, with unit within-cluster
/// standard deviation and centers at pairwise distance at least
/// `separation * WITHIN_CLUSTER_STD`.
///
/// Centers are drawn from `N(0, s^2 I)` by rejection, starting from a spread
/// `s` whose expected pairwise distance is `1.25 * separation` and widening
/// it whenever a center cannot be placed.
pub fn make_synthetic(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Argument("classes, per_class and dim must be positive".into()));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(Error::Argument("separation must be a positive number".into()));
    }
    let min_distance = separation * WITHIN_CLUSTER_STD;
    let centers = place_centers(classes, dim, min_distance, derive_seed(seed, "centers", 0));

    let mut rng = SplitMix64::new(derive_seed(seed, "points", 0));
    let mut points: Vec<(Vec<f32>, usize)> = Vec::with_capacity(classes * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let x = center
                .iter()
                .map(|&c| (c + WITHIN_CLUSTER_STD * rng.standard_normal()) as f32)
                .collect();
            points.push((x, k));
        }
    }
    SplitMix64::new(derive_seed(seed, "order", 0)).shuffle(&mut points);
    let width = classes.saturating_sub(1).to_string().len();
    let samples = points
        .into_iter()
        .enumerate()
        .map(|(i, (features, k))| Sample {
            id: format!("syn-{i:06}"),
            features,
            truth_label: Some(format!("class_{k:0width$}")),
            thumbnail_url: None,
        })
        .collect();
    let name = format!("synthetic-{classes}x{per_class}-d{dim}");
    Dataset::new(name, samples)
}

fn place_centers(classes: usize, dim: usize, min_distance: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let mut spread = 1.25 * min_distance / (2.0 * dim as f64).sqrt();
    'restart: loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while centers.len() < classes {
            let mut placed = false;
            for _ in 0..ATTEMPTS_PER_CENTER {
                let candidate: Vec<f64> = (0..dim).map(|_| spread * rng.standard_normal()).collect();
                if centers.iter().all(|c| distance(c, &candidate) >= min_distance) {
                    centers.push(candidate);
                    placed = true;
                    break;
                }
            }
            if !placed {
                spread *= 1.25;
                continue 'restart;
            }
        }
        return centers;
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
