//! Procedural image datasets. Each sample has a low-dimensional latent code
//! that is rendered onto an 8x8 canvas through fixed cosine patterns, plus a
//! class-independent nuisance pattern so that no two samples coincide. Each
//! image also gets its own exposure: a random contrast gain and brightness
//! offset around mid-grey.
//!
//! The class patterns are symmetrised even-frequency cosines, which are
//! unchanged by horizontal flips and quarter turns. The geometric
//! augmentations therefore preserve labels, as they do on natural images.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::ImageBatch;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::train::Dataset;

pub const SIDE: usize = 8;
/// Latent dimensionality of the blob classes.
pub const LATENT_DIM: usize = 6;
/// Frequency pairs of the class patterns; each pattern is the average of
/// `(fy, fx)` and its transpose.
const BASIS: [(usize, usize); LATENT_DIM] = [(0, 2), (2, 2), (0, 4), (2, 4), (4, 4), (0, 6)];
const NUISANCE: (usize, usize) = (1, 3);
const SIGNAL_SCALE: f64 = 0.15;
const NUISANCE_AMPLITUDE: f64 = 0.1;
const GAIN_RANGE: (f64, f64) = (0.8, 1.2);
const OFFSET_RANGE: (f64, f64) = (-0.1, 0.1);

/// Per-image variation that carries no class information.
struct Nuisance {
    pattern: f64,
    gain: f64,
    offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Gaussian clusters around unit-norm class centres.
    Blobs,
    /// Two interleaved half circles; two classes only.
    TwoMoons,
}

fn pattern(fy: usize, fx: usize, y: usize, x: usize) -> f64 {
    let c = |f: usize, t: usize| (PI * f as f64 * (t as f64 + 0.5) / SIDE as f64).cos();
    c(fy, y) * c(fx, x)
}

fn symmetric_pattern(fy: usize, fx: usize, y: usize, x: usize) -> f64 {
    0.5 * (pattern(fy, fx, y, x) + pattern(fx, fy, y, x))
}

fn render(latent: &[f64], nuisance: &Nuisance, out: &mut Vec<f64>) {
    for y in 0..SIDE {
        for x in 0..SIDE {
            let mut v = 0.0;
            for (z, &(fy, fx)) in latent.iter().zip(&BASIS) {
                v += SIGNAL_SCALE * z * symmetric_pattern(fy, fx, y, x);
            }
            let (fy, fx) = NUISANCE;
            v += nuisance.pattern * pattern(fy, fx, y, x);
            out.push((0.5 + nuisance.offset + nuisance.gain * v).clamp(0.0, 1.0));
        }
    }
}

/// Unit-norm class centres in latent space, fixed per seed.
pub fn class_centers(classes: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..LATENT_DIM).map(|_| normal.sample(rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|a| a / norm).collect()
        })
        .collect()
}

fn moon_point(label: usize, t: f64) -> [f64; 2] {
    if label == 0 {
        [(PI * t).cos(), (PI * t).sin()]
    } else {
        [1.0 - (PI * t).cos(), 0.5 - (PI * t).sin()]
    }
}

fn sample(
    kind: SyntheticKind,
    n: usize,
    classes: usize,
    noise: f64,
    centers: &[Vec<f64>],
    rng: &mut impl Rng,
) -> Result<ImageBatch> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    for &label in &labels {
        let latent: Vec<f64> = match kind {
            SyntheticKind::Blobs => centers[label].iter().map(|c| c + noise * normal.sample(rng)).collect(),
            SyntheticKind::TwoMoons => {
                let p = moon_point(label, rng.random_range(0.0..1.0));
                // Centre the moons and scale them to roughly unit extent.
                vec![
                    (p[0] - 0.5) + noise * normal.sample(rng),
                    2.0 * (p[1] - 0.25) + noise * normal.sample(rng),
                ]
            }
        };
        let nuisance = Nuisance {
            pattern: rng.random_range(-NUISANCE_AMPLITUDE..NUISANCE_AMPLITUDE),
            gain: rng.random_range(GAIN_RANGE.0..GAIN_RANGE.1),
            offset: rng.random_range(OFFSET_RANGE.0..OFFSET_RANGE.1),
        };
        render(&latent, &nuisance, &mut data);
    }
    ImageBatch::new(Tensor::new(vec![n, 1, SIDE, SIDE], data)?, labels)
}

/// Train and test splits drawn from the same distribution with separate
/// random streams. Class counts differ by at most one within each split.
pub fn make_synthetic(
    kind: SyntheticKind,
    n_train: usize,
    n_test: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    if kind == SyntheticKind::TwoMoons && classes != 2 {
        return Err(Error::Config("two-moons has exactly 2 classes".into()));
    }
    if n_train < classes || n_test < classes {
        return Err(Error::Config(format!(
            "each split needs at least {classes} samples (got {n_train} train, {n_test} test)"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise {noise} must be >= 0")));
    }
    let centers = class_centers(classes, &mut crate::train::stream_rng(seed, 0));
    let train = sample(
        kind,
        n_train,
        classes,
        noise,
        &centers,
        &mut crate::train::stream_rng(seed, 1),
    )?;
    let test = sample(
        kind,
        n_test,
        classes,
        noise,
        &centers,
        &mut crate::train::stream_rng(seed, 2),
    )?;
    Dataset::new(train, test, classes)
}
