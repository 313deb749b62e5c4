//! AugMix-style views: a Beta-weighted blend of the clean image with a
//! Dirichlet-weighted sum of several random operation chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::batch::{ConsistencyBatch, ImageBatch};
use super::mixing::sample_beta;
use super::primitives::{primitive_transform, PrimitiveKind};
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugChainSpec {
    pub ops: Vec<PrimitiveKind>,
    /// Number of chains mixed per view.
    pub width: usize,
    /// Each chain applies between 1 and `max_depth` operations.
    pub max_depth: usize,
    pub dirichlet_alpha: f64,
    pub beta_alpha: f64,
    /// Operation magnitudes are drawn from `U[0, max_magnitude]`.
    pub max_magnitude: f64,
}

impl Default for AugChainSpec {
    /// Width 3, depth up to 3, unit concentrations. The photometric
    /// primitives that coincide with evaluation corruptions
    /// (`contrast-scale`, `brightness-shift`) are left out of the pool.
    fn default() -> Self {
        Self {
            ops: vec![
                PrimitiveKind::TranslateX,
                PrimitiveKind::TranslateY,
                PrimitiveKind::FlipHorizontal,
                PrimitiveKind::Rotate90,
                PrimitiveKind::PosterizeQuantize,
            ],
            width: 3,
            max_depth: 3,
            dirichlet_alpha: 1.0,
            beta_alpha: 1.0,
            max_magnitude: 1.0,
        }
    }
}

impl AugChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(Error::Config("augmentation operation pool is empty".into()));
        }
        if self.width == 0 || self.max_depth == 0 {
            return Err(Error::Config(format!(
                "chain width ({}) and max depth ({}) must be at least 1",
                self.width, self.max_depth
            )));
        }
        if !(self.dirichlet_alpha > 0.0 && self.beta_alpha > 0.0) {
            return Err(Error::Config(format!(
                "concentrations must be positive (dirichlet {}, beta {})",
                self.dirichlet_alpha, self.beta_alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.max_magnitude) {
            return Err(Error::Config(format!(
                "max_magnitude {} outside [0, 1]",
                self.max_magnitude
            )));
        }
        Ok(())
    }
}

/// The random choices behind one augmented view of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraw {
    pub chains: Vec<Vec<(PrimitiveKind, f64)>>,
    /// Convex weights over `chains`.
    pub weights: Vec<f64>,
    /// Share of the clean image in the final blend.
    pub clean_weight: f64,
}

pub fn sample_draw(spec: &AugChainSpec, rng: &mut impl Rng) -> Result<ChainDraw> {
    spec.validate()?;
    let gamma =
        Gamma::new(spec.dirichlet_alpha, 1.0).map_err(|e| Error::Config(format!("dirichlet concentration: {e}")))?;
    let raw: Vec<f64> = (0..spec.width).map(|_| gamma.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let weights = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / spec.width as f64; spec.width]
    };
    let chains = (0..spec.width)
        .map(|_| {
            let depth = rng.random_range(1..=spec.max_depth);
            (0..depth)
                .map(|_| {
                    let op = spec.ops[rng.random_range(0..spec.ops.len())];
                    let m = if spec.max_magnitude > 0.0 {
                        rng.random_range(0.0..=spec.max_magnitude)
                    } else {
                        0.0
                    };
                    (op, m)
                })
                .collect()
        })
        .collect();
    let clean_weight = sample_beta(spec.beta_alpha, rng)?;
    Ok(ChainDraw {
        chains,
        weights,
        clean_weight,
    })
}

/// `clip(clean_weight * x + (1 - clean_weight) * sum_k weights[k] * chain_k(x))`,
/// evaluated as `x + (1 - clean_weight) * sum_k weights[k] * (chain_k(x) - x)`
/// so that identity chains return `x` bit for bit.
pub fn augmix_image(image: &[f64], dims: (usize, usize, usize), draw: &ChainDraw) -> Result<Vec<f64>> {
    let mut delta = vec![0.0; image.len()];
    for (chain, &wk) in draw.chains.iter().zip(&draw.weights) {
        let mut cur = image.to_vec();
        for &(op, m) in chain {
            cur = primitive_transform(&cur, dims, op, m)?;
        }
        for ((d, c), x) in delta.iter_mut().zip(&cur).zip(image) {
            *d += wk * (c - x);
        }
    }
    let aug_weight = 1.0 - draw.clean_weight;
    Ok(image
        .iter()
        .zip(&delta)
        .map(|(x, d)| (x + aug_weight * d).clamp(0.0, 1.0))
        .collect())
}

/// Two independently augmented views of every image. Each (image, view)
/// pair draws from its own stream derived from one seed taken from `rng`,
/// so the result does not depend on processing order.
pub fn augmix_views(batch: &ImageBatch, spec: &AugChainSpec, rng: &mut impl Rng) -> Result<ConsistencyBatch> {
    spec.validate()?;
    let seed = rng.next_u64();
    let dims = batch.dims();
    let mut views = [
        Vec::with_capacity(batch.images().len()),
        Vec::with_capacity(batch.images().len()),
    ];
    for i in 0..batch.len() {
        for (v, out) in views.iter_mut().enumerate() {
            let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
            sample_rng.set_stream((2 * i + v) as u64);
            let draw = sample_draw(spec, &mut sample_rng)?;
            out.extend(augmix_image(batch.image(i), dims, &draw)?);
        }
    }
    let [a1, a2] = views;
    let shape = batch.images().shape().to_vec();
    Ok(ConsistencyBatch {
        clean: batch.clone(),
        aug1: Tensor::new(shape.clone(), a1)?,
        aug2: Tensor::new(shape, a2)?,
    })
}
