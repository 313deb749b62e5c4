//! MixUp and CutMix.
//!
//! Partners come from one uniform random permutation of the batch; the
//! mixing ratio is drawn from `Beta(alpha, alpha)`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::batch::{ImageBatch, MixedBatch};
use crate::align::random_permutation;
use crate::error::{contract, Error, Result};
use crate::nn::Tensor;

pub(crate) fn sample_beta(alpha: f64, rng: &mut impl Rng) -> Result<f64> {
    let beta =
        Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("invalid Beta concentration {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

fn check_perm(batch: &ImageBatch, perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; batch.len()];
    if perm.len() != batch.len()
        || perm
            .iter()
            .any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true))
    {
        return Err(contract("partner permutation is not a bijection over the batch"));
    }
    Ok(())
}

/// `lambda * x + (1 - lambda) * x[perm]`, with `labels_b = y[perm]`.
pub fn mixup_with(batch: &ImageBatch, lambda: f64, perm: &[usize]) -> Result<MixedBatch> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(contract(format!("mixing ratio {lambda} outside [0, 1]")));
    }
    check_perm(batch, perm)?;
    let x = batch.images();
    let mut data = Vec::with_capacity(x.len());
    for (i, &p) in perm.iter().enumerate() {
        data.extend(
            x.row(i)
                .iter()
                .zip(x.row(p))
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b),
        );
    }
    Ok(MixedBatch {
        mixed_images: Tensor::new(x.shape().to_vec(), data)?,
        labels_a: batch.labels().to_vec(),
        labels_b: perm.iter().map(|&p| batch.labels()[p]).collect(),
        lambda,
    })
}

pub fn mixup(batch: &ImageBatch, alpha: f64, rng: &mut impl Rng) -> Result<MixedBatch> {
    if batch.is_empty() {
        return Err(contract("mixup on an empty batch"));
    }
    let lambda = sample_beta(alpha, rng)?;
    let perm = random_permutation(batch.len(), rng);
    mixup_with(batch, lambda, &perm)
}

/// Half-open pixel rectangle `[y0, y1) x [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

fn cut_extents(lambda: f64, height: usize, width: usize) -> (usize, usize) {
    let ratio = (1.0 - lambda.clamp(0.0, 1.0)).sqrt();
    (
        (height as f64 * ratio).floor() as usize,
        (width as f64 * ratio).floor() as usize,
    )
}

/// Box of side `floor(side * sqrt(1 - lambda))` centred at `(cy, cx)`,
/// clipped to the image.
pub fn bbox_centered(lambda: f64, height: usize, width: usize, cy: usize, cx: usize) -> BoundingBox {
    let (ch, cw) = cut_extents(lambda, height, width);
    let clip = |lo: isize, len: usize, bound: usize| {
        let a = lo.clamp(0, bound as isize) as usize;
        let b = (lo + len as isize).clamp(0, bound as isize) as usize;
        (a, b)
    };
    let (y0, y1) = clip(cy as isize - (ch / 2) as isize, ch, height);
    let (x0, x1) = clip(cx as isize - (cw / 2) as isize, cw, width);
    BoundingBox { y0, x0, y1, x1 }
}

/// Samples a box whose area ratio is `1 - lambda` up to flooring of the
/// side lengths. The centre is drawn uniformly among positions that keep
/// the whole box inside the image, so clipping never shrinks it.
pub fn rand_bbox(lambda: f64, height: usize, width: usize, rng: &mut impl Rng) -> BoundingBox {
    let (ch, cw) = cut_extents(lambda, height, width);
    let cy = ch / 2 + rng.random_range(0..=height - ch);
    let cx = cw / 2 + rng.random_range(0..=width - cw);
    bbox_centered(lambda, height, width, cy, cx)
}

/// Pastes `x[perm]` inside `bbox` and sets `lambda = 1 - area / (H * W)`.
pub fn cutmix_with(batch: &ImageBatch, perm: &[usize], bbox: BoundingBox) -> Result<MixedBatch> {
    check_perm(batch, perm)?;
    let (c, h, w) = batch.dims();
    if bbox.y1 > h || bbox.x1 > w || bbox.y0 > bbox.y1 || bbox.x0 > bbox.x1 {
        return Err(contract(format!("box {bbox:?} outside {h}x{w} image")));
    }
    let x = batch.images();
    let mut data = x.data().to_vec();
    let per = c * h * w;
    for (i, &p) in perm.iter().enumerate() {
        let src = x.row(p);
        let dst = &mut data[i * per..(i + 1) * per];
        for ch in 0..c {
            for y in bbox.y0..bbox.y1 {
                let off = ch * h * w + y * w;
                dst[off + bbox.x0..off + bbox.x1].copy_from_slice(&src[off + bbox.x0..off + bbox.x1]);
            }
        }
    }
    let lambda = if h * w == 0 {
        1.0
    } else {
        1.0 - bbox.area() as f64 / (h * w) as f64
    };
    Ok(MixedBatch {
        mixed_images: Tensor::new(x.shape().to_vec(), data)?,
        labels_a: batch.labels().to_vec(),
        labels_b: perm.iter().map(|&p| batch.labels()[p]).collect(),
        lambda,
    })
}

pub fn cutmix(batch: &ImageBatch, alpha: f64, rng: &mut impl Rng) -> Result<MixedBatch> {
    if batch.is_empty() {
        return Err(contract("cutmix on an empty batch"));
    }
    let lambda = sample_beta(alpha, rng)?;
    let perm = random_permutation(batch.len(), rng);
    let (_, h, w) = batch.dims();
    let bbox = rand_bbox(lambda, h, w, rng);
    cutmix_with(batch, &perm, bbox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch() -> ImageBatch {
        let data: Vec<f64> = (0..2 * 4 * 4).map(|v| v as f64 / 32.0).collect();
        ImageBatch::new(Tensor::new(vec![2, 1, 4, 4], data).unwrap(), vec![0, 1]).unwrap()
    }

    #[test]
    fn mixup_endpoints() {
        let b = batch();
        let m = mixup_with(&b, 1.0, &[1, 0]).unwrap();
        assert_eq!(m.mixed_images, *b.images());
        let m = mixup_with(&b, 0.0, &[1, 0]).unwrap();
        assert_eq!(m.mixed_images.row(0), b.image(1));
        assert_eq!(m.labels_b, vec![1, 0]);
    }

    #[test]
    fn mixup_blend_oracle() {
        let b = batch();
        let m = mixup_with(&b, 0.3, &[1, 0]).unwrap();
        for i in 0..2 {
            let p = 1 - i;
            for (k, v) in m.mixed_images.row(i).iter().enumerate() {
                assert_eq!(*v, 0.3 * b.image(i)[k] + 0.7 * b.image(p)[k]);
            }
        }
    }

    #[test]
    fn mixup_empty_batch_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mixup(&ImageBatch::empty(1, 2, 2), 1.0, &mut rng).is_err());
    }

    #[test]
    fn bbox_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(rand_bbox(1.0, 32, 32, &mut rng).area(), 0);
        let full = bbox_centered(0.0, 32, 32, 16, 16);
        assert_eq!(
            full,
            BoundingBox {
                y0: 0,
                x0: 0,
                y1: 32,
                x1: 32
            }
        );
        // Off-centre boxes are clipped.
        let clipped = bbox_centered(0.75, 32, 32, 0, 0);
        assert_eq!(
            clipped,
            BoundingBox {
                y0: 0,
                x0: 0,
                y1: 8,
                x1: 8
            }
        );
    }

    #[test]
    fn cutmix_endpoints() {
        let b = batch();
        let empty = BoundingBox {
            y0: 1,
            x0: 1,
            y1: 1,
            x1: 1,
        };
        let m = cutmix_with(&b, &[1, 0], empty).unwrap();
        assert_eq!(m.mixed_images, *b.images());
        assert_eq!(m.lambda, 1.0);
        let full = BoundingBox {
            y0: 0,
            x0: 0,
            y1: 4,
            x1: 4,
        };
        let m = cutmix_with(&b, &[1, 0], full).unwrap();
        assert_eq!(m.mixed_images.row(0), b.image(1));
        assert_eq!(m.lambda, 0.0);
    }
}
