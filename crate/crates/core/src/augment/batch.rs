use crate::error::{contract, dim_err, Result};
use crate::nn::Tensor;

/// Images in `[0, 1]` laid out `[B, C, H, W]`, with one class index each.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    images: Tensor,
    labels: Vec<usize>,
}

impl ImageBatch {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(dim_err(
                "image_batch",
                format!("expected [B, C, H, W], got {:?}", images.shape()),
            ));
        }
        if images.shape()[0] != labels.len() {
            return Err(dim_err(
                "image_batch",
                format!("{} labels for {} images", labels.len(), images.shape()[0]),
            ));
        }
        if !images.is_finite() {
            return Err(contract("image batch contains non-finite pixels"));
        }
        Ok(Self { images, labels })
    }

    pub fn empty(channels: usize, height: usize, width: usize) -> Self {
        Self {
            images: Tensor::zeros(&[0, channels, height, width]),
            labels: Vec::new(),
        }
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(channels, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn truncate(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Same labels, new pixels; pixels are assumed to keep the shape.
    pub(crate) fn with_images(&self, data: Vec<f64>) -> Self {
        Self {
            images: Tensor::new(self.images.shape().to_vec(), data).expect("shape"),
            labels: self.labels.clone(),
        }
    }

    pub fn num_classes_hint(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Output of MixUp/CutMix: mixed images, both source labels, and the share
/// of the image that came from the original sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub mixed_images: Tensor,
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    pub lambda: f64,
}

/// A clean batch plus two independently augmented views of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyBatch {
    pub clean: ImageBatch,
    pub aug1: Tensor,
    pub aug2: Tensor,
}
