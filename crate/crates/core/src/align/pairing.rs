use rand::Rng;

use crate::error::{contract, dim_err, Error, Result};
use crate::nn::{Graph, Var};

/// Margin of the separation term; different-label pairs closer than this
/// are pushed apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    margin: f64,
}

impl MarginConfig {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {margin}")));
        }
        Ok(Self { margin })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { margin: 1.0 }
    }
}

/// Clean embeddings `g(x_i)` matched against augmented embeddings
/// `g(x_j^aug)`.
///
/// Pair `i` joins clean row `i` with augmented row `permutation[i]`, whose
/// label is `labels_aug[permutation[i]]`. Features and labels on the
/// augmented side are therefore always moved together.
#[derive(Debug, Clone)]
pub struct FeaturePairing {
    clean: Var,
    aug: Var,
    labels_clean: Vec<usize>,
    labels_aug: Vec<usize>,
    permutation: Vec<usize>,
}

impl FeaturePairing {
    /// Pairs each clean row with the augmented row at the same index. Both
    /// sides carry the same labels, since augmentation preserves them.
    pub fn new(graph: &Graph, clean: Var, aug: Var, labels: &[usize]) -> Result<Self> {
        let (c, a) = (graph.value(clean), graph.value(aug));
        if c.ndim() != 2 || a.ndim() != 2 {
            return Err(dim_err(
                "feature_pairing",
                format!("features must be [B, Z]; got {:?} and {:?}", c.shape(), a.shape()),
            ));
        }
        if c.shape() != a.shape() {
            return Err(dim_err(
                "feature_pairing",
                format!("clean {:?} vs augmented {:?}", c.shape(), a.shape()),
            ));
        }
        if labels.len() != c.rows() {
            return Err(dim_err(
                "feature_pairing",
                format!("{} labels for {} rows", labels.len(), c.rows()),
            ));
        }
        Ok(Self {
            clean,
            aug,
            labels_clean: labels.to_vec(),
            labels_aug: labels.to_vec(),
            permutation: (0..labels.len()).collect(),
        })
    }

    /// Replaces the pairing permutation; it must be a bijection on `0..B`.
    pub fn with_permutation(mut self, permutation: Vec<usize>) -> Result<Self> {
        let n = self.labels_clean.len();
        let mut seen = vec![false; n];
        if permutation.len() != n
            || permutation
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(contract(format!("pairing permutation is not a bijection on 0..{n}")));
        }
        self.permutation = permutation;
        Ok(self)
    }

    pub fn clean_features(&self) -> Var {
        self.clean
    }

    pub fn aug_features(&self) -> Var {
        self.aug
    }

    pub fn labels_clean(&self) -> &[usize] {
        &self.labels_clean
    }

    pub fn labels_aug(&self) -> &[usize] {
        &self.labels_aug
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.labels_clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_clean.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Label of the augmented row paired with clean row `i`.
    pub fn paired_label(&self, i: usize) -> usize {
        self.labels_aug[self.permutation[i]]
    }

    pub fn same_label(&self, i: usize) -> bool {
        self.labels_clean[i] == self.paired_label(i)
    }
}

/// Uniform random permutation of `0..n` by Fisher-Yates, drawing
/// `j ~ U{0..=i}` for `i = n-1, ..., 1`.
pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Re-pairs the augmented side with a uniformly random permutation so that
/// different-label pairs appear and the separation term becomes active.
/// The clean side is untouched.
pub fn feature_shuffle(pairing: FeaturePairing, rng: &mut impl Rng) -> Result<FeaturePairing> {
    if !pairing.is_identity() {
        return Err(contract("feature_shuffle expects an unshuffled pairing"));
    }
    let perm = random_permutation(pairing.len(), rng);
    pairing.with_permutation(perm)
}
