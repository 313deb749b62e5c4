use super::pairing::FeaturePairing;
use crate::error::{dim_err, Result};
use crate::nn::{Graph, Tensor};

/// Mean Euclidean distances between clean and augmented embeddings over all
/// `B x B` cross pairs, split by whether the two labels agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean_same: f64,
    pub mean_different: f64,
    pub same_pairs: usize,
    pub different_pairs: usize,
}

pub fn feature_distance_stats(
    clean: &Tensor,
    aug: &Tensor,
    labels_clean: &[usize],
    labels_aug: &[usize],
) -> Result<FeatureStats> {
    if clean.row_len() != aug.row_len() || clean.rows() != labels_clean.len() || aug.rows() != labels_aug.len() {
        return Err(dim_err(
            "pairwise_feature_stats",
            format!(
                "clean {:?}/{} labels vs augmented {:?}/{} labels",
                clean.shape(),
                labels_clean.len(),
                aug.shape(),
                labels_aug.len()
            ),
        ));
    }
    let (mut same, mut diff) = (0.0, 0.0);
    let (mut n_same, mut n_diff) = (0usize, 0usize);
    for (i, &li) in labels_clean.iter().enumerate() {
        for (j, &lj) in labels_aug.iter().enumerate() {
            let d = clean
                .row(i)
                .iter()
                .zip(aug.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if li == lj {
                same += d;
                n_same += 1;
            } else {
                diff += d;
                n_diff += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(FeatureStats {
        mean_same: mean(same, n_same),
        mean_different: mean(diff, n_diff),
        same_pairs: n_same,
        different_pairs: n_diff,
    })
}

/// Distance statistics of a pairing's feature sets. The permutation is
/// irrelevant here because every cross pair is visited.
pub fn pairwise_feature_stats(graph: &Graph, pairing: &FeaturePairing) -> Result<FeatureStats> {
    feature_distance_stats(
        graph.value(pairing.clean_features()),
        graph.value(pairing.aug_features()),
        pairing.labels_clean(),
        pairing.labels_aug(),
    )
}
