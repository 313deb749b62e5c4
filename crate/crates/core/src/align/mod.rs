//! Feature alignment losses computed on extractor outputs: contrastive
//! semantic alignment with feature shuffling, plus the supervised
//! contrastive baseline.

mod csa;
mod pairing;
mod stats;
mod supcon;

pub use csa::{csa_loss, csa_terms, semantic_alignment_loss, separation_loss, CsaTerms};
pub use pairing::{feature_shuffle, random_permutation, FeaturePairing, MarginConfig};
pub use stats::{feature_distance_stats, pairwise_feature_stats, FeatureStats};
pub use supcon::{supcon_loss, SupConOutput, DEFAULT_TEMPERATURE};
