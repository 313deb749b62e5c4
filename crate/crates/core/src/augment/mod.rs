//! Training-time augmentations that produce paired clean/augmented data,
//! and test-time corruptions for robust accuracy.

mod augmix;
mod batch;
mod corruption;
mod mixing;
mod primitives;

pub use augmix::{augmix_image, augmix_views, sample_draw, AugChainSpec, ChainDraw};
pub use batch::{ConsistencyBatch, ImageBatch, MixedBatch};
pub use corruption::{corrupt, CorruptionKind, CorruptionSpec, CorruptionTable, BUILTIN_TABLE, MAX_SEVERITY};
pub use mixing::{bbox_centered, cutmix, cutmix_with, mixup, mixup_with, rand_bbox, BoundingBox};
pub use primitives::{posterize_levels, primitive_transform, PrimitiveKind};
