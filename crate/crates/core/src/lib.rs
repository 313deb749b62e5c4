//! Contrastive semantic alignment (CSA) with feature shuffling for
//! data-augmentation training.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small reverse-mode autodiff engine with the layers,
//!   optimizers and schedules the training recipes need.
//! - [`augment`]: MixUp, CutMix, AugMix-style views and the corruption
//!   suite used for robust accuracy.
//! - [`align`]: the CSA loss (alignment + margin separation), feature
//!   shuffling, and a supervised-contrastive baseline.
//! - [`train`]: composite objectives, the training loop, SA/RA evaluation
//!   and the paired studies built on it.
//! - [`experiment`]: configuration files, datasets, and CSV reports.

// `!(x > 0.0)` checks reject NaN along with non-positive values, and the
// kernels index several arrays with one loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod align;
pub mod augment;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
