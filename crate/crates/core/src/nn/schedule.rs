use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// `base_lr * (1 + cos(pi * epoch / total_epochs)) / 2`.
pub fn cosine_anneal_lr(base_lr: f64, epoch: usize, total_epochs: usize) -> Result<f64> {
    if epoch > total_epochs {
        return Err(contract(format!("epoch {epoch} beyond schedule length {total_epochs}")));
    }
    if total_epochs == 0 {
        return Ok(base_lr);
    }
    let t = epoch as f64 / total_epochs as f64;
    Ok(base_lr * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0)
}

/// `base_lr * factor^floor(epoch / period)`. A zero period is treated as 1.
pub fn step_decay_lr(base_lr: f64, epoch: usize, period: usize, factor: f64) -> f64 {
    let k = epoch / period.max(1);
    base_lr * factor.powi(k as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    Cosine,
    Step { period: usize, factor: f64 },
}

impl Schedule {
    pub fn lr(&self, base_lr: f64, epoch: usize, total_epochs: usize) -> Result<f64> {
        match *self {
            Schedule::Constant => Ok(base_lr),
            Schedule::Cosine => cosine_anneal_lr(base_lr, epoch, total_epochs),
            Schedule::Step { period, factor } => Ok(step_decay_lr(base_lr, epoch, period, factor)),
        }
    }
}
