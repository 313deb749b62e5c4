use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelSplit;
use crate::augment::{corrupt, CorruptionKind, CorruptionSpec, CorruptionTable, ImageBatch, MAX_SEVERITY};
use crate::error::{contract, Error, Result};

/// Which corruption cells enter the robust accuracy, and the seed that
/// fixes their noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluate every `every` epochs; 0 evaluates after the last epoch only.
    pub every: usize,
    pub seed: u64,
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 0,
            seed: 7,
            kinds: CorruptionKind::ALL.to_vec(),
            severities: (1..=MAX_SEVERITY).collect(),
        }
    }
}

impl EvalConfig {
    pub fn suite(&self) -> Result<Vec<CorruptionSpec>> {
        if self.kinds.is_empty() || self.severities.is_empty() {
            return Err(Error::Config("corruption suite is empty".into()));
        }
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &sev in &self.severities {
                out.push(CorruptionSpec::new(kind, sev)?);
            }
        }
        Ok(out)
    }

    pub fn due(&self, epoch: usize, total: usize) -> bool {
        epoch + 1 == total || (self.every > 0 && (epoch + 1).is_multiple_of(self.every))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAccuracy {
    pub spec: CorruptionSpec,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustReport {
    /// Unweighted mean over cells.
    pub ra: f64,
    pub cells: Vec<CellAccuracy>,
}

pub fn accuracy(model: &ModelSplit, data: &ImageBatch) -> Result<f64> {
    if data.is_empty() {
        return Err(contract("accuracy over an empty evaluation set"));
    }
    let pred = model.predict(data.images())?;
    let hits = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Top-1 accuracy on the clean test set.
pub fn evaluate_sa(model: &ModelSplit, test: &ImageBatch) -> Result<f64> {
    accuracy(model, test)
}

/// Noise for a cell depends only on the evaluation seed and the cell.
fn cell_rng(seed: u64, spec: CorruptionSpec) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((spec.kind.index() * 16 + usize::from(spec.severity)) as u64);
    rng
}

/// Accuracy per corruption cell and their unweighted mean.
pub fn evaluate_ra(
    model: &ModelSplit,
    test: &ImageBatch,
    suite: &[CorruptionSpec],
    table: &CorruptionTable,
    seed: u64,
) -> Result<RobustReport> {
    if suite.is_empty() {
        return Err(Error::Config("corruption suite is empty".into()));
    }
    let mut cells = Vec::with_capacity(suite.len());
    for &spec in suite {
        let corrupted = corrupt(test, spec, table, &mut cell_rng(seed, spec))?;
        cells.push(CellAccuracy {
            spec,
            accuracy: accuracy(model, &corrupted)?,
        });
    }
    let ra = cells.iter().map(|c| c.accuracy).sum::<f64>() / cells.len() as f64;
    Ok(RobustReport { ra, cells })
}
