use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_ra, evaluate_sa, CellAccuracy, EvalConfig};
use super::model::{ModelSpec, ModelSplit};
use super::objective::{consistency_total_loss, mixing_total_loss, normal_loss, LossComponents, Mode, ObjectiveConfig};
use crate::align::random_permutation;
use crate::augment::{augmix_views, cutmix, mixup, AugChainSpec, CorruptionTable, ImageBatch};
use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Optimizer, Schedule, Sgd};

/// Training-time augmentation; must agree with the objective mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AugmentationSpec {
    None,
    Mixup { alpha: f64 },
    Cutmix { alpha: f64 },
    Augmix(AugChainSpec),
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec::Augmix(AugChainSpec::default())
    }
}

impl AugmentationSpec {
    pub fn mode(&self) -> Mode {
        match self {
            AugmentationSpec::None => Mode::Normal,
            AugmentationSpec::Mixup { .. } | AugmentationSpec::Cutmix { .. } => Mode::Mixing,
            AugmentationSpec::Augmix(_) => Mode::Consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Sgd {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl OptimizerSpec {
    pub fn base_lr(&self) -> f64 {
        match *self {
            OptimizerSpec::Sgd { lr, .. } | OptimizerSpec::Adam { lr, .. } => lr,
        }
    }

    pub fn build(&self) -> Optimizer {
        match *self {
            OptimizerSpec::Sgd {
                lr,
                momentum,
                weight_decay,
            } => Optimizer::Sgd(Sgd::new(lr, momentum, weight_decay)),
            OptimizerSpec::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => Optimizer::Adam(Adam::new(lr, beta1, beta2, eps, weight_decay)),
        }
    }
}

/// Everything a single training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub augmentation: AugmentationSpec,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerSpec,
    pub schedule: Schedule,
    pub eval: EvalConfig,
    /// Record wall-clock seconds per epoch. Off by default so that metrics
    /// are reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            seed: 0,
            model: ModelSpec::default(),
            augmentation: AugmentationSpec::default(),
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerSpec::default(),
            schedule: Schedule::Cosine,
            eval: EvalConfig::default(),
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.objective.validate()?;
        if self.augmentation.mode() != self.objective.mode {
            return Err(Error::Config(format!(
                "augmentation {:?} does not match objective mode {:?}",
                self.augmentation, self.objective.mode
            )));
        }
        if self.objective.mode == Mode::Normal && self.objective.alignment != super::Alignment::None {
            return Err(Error::Config("normal mode has no augmented view to align".into()));
        }
        match &self.augmentation {
            AugmentationSpec::Mixup { alpha } | AugmentationSpec::Cutmix { alpha } if !(*alpha > 0.0) => {
                return Err(Error::Config(format!("mixing alpha {alpha} must be positive")));
            }
            AugmentationSpec::Augmix(spec) => spec.validate()?,
            _ => {}
        }
        if !(self.optimizer.base_lr() > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.eval.suite()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: ImageBatch,
    pub test: ImageBatch,
    pub classes: usize,
}

impl Dataset {
    pub fn new(train: ImageBatch, test: ImageBatch, classes: usize) -> Result<Self> {
        if train.dims() != test.dims() {
            return Err(Error::Config(format!(
                "train images {:?} and test images {:?} differ in shape",
                train.dims(),
                test.dims()
            )));
        }
        let seen = train.num_classes_hint().max(test.num_classes_hint());
        if seen > classes {
            return Err(Error::Config(format!(
                "labels reach {} but classes = {classes}",
                seen - 1
            )));
        }
        Ok(Self { train, test, classes })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batch means of the loss components over the epoch.
    pub loss: LossComponents,
    pub lr: f64,
    pub sa: Option<f64>,
    pub ra: Option<f64>,
    pub cells: Vec<CellAccuracy>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<EpochMetrics>,
    pub model: ModelSplit,
}

impl RunOutput {
    pub fn final_sa(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.sa)
    }

    pub fn final_ra(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.ra)
    }
}

/// Stream `id` of the ChaCha8 generator seeded with `seed`.
pub fn stream_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const INIT_STREAM: u64 = 0;
const ORDER_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

/// Builds the model for `config` without training it.
pub fn init_model(config: &TrainConfig, data: &Dataset) -> Result<ModelSplit> {
    ModelSplit::build(
        &config.model,
        data.train.dims(),
        data.classes,
        &mut stream_rng(config.seed, INIT_STREAM),
    )
}

/// Trains from scratch. Minibatches are reshuffled every epoch, the learning
/// rate follows the schedule per epoch, and a final partial batch with fewer
/// than two samples is dropped. The three random streams (data order,
/// augmentation, feature shuffling) are separate, so enabling the alignment
/// term leaves the data and augmentations seen by the model unchanged.
pub fn train_run(config: &TrainConfig, data: &Dataset, table: &CorruptionTable) -> Result<RunOutput> {
    config.validate()?;
    let suite = config.eval.suite()?;
    let mut model = init_model(config, data)?;
    let mut optimizer = config.optimizer.build();
    let mut order_rng = stream_rng(config.seed, ORDER_STREAM);
    let mut aug_rng = stream_rng(config.seed, AUGMENT_STREAM);
    let mut shuffle_rng = stream_rng(config.seed, SHUFFLE_STREAM);
    let mut metrics = Vec::with_capacity(config.epochs);
    let n = data.train.len();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.schedule.lr(config.optimizer.base_lr(), epoch, config.epochs)?;
        optimizer.set_lr(lr);
        let order = random_permutation(n, &mut order_rng);
        let mut sums = LossComponents::default();
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let batch = data.train.select(chunk);
            let mut graph = Graph::new();
            let out = match &config.augmentation {
                AugmentationSpec::None => normal_loss(&mut graph, &model, &batch)?,
                AugmentationSpec::Mixup { alpha } => {
                    let mixed = mixup(&batch, *alpha, &mut aug_rng)?;
                    mixing_total_loss(&mut graph, &model, &mixed, &batch, &config.objective, &mut shuffle_rng)?
                }
                AugmentationSpec::Cutmix { alpha } => {
                    let mixed = cutmix(&batch, *alpha, &mut aug_rng)?;
                    mixing_total_loss(&mut graph, &model, &mixed, &batch, &config.objective, &mut shuffle_rng)?
                }
                AugmentationSpec::Augmix(spec) => {
                    let views = augmix_views(&batch, spec, &mut aug_rng)?;
                    consistency_total_loss(&mut graph, &model, &views, &config.objective, &mut shuffle_rng)?
                }
            };
            let c = out.components;
            if !c.is_finite() {
                log::error!("non-finite loss at epoch {epoch} step {step}: {c:?}");
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    components: format!(
                        "task={} jsd={} sa={} s={} supcon={} total={}",
                        c.task, c.jsd, c.sa, c.s, c.supcon, c.total
                    ),
                });
            }
            graph.backward(out.total)?;
            model.params.zero_grad();
            model.params.accumulate_grads(&graph);
            optimizer.step(&mut model.params)?;
            sums.task += c.task;
            sums.jsd += c.jsd;
            sums.sa += c.sa;
            sums.s += c.s;
            sums.supcon += c.supcon;
            sums.total += c.total;
            batches += 1;
        }
        let k = batches.max(1) as f64;
        let loss = LossComponents {
            task: sums.task / k,
            jsd: sums.jsd / k,
            sa: sums.sa / k,
            s: sums.s / k,
            supcon: sums.supcon / k,
            total: sums.total / k,
        };
        let (sa, ra, cells) = if config.eval.due(epoch, config.epochs) {
            let sa = evaluate_sa(&model, &data.test)?;
            let report = evaluate_ra(&model, &data.test, &suite, table, config.eval.seed)?;
            (Some(sa), Some(report.ra), report.cells)
        } else {
            (None, None, Vec::new())
        };
        let seconds = if config.record_timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log::info!("epoch {epoch}: lr={lr:.5} loss={:.5} sa={sa:?} ra={ra:?}", loss.total);
        metrics.push(EpochMetrics {
            epoch,
            loss,
            lr,
            sa,
            ra,
            cells,
            seconds,
        });
    }
    Ok(RunOutput { metrics, model })
}
