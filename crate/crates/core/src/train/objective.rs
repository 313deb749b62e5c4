//! Training objectives.
//!
//! Mixing mode (MixUp/CutMix):
//! `L_aug = lambda * CE(f(x_aug), y_a) + (1 - lambda) * CE(f(x_aug), y_b)` and
//! `L_total = (1 - gamma) * L_aug + gamma * L_CSA`, where the augmented side of
//! the CSA pairing is labelled with `y_a`.
//!
//! Consistency mode (AugMix-style):
//! `L_aug = CE(f(x), y) + lambda_l * JSD(f(x), f(x_aug1), f(x_aug2))` and
//! `L_total = (1 - gamma) * L_aug + gamma / 2 * (L_CSA^aug1 + L_CSA^aug2)`.
//!
//! With alignment disabled the total is `L_aug` alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelSplit;
use crate::align::{
    csa_terms, feature_shuffle, semantic_alignment_loss, supcon_loss, FeaturePairing, MarginConfig, DEFAULT_TEMPERATURE,
};
use crate::augment::{ConsistencyBatch, ImageBatch, MixedBatch};
use crate::error::{contract, dim_err, Error, Result};
use crate::nn::{CustomOp, Graph, Tensor, Var};

/// Floor applied to probabilities before taking logarithms in the JSD.
pub const JSD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Normal,
    Mixing,
    Consistency,
}

/// Which feature-alignment term is added to the task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    /// Task loss only.
    None,
    /// Alignment + separation on shuffled pairs.
    Csa,
    /// Alignment term only, on unshuffled pairs (ablation).
    SaOnly,
    /// Supervised contrastive loss over all views (baseline).
    Supcon,
}

impl std::str::FromStr for Alignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Alignment::None),
            "csa" => Ok(Alignment::Csa),
            "sa-only" => Ok(Alignment::SaOnly),
            "supcon" => Ok(Alignment::Supcon),
            other => Err(Error::Config(format!(
                "unknown alignment variant `{other}` (expected csa, sa-only, supcon or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub mode: Mode,
    pub alignment: Alignment,
    /// Weight of the alignment term; the task loss gets `1 - gamma`.
    pub gamma: f64,
    /// Weight of the JSD consistency term in consistency mode.
    pub jsd_weight: f64,
    pub margin: f64,
    pub supcon_temperature: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Consistency,
            alignment: Alignment::Csa,
            gamma: 0.25,
            jsd_weight: 12.0,
            margin: 1.0,
            supcon_temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.jsd_weight >= 0.0 && self.jsd_weight.is_finite()) {
            return Err(Error::Config(format!("jsd_weight {} must be >= 0", self.jsd_weight)));
        }
        MarginConfig::new(self.margin)?;
        if !(self.supcon_temperature > 0.0) {
            return Err(Error::Config("supcon_temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn margin_config(&self) -> Result<MarginConfig> {
        MarginConfig::new(self.margin)
    }
}

/// Scalar values of every loss term of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    /// Classification part of `L_aug` (the dual-label CE in mixing mode).
    pub task: f64,
    pub jsd: f64,
    /// Alignment term, averaged over views.
    pub sa: f64,
    /// Separation term, averaged over views.
    pub s: f64,
    pub supcon: f64,
    pub total: f64,
}

impl LossComponents {
    /// Total rebuilt from the components alone.
    pub fn recombine(&self, cfg: &ObjectiveConfig) -> f64 {
        let aug = self.task
            + if cfg.mode == Mode::Consistency {
                cfg.jsd_weight * self.jsd
            } else {
                0.0
            };
        match cfg.alignment {
            Alignment::None => aug,
            Alignment::Csa => (1.0 - cfg.gamma) * aug + cfg.gamma * (self.sa + self.s),
            Alignment::SaOnly => (1.0 - cfg.gamma) * aug + cfg.gamma * self.sa,
            Alignment::Supcon => (1.0 - cfg.gamma) * aug + cfg.gamma * self.supcon,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.task, self.jsd, self.sa, self.s, self.supcon, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveOutput {
    pub total: Var,
    pub components: LossComponents,
}

fn ce_pair(graph: &mut Graph, logits: Var, mixed: &MixedBatch) -> Result<Var> {
    let a = graph.softmax_cross_entropy(logits, &mixed.labels_a)?;
    let b = graph.softmax_cross_entropy(logits, &mixed.labels_b)?;
    graph.weighted_sum(&[(mixed.lambda, a), (1.0 - mixed.lambda, b)])
}

/// `lambda * CE(f(x_aug), y_a) + (1 - lambda) * CE(f(x_aug), y_b)`.
pub fn mixing_task_loss(graph: &mut Graph, model: &ModelSplit, mixed: &MixedBatch) -> Result<Var> {
    let x = graph.constant(mixed.mixed_images.clone());
    let (_, logits) = model.forward(graph, x)?;
    ce_pair(graph, logits, mixed)
}

struct AlignValues {
    loss: Var,
    sa: f64,
    s: f64,
    supcon: f64,
}

/// Alignment loss averaged over the given augmented feature sets, each
/// paired against the same clean features.
fn alignment_term(
    graph: &mut Graph,
    cfg: &ObjectiveConfig,
    clean: Var,
    augs: &[(Var, &[usize])],
    labels: &[usize],
    rng: &mut impl Rng,
) -> Result<AlignValues> {
    let weight = 1.0 / augs.len() as f64;
    let mut out = AlignValues {
        loss: clean,
        sa: 0.0,
        s: 0.0,
        supcon: 0.0,
    };
    match cfg.alignment {
        Alignment::None => unreachable!("caller skips alignment"),
        Alignment::Csa | Alignment::SaOnly => {
            let mut terms = Vec::with_capacity(augs.len());
            for &(aug, aug_labels) in augs {
                let pairing = FeaturePairing::new(graph, clean, aug, aug_labels)?;
                if cfg.alignment == Alignment::Csa {
                    let pairing = feature_shuffle(pairing, rng)?;
                    let t = csa_terms(graph, &pairing, cfg.margin_config()?)?;
                    out.sa += weight * graph.value(t.alignment).item();
                    out.s += weight * graph.value(t.separation).item();
                    terms.push((weight, t.total));
                } else {
                    let sa = semantic_alignment_loss(graph, &pairing)?;
                    out.sa += weight * graph.value(sa).item();
                    terms.push((weight, sa));
                }
            }
            out.loss = graph.weighted_sum(&terms)?;
        }
        Alignment::Supcon => {
            let mut views = vec![clean];
            let mut all_labels = labels.to_vec();
            for &(aug, aug_labels) in augs {
                views.push(aug);
                all_labels.extend_from_slice(aug_labels);
            }
            let stacked = graph.concat_rows(&views)?;
            let sc = supcon_loss(graph, stacked, &all_labels, cfg.supcon_temperature)?;
            out.supcon = graph.value(sc.loss).item();
            out.loss = sc.loss;
        }
    }
    Ok(out)
}

/// Mixing-mode objective. `clean` must be the batch `mixed` was built from.
pub fn mixing_total_loss(
    graph: &mut Graph,
    model: &ModelSplit,
    mixed: &MixedBatch,
    clean: &ImageBatch,
    cfg: &ObjectiveConfig,
    rng: &mut impl Rng,
) -> Result<ObjectiveOutput> {
    if cfg.mode != Mode::Mixing {
        return Err(contract("mixing_total_loss requires mixing mode"));
    }
    if clean.labels() != mixed.labels_a.as_slice() {
        return Err(contract("clean batch labels differ from the mixed batch's y_a"));
    }
    let x_aug = graph.constant(mixed.mixed_images.clone());
    let (z_aug, logits) = model.forward(graph, x_aug)?;
    let task = ce_pair(graph, logits, mixed)?;
    let mut c = LossComponents {
        task: graph.value(task).item(),
        ..Default::default()
    };
    let total = if cfg.alignment == Alignment::None {
        task
    } else {
        let x = graph.constant(clean.images().clone());
        let z_clean = model.features(graph, x)?;
        let a = alignment_term(graph, cfg, z_clean, &[(z_aug, &mixed.labels_a)], clean.labels(), rng)?;
        c.sa = a.sa;
        c.s = a.s;
        c.supcon = a.supcon;
        graph.weighted_sum(&[(1.0 - cfg.gamma, task), (cfg.gamma, a.loss)])?
    };
    c.total = graph.value(total).item();
    Ok(ObjectiveOutput { total, components: c })
}

struct JsdOp;

fn floored_ln(v: f64) -> f64 {
    v.max(JSD_FLOOR).ln()
}

fn jsd_value(ps: [&Tensor; 3]) -> f64 {
    let b = ps[0].rows();
    let mut total = 0.0;
    for ((a, c), d) in ps[0].data().iter().zip(ps[1].data()).zip(ps[2].data()) {
        let m = (a + c + d) / 3.0;
        let lm = floored_ln(m);
        for &p in [a, c, d] {
            if p != 0.0 {
                total += p * (floored_ln(p) - lm);
            }
        }
    }
    total / (3.0 * b as f64)
}

impl CustomOp for JsdOp {
    fn name(&self) -> &'static str {
        "jsd_consistency"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>> {
        let b = inputs[0].rows();
        let scale = grad_out.item() / (3.0 * b as f64);
        let mut grads: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
        for idx in 0..inputs[0].len() {
            let p = [inputs[0].data()[idx], inputs[1].data()[idx], inputs[2].data()[idx]];
            let m = (p[0] + p[1] + p[2]) / 3.0;
            let lm = floored_ln(m);
            let m_term = if m > JSD_FLOOR { 1.0 } else { m / JSD_FLOOR };
            for (k, g) in grads.iter_mut().enumerate() {
                let pk = p[k];
                let self_term = if pk > JSD_FLOOR { 1.0 } else { pk / JSD_FLOOR };
                g.data_mut()[idx] = scale * (floored_ln(pk) - lm + self_term - m_term);
            }
        }
        grads.into_iter().map(Some).collect()
    }
}

/// Batch mean of `(KL(p1 || M) + KL(p2 || M) + KL(p3 || M)) / 3` with
/// `M = (p1 + p2 + p3) / 3`, natural log, probabilities floored at
/// [`JSD_FLOOR`] inside logarithms. Rows must sum to 1 within `1e-5`;
/// non-finite inputs yield a NaN loss.
pub fn jsd_consistency(graph: &mut Graph, p_clean: Var, p_aug1: Var, p_aug2: Var) -> Result<Var> {
    let ps = [graph.value(p_clean), graph.value(p_aug1), graph.value(p_aug2)];
    if ps[0].ndim() != 2 || ps.iter().any(|p| p.shape() != ps[0].shape()) {
        return Err(dim_err(
            "jsd_consistency",
            format!("{:?}, {:?}, {:?}", ps[0].shape(), ps[1].shape(), ps[2].shape()),
        ));
    }
    if ps[0].rows() == 0 {
        return Err(contract("jsd_consistency over an empty batch"));
    }
    if ps.iter().any(|p| !p.is_finite()) {
        // Diverged logits; surface as a non-finite loss rather than a contract error.
        return Ok(graph.custom(&[p_clean, p_aug1, p_aug2], Tensor::scalar(f64::NAN), Box::new(JsdOp)));
    }
    for (k, p) in ps.iter().enumerate() {
        for r in 0..p.rows() {
            let row = p.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-5 || row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(contract(format!(
                    "distribution {k} row {r} is not a probability vector (sum {sum})"
                )));
            }
        }
    }
    let value = jsd_value(ps);
    Ok(graph.custom(&[p_clean, p_aug1, p_aug2], Tensor::scalar(value), Box::new(JsdOp)))
}

/// Consistency-mode objective. The clean forward pass is shared by the
/// cross-entropy, the JSD and both CSA pairings; the two pairings are
/// shuffled with independent permutations.
pub fn consistency_total_loss(
    graph: &mut Graph,
    model: &ModelSplit,
    batch: &ConsistencyBatch,
    cfg: &ObjectiveConfig,
    rng: &mut impl Rng,
) -> Result<ObjectiveOutput> {
    if cfg.mode != Mode::Consistency {
        return Err(contract("consistency_total_loss requires consistency mode"));
    }
    let labels = batch.clean.labels();
    let x = graph.constant(batch.clean.images().clone());
    let x1 = graph.constant(batch.aug1.clone());
    let x2 = graph.constant(batch.aug2.clone());
    let (z, logits) = model.forward(graph, x)?;
    let (z1, logits1) = model.forward(graph, x1)?;
    let (z2, logits2) = model.forward(graph, x2)?;
    let ce = graph.softmax_cross_entropy(logits, labels)?;
    let p = graph.softmax(logits)?;
    let p1 = graph.softmax(logits1)?;
    let p2 = graph.softmax(logits2)?;
    let jsd = jsd_consistency(graph, p, p1, p2)?;
    let aug = graph.weighted_sum(&[(1.0, ce), (cfg.jsd_weight, jsd)])?;
    let mut c = LossComponents {
        task: graph.value(ce).item(),
        jsd: graph.value(jsd).item(),
        ..Default::default()
    };
    let total = if cfg.alignment == Alignment::None {
        aug
    } else {
        let a = alignment_term(graph, cfg, z, &[(z1, labels), (z2, labels)], labels, rng)?;
        c.sa = a.sa;
        c.s = a.s;
        c.supcon = a.supcon;
        graph.weighted_sum(&[(1.0 - cfg.gamma, aug), (cfg.gamma, a.loss)])?
    };
    c.total = graph.value(total).item();
    Ok(ObjectiveOutput { total, components: c })
}

/// Plain cross-entropy on clean data.
pub fn normal_loss(graph: &mut Graph, model: &ModelSplit, batch: &ImageBatch) -> Result<ObjectiveOutput> {
    let x = graph.constant(batch.images().clone());
    let (_, logits) = model.forward(graph, x)?;
    let ce = graph.softmax_cross_entropy(logits, batch.labels())?;
    let v = graph.value(ce).item();
    Ok(ObjectiveOutput {
        total: ce,
        components: LossComponents {
            task: v,
            total: v,
            ..Default::default()
        },
    })
}
