//! Finite-difference verification of every differentiable operation on
//! randomly drawn instances.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::align::{csa_loss, semantic_alignment_loss, separation_loss, supcon_loss, FeaturePairing, MarginConfig};
use crate::augment::{ConsistencyBatch, ImageBatch, MixedBatch};
use crate::error::{Error, Result};
use crate::nn::{finite_diff_gradcheck, Graph, ParamStore, Tensor, Var};
use crate::train::{
    consistency_total_loss, jsd_consistency, mixing_task_loss, mixing_total_loss, Alignment, Mode, ModelSpec,
    ModelSplit, ObjectiveConfig,
};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Instances whose ReLU inputs or hinge distances come closer than this to
/// a kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

pub const OPERATIONS: [&str; 13] = [
    "linear",
    "conv2d",
    "relu",
    "softmax",
    "softmax_cross_entropy",
    "semantic_alignment_loss",
    "separation_loss",
    "csa_loss",
    "supcon_loss",
    "jsd_consistency",
    "mixing_task_loss",
    "mixing_total_loss",
    "consistency_total_loss",
];

/// Deliberate defects used to confirm that the suite catches wrong
/// gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Negates the gradient of the separation term.
    FlipSeparationGrad,
}

impl std::str::FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flip-separation-grad" => Ok(Mutation::FlipSeparationGrad),
            other => Err(Error::Config(format!("unknown mutation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    pub max_relative_error: f64,
    /// Hinge pairs seen inside / outside the margin (separation terms only).
    pub hinge_active: usize,
    pub hinge_inactive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradSuiteReport {
    pub checks: Vec<OpCheck>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = write!(
                s,
                "{} {:<24} {:>3}/{:<3} max rel err {:.3e}",
                if c.failures == 0 { "PASS" } else { "FAIL" },
                c.name,
                c.instances - c.failures,
                c.instances,
                c.max_relative_error
            );
            if c.hinge_active + c.hinge_inactive > 0 {
                let _ = write!(
                    s,
                    "  (hinge pairs: {} active, {} inactive)",
                    c.hinge_active, c.hinge_inactive
                );
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "{}: step {GRAD_STEP:e}, tolerance {GRAD_TOLERANCE:e}",
            if self.passed() {
                "all checks passed"
            } else {
                "gradient check FAILED"
            }
        );
        s
    }
}

type LossFn = Box<dyn Fn(&mut Graph, &ParamStore) -> Result<Var>>;

struct Instance {
    store: ParamStore,
    loss: LossFn,
    hinge: (usize, usize),
}

fn normal(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn labels(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

fn permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    crate::align::random_permutation(n, rng)
}

/// Fixed random projection of any tensor to a scalar.
fn project(graph: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let n = graph.value(out).len();
    let flat = graph.reshape(out, vec![1, n])?;
    let w = graph.constant(weights.clone().reshape(vec![n, 1])?);
    let b = graph.constant(Tensor::zeros(&[1]));
    let y = graph.linear(flat, w, b)?;
    Ok(graph.sum(y))
}

fn add(store: &mut ParamStore, name: &str, t: Tensor) -> crate::nn::ParamId {
    store.add(name, t).expect("unique names")
}

/// Counts different-label pairs inside/outside the margin, or `None` when a
/// pair sits within [`KINK_MARGIN`] of it.
fn hinge_regimes(
    clean: &Tensor,
    aug: &Tensor,
    pairing: &[(usize, usize, bool)],
    margin: f64,
) -> Option<(usize, usize)> {
    let (mut active, mut inactive) = (0, 0);
    for &(i, j, same) in pairing {
        if same {
            continue;
        }
        let d: f64 = clean
            .row(i)
            .iter()
            .zip(aug.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if (d - margin).abs() < KINK_MARGIN {
            return None;
        }
        if d < margin {
            active += 1;
        } else {
            inactive += 1;
        }
    }
    Some((active, inactive))
}

fn pair_instance(op: &'static str, k: usize, rng: &mut ChaCha8Rng, mutation: Option<Mutation>) -> Option<Instance> {
    let b = rng.random_range(2..=8);
    let z = rng.random_range(1..=6);
    // Separation instances rotate through all-active, all-inactive and mixed.
    let scale = match k % 3 {
        0 => 0.1,
        1 => 4.0,
        _ => 0.5,
    };
    let clean = normal(rng, &[b, z], scale);
    let aug = normal(rng, &[b, z], scale);
    let lbl = labels(rng, b, 3);
    let perm = permutation(rng, b);
    let margin = 1.0;
    let pairs: Vec<(usize, usize, bool)> = (0..b).map(|i| (i, perm[i], lbl[i] == lbl[perm[i]])).collect();
    let hinge = hinge_regimes(&clean, &aug, &pairs, margin)?;
    let mut store = ParamStore::new();
    let c = add(&mut store, "clean", clean);
    let a = add(&mut store, "aug", aug);
    let flip = mutation == Some(Mutation::FlipSeparationGrad);
    let loss: LossFn = Box::new(move |g, s| {
        let (cv, av) = (g.param(s, c), g.param(s, a));
        let pairing = FeaturePairing::new(g, cv, av, &lbl)?.with_permutation(perm.clone())?;
        let cfg = MarginConfig::new(margin)?;
        match op {
            "semantic_alignment_loss" => semantic_alignment_loss(g, &pairing),
            "separation_loss" => {
                let l = separation_loss(g, &pairing, cfg)?;
                Ok(if flip { g.grad_reverse(l) } else { l })
            }
            _ if flip => {
                let sa = semantic_alignment_loss(g, &pairing)?;
                let sep = separation_loss(g, &pairing, cfg)?;
                let sep = g.grad_reverse(sep);
                g.add(sa, sep)
            }
            _ => csa_loss(g, &pairing, cfg),
        }
    });
    let hinge = if op == "semantic_alignment_loss" { (0, 0) } else { hinge };
    Some(Instance { store, loss, hinge })
}

fn tiny_model(rng: &mut ChaCha8Rng) -> ModelSplit {
    ModelSplit::build(
        &ModelSpec::Mlp {
            hidden: vec![5],
            embedding: 4,
        },
        (1, 3, 3),
        3,
        rng,
    )
    .expect("valid tiny model")
}

fn images(rng: &mut ChaCha8Rng, b: usize) -> Tensor {
    let n = b * 9;
    Tensor::new(vec![b, 1, 3, 3], (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).expect("shape")
}

fn model_loss(model: ModelSplit, f: impl Fn(&mut Graph, &ModelSplit) -> Result<Var> + 'static) -> (ParamStore, LossFn) {
    let store = model.params.clone();
    let loss: LossFn = Box::new(move |g, s| {
        let mut m = model.clone();
        m.params = s.clone();
        f(g, &m)
    });
    (store, loss)
}

fn objective(mode: Mode, rng: &mut ChaCha8Rng) -> ObjectiveConfig {
    ObjectiveConfig {
        mode,
        alignment: Alignment::Csa,
        gamma: rng.random_range(0.1..0.9),
        jsd_weight: 12.0,
        margin: 1.0,
        ..ObjectiveConfig::default()
    }
}

fn instance(op: &'static str, k: usize, rng: &mut ChaCha8Rng, mutation: Option<Mutation>) -> Option<Instance> {
    let plain = |store, loss| {
        Some(Instance {
            store,
            loss,
            hinge: (0, 0),
        })
    };
    match op {
        "linear" => {
            let (b, i, o) = (
                rng.random_range(1..=4),
                rng.random_range(1..=5),
                rng.random_range(1..=5),
            );
            let w_out = normal(rng, &[b, o], 1.0);
            let mut store = ParamStore::new();
            let x = add(&mut store, "x", normal(rng, &[b, i], 1.0));
            let w = add(&mut store, "w", normal(rng, &[i, o], 1.0));
            let bias = add(&mut store, "b", normal(rng, &[o], 1.0));
            plain(
                store,
                Box::new(move |g, s| {
                    let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, bias));
                    let y = g.linear(xv, wv, bv)?;
                    project(g, y, &w_out)
                }),
            )
        }
        "conv2d" => {
            let (b, c, kn) = (
                rng.random_range(1..=2),
                rng.random_range(1..=2),
                rng.random_range(1..=3),
            );
            let (h, w) = (rng.random_range(3..=5), rng.random_range(3..=5));
            let ks = rng.random_range(1..=3);
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..=1);
            let oh = (h + 2 * pad - ks) / stride + 1;
            let ow = (w + 2 * pad - ks) / stride + 1;
            let w_out = normal(rng, &[b, kn, oh, ow], 1.0);
            let mut store = ParamStore::new();
            let x = add(&mut store, "x", normal(rng, &[b, c, h, w], 1.0));
            let kern = add(&mut store, "kernel", normal(rng, &[kn, c, ks, ks], 1.0));
            let bias = add(&mut store, "bias", normal(rng, &[kn], 1.0));
            plain(
                store,
                Box::new(move |g, s| {
                    let (xv, kv, bv) = (g.param(s, x), g.param(s, kern), g.param(s, bias));
                    let y = g.conv2d(xv, kv, bv, stride, pad)?;
                    project(g, y, &w_out)
                }),
            )
        }
        "relu" | "softmax" => {
            let (b, c) = (rng.random_range(1..=4), rng.random_range(2..=6));
            let w_out = normal(rng, &[b, c], 1.0);
            let mut store = ParamStore::new();
            let x = add(&mut store, "x", normal(rng, &[b, c], 1.0));
            plain(
                store,
                Box::new(move |g, s| {
                    let xv = g.param(s, x);
                    let y = if op == "relu" { g.relu(xv) } else { g.softmax(xv)? };
                    project(g, y, &w_out)
                }),
            )
        }
        "softmax_cross_entropy" => {
            let (b, c) = (rng.random_range(1..=6), rng.random_range(2..=6));
            let y = labels(rng, b, c);
            let mut store = ParamStore::new();
            let x = add(&mut store, "logits", normal(rng, &[b, c], 2.0));
            plain(
                store,
                Box::new(move |g, s| {
                    let xv = g.param(s, x);
                    g.softmax_cross_entropy(xv, &y)
                }),
            )
        }
        "semantic_alignment_loss" | "separation_loss" | "csa_loss" => pair_instance(op, k, rng, mutation),
        "supcon_loss" => {
            let (b, z) = (rng.random_range(3..=8), rng.random_range(2..=6));
            let y = labels(rng, b, 2);
            let tau = rng.random_range(0.1..1.0);
            let mut store = ParamStore::new();
            let x = add(&mut store, "features", normal(rng, &[b, z], 1.0));
            plain(
                store,
                Box::new(move |g, s| {
                    let xv = g.param(s, x);
                    Ok(supcon_loss(g, xv, &y, tau)?.loss)
                }),
            )
        }
        "jsd_consistency" => {
            let (b, c) = (rng.random_range(1..=5), rng.random_range(2..=5));
            let mut store = ParamStore::new();
            let ids: Vec<_> = (0..3)
                .map(|v| add(&mut store, &format!("logits{v}"), normal(rng, &[b, c], 1.5)))
                .collect();
            plain(
                store,
                Box::new(move |g, s| {
                    let mut p = Vec::with_capacity(3);
                    for &id in &ids {
                        let l = g.param(s, id);
                        p.push(g.softmax(l)?);
                    }
                    jsd_consistency(g, p[0], p[1], p[2])
                }),
            )
        }
        "mixing_task_loss" | "mixing_total_loss" => {
            let model = tiny_model(rng);
            let b = rng.random_range(2..=5);
            let x = images(rng, b);
            let ya = labels(rng, b, 3);
            let mixed = MixedBatch {
                mixed_images: images(rng, b),
                labels_a: ya.clone(),
                labels_b: labels(rng, b, 3),
                lambda: rng.random_range(0.0..1.0),
            };
            let clean = ImageBatch::new(x, ya).expect("finite images");
            let cfg = objective(Mode::Mixing, rng);
            let shuffle_seed: u64 = rng.random();
            let (store, loss) = model_loss(model, move |g, m| {
                if op == "mixing_task_loss" {
                    mixing_task_loss(g, m, &mixed)
                } else {
                    let mut r = ChaCha8Rng::seed_from_u64(shuffle_seed);
                    Ok(mixing_total_loss(g, m, &mixed, &clean, &cfg, &mut r)?.total)
                }
            });
            plain(store, loss)
        }
        "consistency_total_loss" => {
            let model = tiny_model(rng);
            let b = rng.random_range(2..=5);
            let clean = ImageBatch::new(images(rng, b), labels(rng, b, 3)).expect("finite images");
            let batch = ConsistencyBatch {
                clean,
                aug1: images(rng, b),
                aug2: images(rng, b),
            };
            let cfg = objective(Mode::Consistency, rng);
            let shuffle_seed: u64 = rng.random();
            let (store, loss) = model_loss(model, move |g, m| {
                let mut r = ChaCha8Rng::seed_from_u64(shuffle_seed);
                Ok(consistency_total_loss(g, m, &batch, &cfg, &mut r)?.total)
            });
            plain(store, loss)
        }
        other => unreachable!("unknown operation {other}"),
    }
}

/// Draws instances until one keeps clear of every kink.
fn draw(op: &'static str, k: usize, rng: &mut ChaCha8Rng, mutation: Option<Mutation>) -> Result<Instance> {
    for _ in 0..1000 {
        let Some(inst) = instance(op, k, rng, mutation) else {
            continue;
        };
        let mut g = Graph::new();
        (inst.loss)(&mut g, &inst.store)?;
        if g.relu_margin().is_none_or(|m| m >= KINK_MARGIN) {
            return Ok(inst);
        }
    }
    Err(Error::Contract(format!("could not draw a kink-free instance for {op}")))
}

/// Checks one operation on `instances` random draws.
pub fn check_operation(op: &'static str, instances: usize, seed: u64, mutation: Option<Mutation>) -> Result<OpCheck> {
    let index = OPERATIONS
        .iter()
        .position(|o| *o == op)
        .ok_or_else(|| Error::Config(format!("unknown operation `{op}`")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut check = OpCheck {
        name: OPERATIONS[index],
        instances,
        failures: 0,
        max_relative_error: 0.0,
        hinge_active: 0,
        hinge_inactive: 0,
    };
    for k in 0..instances {
        let mut inst = draw(OPERATIONS[index], k, &mut rng, mutation)?;
        let report = finite_diff_gradcheck(&inst.loss, &mut inst.store, GRAD_STEP, GRAD_TOLERANCE)?;
        if !report.passed() {
            check.failures += 1;
        }
        let err = if report.non_finite.is_some() {
            f64::INFINITY
        } else {
            report.max_relative_error()
        };
        check.max_relative_error = check.max_relative_error.max(err);
        check.hinge_active += inst.hinge.0;
        check.hinge_inactive += inst.hinge.1;
    }
    Ok(check)
}

/// Runs every entry of [`OPERATIONS`] once.
pub fn gradcheck_suite(instances: usize, seed: u64, mutation: Option<Mutation>) -> Result<GradSuiteReport> {
    let checks = OPERATIONS
        .iter()
        .map(|op| check_operation(op, instances, seed, mutation))
        .collect::<Result<_>>()?;
    Ok(GradSuiteReport { checks })
}
