//! Brute-force reference implementations shared by the integration tests and
//! the acceptance runner. Everything here works on plain nested vectors and
//! spells out the double loops, so it shares no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use csa_core::nn::Tensor;
use rand::Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(t: &Tensor) -> Rows {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn random_rows(rng: &mut impl Rng, b: usize, z: usize, scale: f64) -> Rows {
    (0..b)
        .map(|_| (0..z).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn random_labels(rng: &mut impl Rng, b: usize, classes: usize) -> Vec<usize> {
    (0..b).map(|_| rng.random_range(0..classes)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]).powi(2);
    }
    s.sqrt()
}

/// Pairs `(i, j)` with `j = perm[i]`, found by scanning all `B x B` cells.
fn pairs(perm: &[usize], labels_clean: &[usize], labels_aug: &[usize], same: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..perm.len() {
        for j in 0..perm.len() {
            if perm[i] == j && (labels_clean[i] == labels_aug[j]) == same {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn alignment(clean: &Rows, aug: &Rows, labels_clean: &[usize], labels_aug: &[usize], perm: &[usize]) -> f64 {
    let p = pairs(perm, labels_clean, labels_aug, true);
    if p.is_empty() {
        return 0.0;
    }
    p.iter()
        .map(|&(i, j)| 0.5 * distance(&clean[i], &aug[j]).powi(2))
        .sum::<f64>()
        / p.len() as f64
}

pub fn separation(
    clean: &Rows,
    aug: &Rows,
    labels_clean: &[usize],
    labels_aug: &[usize],
    perm: &[usize],
    margin: f64,
) -> f64 {
    let p = pairs(perm, labels_clean, labels_aug, false);
    if p.is_empty() {
        return 0.0;
    }
    p.iter()
        .map(|&(i, j)| {
            let d = distance(&clean[i], &aug[j]);
            let h = if margin > d { margin - d } else { 0.0 };
            0.5 * h * h
        })
        .sum::<f64>()
        / p.len() as f64
}

pub fn csa(clean: &Rows, aug: &Rows, labels: &[usize], perm: &[usize], margin: f64) -> f64 {
    alignment(clean, aug, labels, labels, perm) + separation(clean, aug, labels, labels, perm, margin)
}

pub fn supcon(features: &Rows, labels: &[usize], temperature: f64) -> f64 {
    let b = features.len();
    let unit: Rows = features
        .iter()
        .map(|f| {
            let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            f.iter().map(|v| v / n).collect()
        })
        .collect();
    let sim = |i: usize, j: usize| unit[i].iter().zip(&unit[j]).map(|(a, c)| a * c).sum::<f64>() / temperature;
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..b {
        let mut denom = 0.0;
        for j in 0..b {
            if j != i {
                denom += sim(i, j).exp();
            }
        }
        let mut sum = 0.0;
        let mut count = 0;
        for p in 0..b {
            if p != i && labels[p] == labels[i] {
                sum += -(sim(i, p).exp() / denom).ln();
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            anchors += 1;
        }
    }
    if anchors == 0 {
        0.0
    } else {
        total / anchors as f64
    }
}

pub fn softmax(rows: &Rows) -> Rows {
    rows.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn cross_entropy(logits: &Rows, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in logits.iter().zip(labels) {
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - r[y];
    }
    total / logits.len() as f64
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..p.len() {
        if p[k] > 0.0 {
            s += p[k] * (p[k].max(1e-12).ln() - q[k].max(1e-12).ln());
        }
    }
    s
}

pub fn jsd(p: &Rows, p1: &Rows, p2: &Rows) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        let m: Vec<f64> = (0..p[i].len()).map(|k| (p[i][k] + p1[i][k] + p2[i][k]) / 3.0).collect();
        total += (kl(&p[i], &m) + kl(&p1[i], &m) + kl(&p2[i], &m)) / 3.0;
    }
    total / p.len() as f64
}

/// Mean distances over all `B x B` cross pairs, split by label equality.
pub fn pair_stats(clean: &Rows, aug: &Rows, labels_clean: &[usize], labels_aug: &[usize]) -> (f64, f64) {
    let (mut same, mut ns, mut diff, mut nd) = (0.0, 0, 0.0, 0);
    for i in 0..clean.len() {
        for j in 0..aug.len() {
            let d = distance(&clean[i], &aug[j]);
            if labels_clean[i] == labels_aug[j] {
                same += d;
                ns += 1;
            } else {
                diff += d;
                nd += 1;
            }
        }
    }
    (
        if ns == 0 { 0.0 } else { same / ns as f64 },
        if nd == 0 { 0.0 } else { diff / nd as f64 },
    )
}

/// Reference Fisher-Yates: for `i` from `n - 1` down to 1, swap `i` with a
/// uniform index in `0..=i`.
pub fn fisher_yates(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    let mut i = n;
    while i > 1 {
        i -= 1;
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Raw output of a model forward pass, read out of a scratch graph.
pub struct Forward {
    pub features: Rows,
    pub logits: Rows,
}

pub fn forward(model: &csa_core::train::ModelSplit, images: &Tensor) -> Forward {
    let mut g = csa_core::nn::Graph::new();
    let x = g.constant(images.clone());
    let (z, logits) = model.forward(&mut g, x).expect("forward");
    Forward {
        features: rows_of(g.value(z)),
        logits: rows_of(g.value(logits)),
    }
}

/// Mixing total: `(1 - gamma) * (lambda CE_a + (1 - lambda) CE_b) + gamma * CSA`,
/// with the augmented side labelled `y_a` and paired through `perm`.
pub fn mixing_total(
    model: &csa_core::train::ModelSplit,
    mixed: &csa_core::augment::MixedBatch,
    clean: &csa_core::augment::ImageBatch,
    gamma: f64,
    margin: f64,
    perm: &[usize],
) -> f64 {
    let aug = forward(model, &mixed.mixed_images);
    let cl = forward(model, clean.images());
    let task = mixed.lambda * cross_entropy(&aug.logits, &mixed.labels_a)
        + (1.0 - mixed.lambda) * cross_entropy(&aug.logits, &mixed.labels_b);
    (1.0 - gamma) * task + gamma * csa(&cl.features, &aug.features, &mixed.labels_a, perm, margin)
}

/// Consistency total:
/// `(1 - gamma) * (CE + w * JSD) + gamma / 2 * (CSA(aug1) + CSA(aug2))`.
pub fn consistency_total(
    model: &csa_core::train::ModelSplit,
    batch: &csa_core::augment::ConsistencyBatch,
    gamma: f64,
    jsd_weight: f64,
    margin: f64,
    perms: [&[usize]; 2],
) -> f64 {
    let y = batch.clean.labels();
    let f = forward(model, batch.clean.images());
    let f1 = forward(model, &batch.aug1);
    let f2 = forward(model, &batch.aug2);
    let task =
        cross_entropy(&f.logits, y) + jsd_weight * jsd(&softmax(&f.logits), &softmax(&f1.logits), &softmax(&f2.logits));
    let align =
        csa(&f.features, &f1.features, y, perms[0], margin) + csa(&f.features, &f2.features, y, perms[1], margin);
    (1.0 - gamma) * task + gamma / 2.0 * align
}

/// Random MLP on `1 x 3 x 3` images with embedding width `z`.
pub fn tiny_model(rng: &mut impl Rng, z: usize, classes: usize) -> csa_core::train::ModelSplit {
    let spec = csa_core::train::ModelSpec::Mlp {
        hidden: vec![5],
        embedding: z,
    };
    csa_core::train::ModelSplit::build(&spec, (1, 3, 3), classes, rng).expect("model")
}

pub fn tiny_batch(rng: &mut impl Rng, b: usize, classes: usize) -> csa_core::augment::ImageBatch {
    let data = (0..b * 9).map(|_| rng.random_range(0.0..=1.0)).collect();
    let labels = random_labels(rng, b, classes);
    csa_core::augment::ImageBatch::new(Tensor::new(vec![b, 1, 3, 3], data).unwrap(), labels).unwrap()
}
