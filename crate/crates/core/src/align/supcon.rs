//! Supervised contrastive loss, used as a baseline alignment objective.

use crate::error::{contract, dim_err, Result};
use crate::nn::{CustomOp, Graph, Tensor, Var};

/// Default softmax temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SupConOutput {
    pub loss: Var,
    /// Number of anchors with at least one positive. Zero means the loss is
    /// a constant zero and carries no gradient.
    pub anchors: usize,
}

impl SupConOutput {
    pub fn no_positives(&self) -> bool {
        self.anchors == 0
    }
}

struct SupConOp {
    labels: Vec<usize>,
    temperature: f64,
}

struct Forward {
    normalized: Vec<Vec<f64>>,
    norms: Vec<f64>,
    /// `coeff[i][j]`: d(loss)/d(sim_ij) where `sim_ij = z_i . z_j / temperature`.
    coeff: Vec<Vec<f64>>,
    loss: f64,
    anchors: usize,
}

impl SupConOp {
    fn forward(&self, x: &Tensor) -> Forward {
        let b = x.rows();
        let norms: Vec<f64> = (0..b)
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS))
            .collect();
        let normalized: Vec<Vec<f64>> = (0..b)
            .map(|i| x.row(i).iter().map(|v| v / norms[i]).collect())
            .collect();
        let sim = |i: usize, j: usize| -> f64 {
            normalized[i]
                .iter()
                .zip(&normalized[j])
                .map(|(a, c)| a * c)
                .sum::<f64>()
                / self.temperature
        };
        let mut coeff = vec![vec![0.0; b]; b];
        let mut total = 0.0;
        let mut anchors = 0;
        for i in 0..b {
            let positives: Vec<usize> = (0..b).filter(|&p| p != i && self.labels[p] == self.labels[i]).collect();
            if positives.is_empty() {
                continue;
            }
            anchors += 1;
            let sims: Vec<f64> = (0..b).map(|j| if j == i { 0.0 } else { sim(i, j) }).collect();
            let max = (0..b)
                .filter(|&j| j != i)
                .map(|j| sims[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..b).filter(|&j| j != i).map(|j| (sims[j] - max).exp()).sum();
            let lse = max + denom.ln();
            let np = positives.len() as f64;
            total += positives.iter().map(|&p| lse - sims[p]).sum::<f64>() / np;
            for j in (0..b).filter(|&j| j != i) {
                coeff[i][j] = (sims[j] - lse).exp();
            }
            for &p in &positives {
                coeff[i][p] -= 1.0 / np;
            }
        }
        if anchors > 0 {
            let a = anchors as f64;
            coeff.iter_mut().flatten().for_each(|c| *c /= a);
            total /= a;
        }
        Forward {
            normalized,
            norms,
            coeff,
            loss: total,
            anchors,
        }
    }
}

impl CustomOp for SupConOp {
    fn name(&self) -> &'static str {
        "supcon_loss"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let fwd = self.forward(x);
        let (b, z) = (x.rows(), x.row_len());
        let g = grad_out.item() / self.temperature;
        let mut dz = vec![vec![0.0; z]; b];
        for i in 0..b {
            for j in 0..b {
                let c = fwd.coeff[i][j];
                if c == 0.0 {
                    continue;
                }
                for k in 0..z {
                    dz[i][k] += g * c * fwd.normalized[j][k];
                    dz[j][k] += g * c * fwd.normalized[i][k];
                }
            }
        }
        let mut dx = Vec::with_capacity(b * z);
        for i in 0..b {
            let zi = &fwd.normalized[i];
            let dot: f64 = zi.iter().zip(&dz[i]).map(|(a, c)| a * c).sum();
            dx.extend(zi.iter().zip(&dz[i]).map(|(zv, dv)| (dv - zv * dot) / fwd.norms[i]));
        }
        vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("shape"))]
    }
}

/// SupCon over L2-normalised rows of `features`: for each anchor, the mean
/// over its same-label positives of `-log softmax` of the positive's
/// similarity among all other samples, averaged over anchors that have a
/// positive.
pub fn supcon_loss(graph: &mut Graph, features: Var, labels: &[usize], temperature: f64) -> Result<SupConOutput> {
    let x = graph.value(features);
    if x.ndim() != 2 || x.rows() != labels.len() {
        return Err(dim_err(
            "supcon_loss",
            format!("features {:?} with {} labels", x.shape(), labels.len()),
        ));
    }
    if x.rows() < 2 {
        return Err(contract("supcon_loss needs at least two samples"));
    }
    if !(temperature > 0.0) {
        return Err(contract(format!("temperature must be positive, got {temperature}")));
    }
    let op = SupConOp {
        labels: labels.to_vec(),
        temperature,
    };
    let fwd = op.forward(x);
    if fwd.anchors == 0 {
        log::warn!("supcon_loss: no sample has a same-label partner; loss is zero");
    }
    let loss = graph.custom(&[features], Tensor::scalar(fwd.loss), Box::new(op));
    Ok(SupConOutput {
        loss,
        anchors: fwd.anchors,
    })
}
