//! Contrastive semantic alignment: an alignment term pulling same-label
//! clean/augmented pairs together and a hinge separation term pushing
//! different-label pairs to at least the margin apart.
//!
//! Each term averages over the pairs it owns, and every pair belongs to
//! exactly one term according to label equality.

use super::pairing::{FeaturePairing, MarginConfig};
use crate::error::{dim_err, Result};
use crate::nn::{CustomOp, Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Alignment,
    Separation { margin: f64 },
}

/// Fused forward/backward of one CSA term over the pairs it owns.
struct PairTermOp {
    term: Term,
    pairs: Vec<(usize, usize)>,
}

fn diff_row(clean: &Tensor, aug: &Tensor, i: usize, j: usize) -> Vec<f64> {
    clean.row(i).iter().zip(aug.row(j)).map(|(c, a)| c - a).collect()
}

impl PairTermOp {
    fn value(&self, clean: &Tensor, aug: &Tensor) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .pairs
            .iter()
            .map(|&(i, j)| {
                let sq: f64 = diff_row(clean, aug, i, j).iter().map(|d| d * d).sum();
                match self.term {
                    Term::Alignment => 0.5 * sq,
                    Term::Separation { margin } => {
                        let gap = (margin - sq.sqrt()).max(0.0);
                        0.5 * gap * gap
                    }
                }
            })
            .sum();
        total / self.pairs.len() as f64
    }
}

impl CustomOp for PairTermOp {
    fn name(&self) -> &'static str {
        match self.term {
            Term::Alignment => "semantic_alignment_loss",
            Term::Separation { .. } => "separation_loss",
        }
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>> {
        let (clean, aug) = (inputs[0], inputs[1]);
        let mut dc = Tensor::zeros(clean.shape());
        let mut da = Tensor::zeros(aug.shape());
        if !self.pairs.is_empty() {
            let scale = grad_out.item() / self.pairs.len() as f64;
            let z = clean.row_len();
            for &(i, j) in &self.pairs {
                let diff = diff_row(clean, aug, i, j);
                // d(term)/d(clean_i) = coef * (clean_i - aug_j)
                let coef = match self.term {
                    Term::Alignment => 1.0,
                    Term::Separation { margin } => {
                        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                        // Coincident points have no defined push direction.
                        if dist >= margin || dist == 0.0 {
                            0.0
                        } else {
                            -(margin - dist) / dist
                        }
                    }
                };
                if coef == 0.0 {
                    continue;
                }
                let c = &mut dc.data_mut()[i * z..(i + 1) * z];
                for (g, d) in c.iter_mut().zip(&diff) {
                    *g += scale * coef * d;
                }
                let a = &mut da.data_mut()[j * z..(j + 1) * z];
                for (g, d) in a.iter_mut().zip(&diff) {
                    *g -= scale * coef * d;
                }
            }
        }
        vec![Some(dc), Some(da)]
    }
}

fn check_widths(graph: &Graph, pairing: &FeaturePairing) -> Result<()> {
    let (c, a) = (
        graph.value(pairing.clean_features()),
        graph.value(pairing.aug_features()),
    );
    if c.ndim() != 2 || a.ndim() != 2 || c.shape()[1] != a.shape()[1] {
        return Err(dim_err(
            "csa_loss",
            format!("embedding widths differ: {:?} vs {:?}", c.shape(), a.shape()),
        ));
    }
    Ok(())
}

fn pair_term(graph: &mut Graph, pairing: &FeaturePairing, term: Term) -> Result<Var> {
    check_widths(graph, pairing)?;
    let want_same = term == Term::Alignment;
    let pairs: Vec<(usize, usize)> = (0..pairing.len())
        .filter(|&i| pairing.same_label(i) == want_same)
        .map(|i| (i, pairing.permutation()[i]))
        .collect();
    let op = PairTermOp { term, pairs };
    let value = op.value(
        graph.value(pairing.clean_features()),
        graph.value(pairing.aug_features()),
    );
    Ok(graph.custom(
        &[pairing.clean_features(), pairing.aug_features()],
        Tensor::scalar(value),
        Box::new(op),
    ))
}

/// Mean of `0.5 * ||g(x_i) - g(x_j^aug)||^2` over same-label pairs; zero when
/// there are none.
pub fn semantic_alignment_loss(graph: &mut Graph, pairing: &FeaturePairing) -> Result<Var> {
    pair_term(graph, pairing, Term::Alignment)
}

/// Mean of `0.5 * max(0, m - ||g(x_i) - g(x_j^aug)||)^2` over different-label
/// pairs; zero when there are none.
pub fn separation_loss(graph: &mut Graph, pairing: &FeaturePairing, cfg: MarginConfig) -> Result<Var> {
    pair_term(graph, pairing, Term::Separation { margin: cfg.margin() })
}

/// The two CSA terms and their sum.
#[derive(Debug, Clone, Copy)]
pub struct CsaTerms {
    pub alignment: Var,
    pub separation: Var,
    pub total: Var,
}

pub fn csa_terms(graph: &mut Graph, pairing: &FeaturePairing, cfg: MarginConfig) -> Result<CsaTerms> {
    let alignment = semantic_alignment_loss(graph, pairing)?;
    let separation = separation_loss(graph, pairing, cfg)?;
    let total = graph.add(alignment, separation)?;
    Ok(CsaTerms {
        alignment,
        separation,
        total,
    })
}

pub fn csa_loss(graph: &mut Graph, pairing: &FeaturePairing, cfg: MarginConfig) -> Result<Var> {
    Ok(csa_terms(graph, pairing, cfg)?.total)
}
