//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::param::ParamStore;
use crate::error::Result;

/// Gradient components smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Relative discrepancy between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    /// Set when the loss was not finite at the base point or a probe.
    pub non_finite: Option<String>,
}

impl GradcheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.non_finite.is_none() && self.params.iter().all(|p| p.max_relative_error <= self.tolerance)
    }
}

fn eval<F>(loss_fn: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let root = loss_fn(&mut g, store)?;
    Ok(g.value(root).item())
}

/// Compares the backward pass of `loss_fn` against central differences for
/// every element of every parameter in `params`. Parameter values are
/// restored before returning.
pub fn finite_diff_gradcheck<F>(
    loss_fn: F,
    params: &mut ParamStore,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let root = loss_fn(&mut g, params)?;
    let mut report = GradcheckReport {
        tolerance,
        params: Vec::new(),
        non_finite: None,
    };
    if !g.value(root).item().is_finite() {
        report.non_finite = Some("loss at base point".into());
        return Ok(report);
    }
    g.backward(root)?;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let analytic: Vec<f64> = g
            .bindings()
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, v)| g.grad(v))
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; params.value(id).len()]);
        let mut worst = 0.0f64;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + step;
            let plus = eval(&loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig - step;
            let minus = eval(&loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                report.non_finite = Some(format!("{}[{k}]", params.get(id).name()));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(a, numeric));
        }
        report.params.push(ParamCheck {
            name: params.get(id).name().to_string(),
            elements: analytic.len(),
            max_relative_error: worst,
        });
    }
    Ok(report)
}
