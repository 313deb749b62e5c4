//! Minimal reverse-mode autodiff engine: tensors, a tape, layers,
//! optimizers, learning-rate schedules and a finite-difference checker.

mod gradcheck;
mod graph;
mod kernels;
mod layers;
mod optim;
mod param;
mod schedule;
mod tensor;

pub use gradcheck::{finite_diff_gradcheck, relative_error, GradcheckReport, ParamCheck, RELATIVE_FLOOR};
pub use graph::{CustomOp, Graph, Var};
pub use layers::{Conv2d, Layer, Linear, Module, Sequential};
pub use optim::{Adam, Optimizer, Sgd};
pub use param::{ParamId, ParamStore, Parameter};
pub use schedule::{cosine_anneal_lr, step_decay_lr, Schedule};
pub use tensor::Tensor;

struct SquareSum;

impl CustomOp for SquareSum {
    fn name(&self) -> &'static str {
        "square_sum"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>> {
        let g = grad_out.item();
        vec![Some(inputs[0].map(|v| 2.0 * g * v))]
    }
}

/// Sum of squared elements, as a scalar.
pub fn square_sum(graph: &mut Graph, x: Var) -> Var {
    let value = graph.value(x).data().iter().map(|v| v * v).sum();
    graph.custom(&[x], Tensor::scalar(value), Box::new(SquareSum))
}
