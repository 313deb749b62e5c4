use rand::Rng;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

/// A differentiable function of one input with parameters held in a
/// [`ParamStore`].
pub trait Module {
    fn forward(&self, graph: &mut Graph, store: &ParamStore, input: Var) -> Result<Var>;

    fn parameters(&self) -> Vec<ParamId>;
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    /// Uniform init in `±1/sqrt(in_features)` for weights and bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (in_features.max(1) as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            uniform(rng, &[in_features, out_features], bound),
        )?;
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[out_features], bound))?;
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }
}

impl Module for Linear {
    fn forward(&self, graph: &mut Graph, store: &ParamStore, input: Var) -> Result<Var> {
        let w = graph.param(store, self.weight);
        let b = graph.param(store, self.bias);
        graph.linear(input, w, b)
    }

    fn parameters(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        ksize: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = in_channels * ksize * ksize;
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let kernel = store.add(
            format!("{name}.kernel"),
            uniform(rng, &[out_channels, in_channels, ksize, ksize], bound),
        )?;
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[out_channels], bound))?;
        Ok(Self {
            kernel,
            bias,
            stride,
            padding,
        })
    }
}

impl Module for Conv2d {
    fn forward(&self, graph: &mut Graph, store: &ParamStore, input: Var) -> Result<Var> {
        let k = graph.param(store, self.kernel);
        let b = graph.param(store, self.bias);
        graph.conv2d(input, k, b, self.stride, self.padding)
    }

    fn parameters(&self) -> Vec<ParamId> {
        vec![self.kernel, self.bias]
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    Conv2d(Conv2d),
    Relu,
    Flatten,
}

impl Module for Layer {
    fn forward(&self, graph: &mut Graph, store: &ParamStore, input: Var) -> Result<Var> {
        match self {
            Layer::Linear(l) => l.forward(graph, store, input),
            Layer::Conv2d(c) => c.forward(graph, store, input),
            Layer::Relu => Ok(graph.relu(input)),
            Layer::Flatten => graph.flatten(input),
        }
    }

    fn parameters(&self) -> Vec<ParamId> {
        match self {
            Layer::Linear(l) => l.parameters(),
            Layer::Conv2d(c) => c.parameters(),
            Layer::Relu | Layer::Flatten => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }
}

impl Module for Sequential {
    fn forward(&self, graph: &mut Graph, store: &ParamStore, input: Var) -> Result<Var> {
        self.layers
            .iter()
            .try_fold(input, |x, layer| layer.forward(graph, store, x))
    }

    fn parameters(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Module::parameters).collect()
    }
}
