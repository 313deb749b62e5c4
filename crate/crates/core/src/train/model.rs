use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Graph, Layer, Linear, Module, ParamStore, Sequential, Tensor, Var};

/// Architecture of the feature extractor. The classifier is always a single
/// linear layer on the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Flatten, then `Linear + ReLU` per hidden width, then the embedding.
    Mlp { hidden: Vec<usize>, embedding: usize },
    /// 3x3 conv + ReLU per entry of `channels`; the first keeps resolution,
    /// later ones use stride 2. Then flatten and a linear embedding.
    SmallCnn { channels: Vec<usize>, embedding: usize },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::SmallCnn {
            channels: vec![8, 16],
            embedding: 16,
        }
    }
}

/// Model `f(x) = h(g(x))`: extractor `g` producing the embedding that the
/// alignment losses act on, and linear classifier `h`.
#[derive(Debug, Clone)]
pub struct ModelSplit {
    pub params: ParamStore,
    pub extractor: Sequential,
    pub classifier: Linear,
    pub embedding: usize,
}

impl ModelSplit {
    pub fn build(spec: &ModelSpec, input: (usize, usize, usize), classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let (c, h, w) = input;
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let embedding = match spec {
            ModelSpec::Mlp { hidden, embedding } => {
                layers.push(Layer::Flatten);
                let mut width = c * h * w;
                for (i, &hdim) in hidden.iter().enumerate() {
                    layers.push(Layer::Linear(Linear::new(
                        &mut params,
                        &format!("g.fc{i}"),
                        width,
                        hdim,
                        rng,
                    )?));
                    layers.push(Layer::Relu);
                    width = hdim;
                }
                layers.push(Layer::Linear(Linear::new(
                    &mut params,
                    "g.embed",
                    width,
                    *embedding,
                    rng,
                )?));
                *embedding
            }
            ModelSpec::SmallCnn { channels, embedding } => {
                let (mut ch, mut hh, mut ww) = (c, h, w);
                for (i, &out) in channels.iter().enumerate() {
                    let stride = if i == 0 { 1 } else { 2 };
                    layers.push(Layer::Conv2d(Conv2d::new(
                        &mut params,
                        &format!("g.conv{i}"),
                        ch,
                        out,
                        3,
                        stride,
                        1,
                        rng,
                    )?));
                    layers.push(Layer::Relu);
                    ch = out;
                    hh = (hh + 2 - 3) / stride + 1;
                    ww = (ww + 2 - 3) / stride + 1;
                }
                layers.push(Layer::Flatten);
                layers.push(Layer::Linear(Linear::new(
                    &mut params,
                    "g.embed",
                    ch * hh * ww,
                    *embedding,
                    rng,
                )?));
                *embedding
            }
        };
        if embedding == 0 {
            return Err(Error::Config("embedding width must be positive".into()));
        }
        layers.push(Layer::Relu);
        let classifier = Linear::new(&mut params, "h.fc", embedding, classes, rng)?;
        Ok(Self {
            params,
            extractor: Sequential::new(layers),
            classifier,
            embedding,
        })
    }

    /// `g(x)`.
    pub fn features(&self, graph: &mut Graph, input: Var) -> Result<Var> {
        self.extractor.forward(graph, &self.params, input)
    }

    /// `h(z)`.
    pub fn classify(&self, graph: &mut Graph, features: Var) -> Result<Var> {
        self.classifier.forward(graph, &self.params, features)
    }

    /// `(g(x), h(g(x)))` from one pass.
    pub fn forward(&self, graph: &mut Graph, input: Var) -> Result<(Var, Var)> {
        let z = self.features(graph, input)?;
        let logits = self.classify(graph, z)?;
        Ok((z, logits))
    }

    fn chunked(&self, images: &Tensor, mut f: impl FnMut(&Graph, Var, Var)) -> Result<()> {
        const CHUNK: usize = 256;
        let n = images.rows();
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let mut g = Graph::new();
            let x = g.constant(images.select_rows(&idx));
            let (z, logits) = self.forward(&mut g, x)?;
            f(&g, z, logits);
            start = end;
        }
        Ok(())
    }

    /// Top-1 class per image.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(images.rows());
        self.chunked(images, |g, _, logits| out.extend(g.value(logits).argmax_rows()))?;
        Ok(out)
    }

    /// Embeddings `g(x)` as a `[N, embedding]` tensor.
    pub fn embed(&self, images: &Tensor) -> Result<Tensor> {
        let mut data = Vec::with_capacity(images.rows() * self.embedding);
        self.chunked(images, |g, z, _| data.extend_from_slice(g.value(z).data()))?;
        Tensor::new(vec![images.rows(), self.embedding], data)
    }
}
