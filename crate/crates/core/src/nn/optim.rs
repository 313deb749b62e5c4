use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{contract, Result};

fn gradients(store: &ParamStore) -> Result<Vec<(ParamId, &Tensor)>> {
    store
        .ids()
        .map(|id| {
            store
                .grad(id)
                .map(|g| (id, g))
                .ok_or_else(|| contract(format!("parameter `{}` has no gradient", store.get(id).name())))
        })
        .collect()
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
/// `v <- momentum * v + grad + weight_decay * param`, `param <- param - lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
    steps: u64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let grads: Vec<(ParamId, Tensor)> = gradients(store)?.into_iter().map(|(id, g)| (id, g.clone())).collect();
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|(_, g)| Tensor::zeros(g.shape())).collect();
        }
        for ((id, grad), v) in grads.into_iter().zip(&mut self.velocity) {
            let param = store.value_mut(id);
            for ((vv, g), p) in v.data_mut().iter_mut().zip(grad.data()).zip(param.data_mut()) {
                *vv = self.momentum * *vv + g + self.weight_decay * *p;
                *p -= self.lr * *vv;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Bias-corrected Adam. Weight decay is classic L2 added to the gradient,
/// not the decoupled AdamW form.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let grads: Vec<(ParamId, Tensor)> = gradients(store)?.into_iter().map(|(id, g)| (id, g.clone())).collect();
        if self.first.is_empty() {
            self.first = grads.iter().map(|(_, g)| Tensor::zeros(g.shape())).collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((id, grad), m), v) in grads.into_iter().zip(&mut self.first).zip(&mut self.second) {
            let param = store.value_mut(id);
            for (((mm, vv), g), p) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut())
                .zip(grad.data())
                .zip(param.data_mut())
            {
                let g = g + self.weight_decay * *p;
                *mm = self.beta1 * *mm + (1.0 - self.beta1) * g;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                let m_hat = *mm / c1;
                let v_hat = *vv / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(store),
            Optimizer::Adam(o) => o.step(store),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd(o) => o.lr = lr,
            Optimizer::Adam(o) => o.lr = lr,
        }
    }

    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Sgd(o) => o.steps(),
            Optimizer::Adam(o) => o.steps(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_with(values: &[f64], grads: &[f64]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s
            .add("p", Tensor::new(vec![values.len()], values.to_vec()).unwrap())
            .unwrap();
        s.set_grad(id, Tensor::new(vec![grads.len()], grads.to_vec()).unwrap());
        (s, id)
    }

    #[test]
    fn vanilla_sgd_is_exact() {
        let (mut s, id) = store_with(&[1.0, -2.0], &[0.5, 0.25]);
        let mut opt = Sgd::new(0.1, 0.0, 0.0);
        opt.step(&mut s).unwrap();
        assert_eq!(s.value(id).data(), &[1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn momentum_two_step_displacement() {
        // v1 = g, v2 = 0.9 g + g, so the total move is lr * g * (1 + 1.9).
        let (mut s, id) = store_with(&[0.0], &[2.0]);
        let mut opt = Sgd::new(0.1, 0.9, 0.0);
        opt.step(&mut s).unwrap();
        opt.step(&mut s).unwrap();
        let expected = -0.1 * 2.0 * (1.0 + 1.9);
        assert!((s.value(id).item() - expected).abs() < 1e-12);
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn momentum_coasts_on_zero_gradient() {
        let (mut s, id) = store_with(&[0.0], &[1.0]);
        let mut opt = Sgd::new(0.5, 0.9, 0.0);
        opt.step(&mut s).unwrap();
        let before = s.value(id).item();
        let v = opt.velocity()[0].item();
        s.set_grad(id, Tensor::zeros(&[1]));
        opt.step(&mut s).unwrap();
        let moved = s.value(id).item() - before;
        assert!((moved - (-0.5 * 0.9 * v)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(Sgd::new(0.1, 0.9, 0.0).step(&mut s).is_err());
        assert!(Adam::new(0.1, 0.9, 0.999, 1e-8, 0.0).step(&mut s).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for g in [1e-3, 0.7, -5.0, 123.0] {
            let (mut s, id) = store_with(&[1.0], &[g]);
            let mut opt = Adam::new(0.01, 0.9, 0.999, 1e-8, 0.0);
            opt.step(&mut s).unwrap();
            let moved = 1.0 - s.value(id).item();
            assert!((moved.abs() - 0.01).abs() < 1e-3 * 0.01, "g={g} moved={moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_noop() {
        let (mut s, id) = store_with(&[0.3, -0.4], &[0.0, 0.0]);
        let mut opt = Adam::new(0.01, 0.9, 0.999, 1e-8, 0.0);
        opt.step(&mut s).unwrap();
        assert_eq!(s.value(id).data(), &[0.3, -0.4]);
    }

    /// Scalar Adam written out directly from the update rule.
    fn scalar_adam(p0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64, wd: f64) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for (t, &g0) in grads.iter().enumerate() {
            let g = g0 + wd * p;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn adam_matches_scalar_reference_over_ten_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let p0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::new(vec![n], p0.clone()).unwrap()).unwrap();
        let mut opt = Adam::new(1e-3, 0.9, 0.999, 1e-8, 5e-4);
        for g in &grads {
            s.set_grad(id, Tensor::new(vec![n], g.clone()).unwrap());
            opt.step(&mut s).unwrap();
        }
        for i in 0..n {
            let per: Vec<f64> = grads.iter().map(|g| g[i]).collect();
            let expected = scalar_adam(p0[i], &per, 1e-3, 0.9, 0.999, 1e-8, 5e-4);
            assert!((s.value(id).data()[i] - expected).abs() <= 1e-9);
        }
        assert_eq!(opt.steps(), 10);
    }
}
