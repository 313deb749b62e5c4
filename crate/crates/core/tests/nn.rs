mod common;

use csa_core::nn::{cosine_anneal_lr, finite_diff_gradcheck, step_decay_lr, Adam, Graph, ParamStore, Sgd, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

#[test]
fn linear_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[3, 4], 2.0);
    let w = random_tensor(&mut rng, &[4, 2], 2.0);
    let b = random_tensor(&mut rng, &[2], 2.0);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
    let y = g.linear(xv, wv, bv).unwrap();
    let out = g.value(y);
    assert_eq!(out.shape(), &[3, 2]);
    for r in 0..3 {
        for o in 0..2 {
            let mut s = b.data()[o];
            for i in 0..4 {
                s += x.data()[r * 4 + i] * w.data()[i * 2 + o];
            }
            assert!((out.data()[r * 2 + o] - s).abs() < 1e-12);
        }
    }
}

fn conv_oracle(x: &Tensor, k: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (kn, ks) = (k.shape()[0], k.shape()[2]);
    let oh = (h + 2 * pad - ks) / stride + 1;
    let ow = (w + 2 * pad - ks) / stride + 1;
    let mut out = vec![0.0; b * kn * oh * ow];
    for n in 0..b {
        for o in 0..kn {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = bias.data()[o];
                    for ch in 0..c {
                        for ky in 0..ks {
                            for kx in 0..ks {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((n * c + ch) * h + iy as usize) * w + ix as usize;
                                let ki = ((o * c + ch) * ks + ky) * ks + kx;
                                s += x.data()[xi] * k.data()[ki];
                            }
                        }
                    }
                    out[((n * kn + o) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    (vec![b, kn, oh, ow], out)
}

#[test]
fn conv2d_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (3, 2)] {
        let x = random_tensor(&mut rng, &[2, 3, 8, 8], 1.0);
        let k = random_tensor(&mut rng, &[4, 3, 3, 3], 1.0);
        let b = random_tensor(&mut rng, &[4], 1.0);
        let mut g = Graph::new();
        let (xv, kv, bv) = (g.constant(x.clone()), g.constant(k.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, kv, bv, stride, pad).unwrap();
        let (shape, want) = conv_oracle(&x, &k, &b, stride, pad);
        assert_eq!(g.value(y).shape(), shape.as_slice());
        for (a, e) in g.value(y).data().iter().zip(&want) {
            assert!((a - e).abs() < 1e-6);
        }
    }
}

#[test]
fn relu_matches_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[5, 7], 2.0);
    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let y = g.relu(xv);
    for (a, v) in g.value(y).data().iter().zip(x.data()) {
        assert_eq!(*a, v.max(0.0));
    }
}

#[test]
fn cross_entropy_matches_log_sum_exp() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let logits = random_tensor(&mut rng, &[4, 5], 3.0);
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
        let mut g = Graph::new();
        let l = g.constant(logits.clone());
        let ce = g.softmax_cross_entropy(l, &labels).unwrap();
        let want = common::cross_entropy(&common::rows_of(&logits), &labels);
        assert!((g.value(ce).item() - want).abs() < 1e-12);
    }
    let mut g = Graph::new();
    let l = g.constant(Tensor::full(&[3, 7], 0.4));
    let ce = g.softmax_cross_entropy(l, &[0, 3, 6]).unwrap();
    assert!((g.value(ce).item() - 7f64.ln()).abs() < 1e-9);
    let l = g.constant(Tensor::zeros(&[1, 2]));
    assert!(g.softmax_cross_entropy(l, &[2]).is_err());
}

#[test]
fn quadratic_gradcheck_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let p = store.add("p", random_tensor(&mut rng, &[6], 2.0)).unwrap();
    let report = finite_diff_gradcheck(
        |g, s| {
            let v = g.param(s, p);
            let sq = csa_core::nn::square_sum(g, v);
            Ok(g.scale(sq, 0.5))
        },
        &mut store,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.max_relative_error() <= 1e-7, "{report:?}");
}

#[test]
fn network_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let k = store.add("k", random_tensor(&mut rng, &[2, 1, 3, 3], 1.0)).unwrap();
    let kb = store.add("kb", random_tensor(&mut rng, &[2], 1.0)).unwrap();
    let w = store.add("w", random_tensor(&mut rng, &[8, 3], 1.0)).unwrap();
    let wb = store.add("wb", random_tensor(&mut rng, &[3], 1.0)).unwrap();
    let x = random_tensor(&mut rng, &[2, 1, 4, 4], 2.0);
    let report = finite_diff_gradcheck(
        |g, s| {
            let xv = g.constant(x.clone());
            let (kv, kbv, wv, wbv) = (g.param(s, k), g.param(s, kb), g.param(s, w), g.param(s, wb));
            let h = g.conv2d(xv, kv, kbv, 2, 1)?;
            let h = g.relu(h);
            let h = g.flatten(h)?;
            let logits = g.linear(h, wv, wbv)?;
            g.softmax_cross_entropy(logits, &[0, 2])
        },
        &mut store,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn optimizers_are_deterministic() {
    let run = |adam: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let id = store.add("p", random_tensor(&mut rng, &[4], 1.0)).unwrap();
        let mut sgd = Sgd::new(0.1, 0.9, 5e-4);
        let mut ad = Adam::new(0.01, 0.9, 0.999, 1e-8, 0.0);
        for _ in 0..10 {
            store.set_grad(id, random_tensor(&mut rng, &[4], 1.0));
            if adam {
                ad.step(&mut store).unwrap();
            } else {
                sgd.step(&mut store).unwrap();
            }
        }
        assert_eq!(if adam { ad.steps() } else { sgd.steps() }, 10);
        store.value(id).data().to_vec()
    };
    for adam in [false, true] {
        assert_eq!(run(adam), run(adam));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn second_backward_doubles_gradient(seed in any::<u64>(), b in 1usize..5, d in 1usize..5, o in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.constant(random_tensor(&mut rng, &[b, d], 2.0));
        let w = g.variable(random_tensor(&mut rng, &[d, o], 2.0));
        let bias = g.variable(random_tensor(&mut rng, &[o], 2.0));
        let y = g.linear(x, w, bias).unwrap();
        let y = g.relu(y);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..o)).collect();
        let l = g.softmax_cross_entropy(y, &labels).unwrap();
        g.backward(l).unwrap();
        let once = g.grad(w).unwrap().clone();
        g.backward(l).unwrap();
        for (a, e) in g.grad(w).unwrap().data().iter().zip(once.data()) {
            prop_assert_eq!(*a, 2.0 * e);
        }
    }

    #[test]
    fn gradients_finite_on_finite_inputs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.variable(random_tensor(&mut rng, &[3, 4], 50.0));
        let sm = g.softmax(x).unwrap();
        let s = g.sum(sm);
        let ce = g.softmax_cross_entropy(x, &[0, 1, 3]).unwrap();
        let l = g.add(s, ce).unwrap();
        g.backward(l).unwrap();
        prop_assert!(g.grad(x).unwrap().is_finite());
    }

    #[test]
    fn schedules_stay_in_range(base in 1e-5f64..1.0, total in 1usize..300, frac in 0.0f64..=1.0) {
        let epoch = ((total as f64) * frac).floor() as usize;
        let lr = cosine_anneal_lr(base, epoch, total).unwrap();
        prop_assert!(lr >= 0.0 && lr <= base);
        let later = cosine_anneal_lr(base, (epoch + 1).min(total), total).unwrap();
        prop_assert!(later <= lr);
        prop_assert_eq!(step_decay_lr(base, epoch, 10, 0.5), base * 0.5f64.powi((epoch / 10) as i32));
    }
}
