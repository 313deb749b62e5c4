mod common;

use common::Rows;
use csa_core::align::{
    csa_loss, csa_terms, feature_shuffle, pairwise_feature_stats, random_permutation, semantic_alignment_loss,
    separation_loss, supcon_loss, FeaturePairing, MarginConfig,
};
use csa_core::nn::{finite_diff_gradcheck, Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build(g: &mut Graph, clean: &Rows, aug: &Rows, labels: &[usize], perm: Vec<usize>) -> FeaturePairing {
    let c = g.variable(Tensor::from_rows(clean).unwrap());
    let a = g.variable(Tensor::from_rows(aug).unwrap());
    FeaturePairing::new(g, c, a, labels)
        .unwrap()
        .with_permutation(perm)
        .unwrap()
}

struct Instance {
    clean: Rows,
    aug: Rows,
    labels: Vec<usize>,
    perm: Vec<usize>,
}

fn instance(seed: u64, b: usize, z: usize, classes: usize, scale: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Instance {
        clean: common::random_rows(&mut rng, b, z, scale),
        aug: common::random_rows(&mut rng, b, z, scale),
        labels: common::random_labels(&mut rng, b, classes),
        perm: common::fisher_yates(b, &mut rng),
    }
}

#[test]
fn alignment_and_separation_match_pair_loops() {
    let cfg = MarginConfig::new(1.0).unwrap();
    for seed in 0..200 {
        let inst = instance(seed, 8, 4, 3, 1.0);
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &inst.aug, &inst.labels, inst.perm.clone());
        let sa = semantic_alignment_loss(&mut g, &p).unwrap();
        let s = separation_loss(&mut g, &p, cfg).unwrap();
        let want_sa = common::alignment(&inst.clean, &inst.aug, &inst.labels, &inst.labels, &inst.perm);
        let want_s = common::separation(&inst.clean, &inst.aug, &inst.labels, &inst.labels, &inst.perm, 1.0);
        assert!((g.value(sa).item() - want_sa).abs() <= 1e-9 * want_sa.max(1.0));
        assert!((g.value(s).item() - want_s).abs() <= 1e-9 * want_s.max(1.0));
    }
}

#[test]
fn csa_is_partitioned_sum() {
    let cfg = MarginConfig::new(1.0).unwrap();
    for seed in 0..100 {
        let inst = instance(seed, 12, 3, 2, 0.6);
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &inst.aug, &inst.labels, inst.perm.clone());
        let t = csa_terms(&mut g, &p, cfg).unwrap();
        let want = common::csa(&inst.clean, &inst.aug, &inst.labels, &inst.perm, 1.0);
        assert!((g.value(t.total).item() - want).abs() <= 1e-9 * want.max(1.0));
        assert_eq!(
            g.value(t.total).item(),
            g.value(t.alignment).item() + g.value(t.separation).item()
        );
    }
}

#[test]
fn derangement_of_distinct_labels_is_pure_separation() {
    let cfg = MarginConfig::new(1.0).unwrap();
    let inst = instance(3, 5, 2, 5, 0.5);
    let labels: Vec<usize> = (0..5).collect();
    let mut g = Graph::new();
    let p = build(&mut g, &inst.clean, &inst.aug, &labels, vec![1, 2, 3, 4, 0]);
    let total = csa_loss(&mut g, &p, cfg).unwrap();
    let s = separation_loss(&mut g, &p, cfg).unwrap();
    assert_eq!(g.value(total).item(), g.value(s).item());
    assert!(g.value(s).item() > 0.0);
}

#[test]
fn shuffle_matches_reference_fisher_yates() {
    for seed in 0..20 {
        let inst = instance(seed, 16, 2, 4, 1.0);
        let mut g = Graph::new();
        let c = g.variable(Tensor::from_rows(&inst.clean).unwrap());
        let a = g.variable(Tensor::from_rows(&inst.aug).unwrap());
        let p = FeaturePairing::new(&g, c, a, &inst.labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let mut reference = rng.clone();
        let shuffled = feature_shuffle(p, &mut rng).unwrap();
        assert_eq!(
            shuffled.permutation(),
            common::fisher_yates(16, &mut reference).as_slice()
        );
        assert_eq!(rng, reference);
    }
}

#[test]
fn supcon_matches_log_softmax_loops() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = common::random_rows(&mut rng, 6, 3, 2.0);
        let labels = common::random_labels(&mut rng, 6, 2);
        let tau = [0.1, 0.5, 1.0][seed as usize % 3];
        let mut g = Graph::new();
        let f = g.variable(Tensor::from_rows(&feats).unwrap());
        let out = supcon_loss(&mut g, f, &labels, tau).unwrap();
        let want = common::supcon(&feats, &labels, tau);
        assert!(common::relative_error(g.value(out.loss).item(), want) <= 1e-7);
    }
}

#[test]
fn feature_stats_match_cross_pair_loops() {
    for seed in 0..50 {
        let inst = instance(seed, 7, 3, 3, 1.5);
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &inst.aug, &inst.labels, inst.perm.clone());
        let stats = pairwise_feature_stats(&g, &p).unwrap();
        let labels_aug: Vec<usize> = p.labels_aug().to_vec();
        let (same, diff) = common::pair_stats(&inst.clean, &inst.aug, &inst.labels, &labels_aug);
        assert!((stats.mean_same - same).abs() <= 1e-9 * same.max(1.0));
        assert!((stats.mean_different - diff).abs() <= 1e-9 * diff.max(1.0));
        assert_eq!(stats.same_pairs + stats.different_pairs, 49);
    }
}

#[test]
fn two_clusters_have_cluster_distance() {
    let d = 2.5;
    let clean = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![d, 0.0], vec![d, 0.0]];
    let labels = [0, 0, 1, 1];
    let mut g = Graph::new();
    let p = build(&mut g, &clean, &clean, &labels, vec![0, 1, 2, 3]);
    let stats = pairwise_feature_stats(&g, &p).unwrap();
    assert_eq!(stats.mean_same, 0.0);
    assert!((stats.mean_different - d).abs() < 1e-12);
}

fn csa_gradcheck(inst: &Instance, margin: f64) -> f64 {
    let mut params = ParamStore::new();
    let c = params.add("clean", Tensor::from_rows(&inst.clean).unwrap()).unwrap();
    let a = params.add("aug", Tensor::from_rows(&inst.aug).unwrap()).unwrap();
    let cfg = MarginConfig::new(margin).unwrap();
    let labels = inst.labels.clone();
    let perm = inst.perm.clone();
    let report = finite_diff_gradcheck(
        |g, store| {
            let cv = g.param(store, c);
            let av = g.param(store, a);
            let p = FeaturePairing::new(g, cv, av, &labels)?.with_permutation(perm.clone())?;
            csa_loss(g, &p, cfg)
        },
        &mut params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    report.max_relative_error()
}

fn hinge_distances(inst: &Instance) -> Vec<f64> {
    (0..inst.labels.len())
        .filter(|&i| inst.labels[i] != inst.labels[inst.perm[i]])
        .map(|i| {
            let j = inst.perm[i];
            inst.clean[i]
                .iter()
                .zip(&inst.aug[j])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[test]
fn csa_gradient_in_both_hinge_regimes() {
    let (mut active, mut inactive) = (0, 0);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 50 {
        seed += 1;
        let scale = if seed % 2 == 0 { 0.2 } else { 2.0 };
        let inst = instance(seed, 4, 2, 2, scale);
        let d = hinge_distances(&inst);
        if d.iter().any(|&x| (x - 1.0).abs() < 1e-3 || x < 1e-3) {
            continue;
        }
        active += d.iter().filter(|&&x| x < 1.0).count();
        inactive += d.iter().filter(|&&x| x > 1.0).count();
        csa_gradcheck(&inst, 1.0);
        checked += 1;
    }
    assert!(active > 0 && inactive > 0, "active {active}, inactive {inactive}");
}

#[test]
fn gradients_reach_both_branches() {
    let inst = instance(9, 6, 3, 2, 0.3);
    let mut g = Graph::new();
    let c = g.variable(Tensor::from_rows(&inst.clean).unwrap());
    let a = g.variable(Tensor::from_rows(&inst.aug).unwrap());
    let p = FeaturePairing::new(&g, c, a, &inst.labels)
        .unwrap()
        .with_permutation(inst.perm.clone())
        .unwrap();
    let l = csa_loss(&mut g, &p, MarginConfig::default()).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad(c).unwrap().data().iter().any(|v| *v != 0.0));
    assert!(g.grad(a).unwrap().data().iter().any(|v| *v != 0.0));
}

fn arb_instance() -> impl Strategy<Value = (u64, usize, usize, usize, f64)> {
    (any::<u64>(), 1usize..=12, 1usize..=6, 1usize..=4, 0.05f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn losses_are_nonnegative((seed, b, z, classes, scale) in arb_instance(), margin in 0.1f64..3.0) {
        let inst = instance(seed, b, z, classes, scale);
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &inst.aug, &inst.labels, inst.perm.clone());
        let t = csa_terms(&mut g, &p, MarginConfig::new(margin).unwrap()).unwrap();
        prop_assert!(g.value(t.alignment).item() >= 0.0);
        prop_assert!(g.value(t.separation).item() >= 0.0);
        prop_assert!(g.value(t.total).item() >= 0.0);
    }

    #[test]
    fn translation_leaves_terms_unchanged((seed, b, z, classes, scale) in arb_instance(), shift in -5.0f64..5.0) {
        let inst = instance(seed, b, z, classes, scale);
        let moved = |rows: &Rows| -> Rows {
            rows.iter().map(|r| r.iter().enumerate().map(|(k, v)| v + shift * (k as f64 + 1.0)).collect()).collect()
        };
        let cfg = MarginConfig::default();
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &inst.aug, &inst.labels, inst.perm.clone());
        let t = csa_terms(&mut g, &p, cfg).unwrap();
        let q = build(&mut g, &moved(&inst.clean), &moved(&inst.aug), &inst.labels, inst.perm.clone());
        let u = csa_terms(&mut g, &q, cfg).unwrap();
        for (x, y) in [(t.alignment, u.alignment), (t.separation, u.separation)] {
            let (x, y) = (g.value(x).item(), g.value(y).item());
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn zero_conditions((seed, b, z, classes, scale) in arb_instance()) {
        let inst = instance(seed, b, z, classes, scale);
        let cfg = MarginConfig::default();
        // Same-label pairs collapsed onto the clean features.
        let mut aug = inst.aug.clone();
        for i in 0..b {
            let j = inst.perm[i];
            if inst.labels[i] == inst.labels[j] {
                aug[j] = inst.clean[i].clone();
            }
        }
        let mut g = Graph::new();
        let p = build(&mut g, &inst.clean, &aug, &inst.labels, inst.perm.clone());
        let sa = semantic_alignment_loss(&mut g, &p).unwrap();
        prop_assert_eq!(g.value(sa).item(), 0.0);

        let s = separation_loss(&mut g, &p, cfg).unwrap();
        let collapsed = Instance { aug, ..inst };
        let all_far = hinge_distances(&collapsed).iter().all(|&d| d >= 1.0);
        prop_assert_eq!(g.value(s).item() == 0.0, all_far);
    }

    #[test]
    fn shuffle_co_permutes_features_and_labels(seed in any::<u64>(), b in 1usize..=16, classes in 1usize..=5) {
        let inst = instance(seed, b, 2, classes, 1.0);
        let mut g = Graph::new();
        let c = g.variable(Tensor::from_rows(&inst.clean).unwrap());
        let a = g.variable(Tensor::from_rows(&inst.aug).unwrap());
        let p = FeaturePairing::new(&g, c, a, &inst.labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = feature_shuffle(p, &mut rng).unwrap();
        let mut sorted = s.permutation().to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..b).collect::<Vec<_>>());
        prop_assert_eq!(s.labels_clean(), inst.labels.as_slice());
        let mut before = inst.labels.clone();
        let mut after: Vec<usize> = (0..b).map(|i| s.paired_label(i)).collect();
        for i in 0..b {
            prop_assert_eq!(s.paired_label(i), s.labels_aug()[s.permutation()[i]]);
            prop_assert_eq!(s.same_label(i), inst.labels[i] == inst.labels[s.permutation()[i]]);
        }
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn permutations_are_bijections(seed in any::<u64>(), n in 0usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_permutation(n, &mut rng);
        p.sort_unstable();
        prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
    }
}
