mod common;

use common::*;
use proptest::prelude::*;
use seginf::crf::{self, PartialLabelSequence, Segment};

#[test]
fn log_partition_matches_enumeration_t5_c3() {
    let mut r = rng(7);
    let inst = random_instance(&mut r, 5, 3, 4);
    let fast = crf::log_partition(&inst.obs, &inst.params).unwrap();
    let slow = brute_log_z(&inst.obs, &inst.params);
    assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
}

#[test]
fn joint_probabilities_sum_to_one() {
    let mut r = rng(11);
    let inst = random_instance(&mut r, 4, 3, 2);
    let total: f64 = all_sequences(4, 3)
        .into_iter()
        .map(|y| {
            crf::joint_log_prob(&inst.obs, &crf::LabelSequence(y), &inst.params)
                .unwrap()
                .exp()
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn marginal_with_interior_mask_matches_enumeration() {
    let mut r = rng(13);
    let inst = random_instance(&mut r, 5, 3, 3);
    let partial = inst.labels.mask(Segment { a: 2, b: 3 }).unwrap();
    let fast = crf::marginal_log_prob(&inst.obs, &partial, &inst.params).unwrap();
    let slow = brute_marginal(&inst.obs, &partial, &inst.params);
    assert!((fast - slow).abs() < 1e-10);
}

#[test]
fn random_instances_agree_with_enumeration() {
    let mut r = rng(2024);
    for _ in 0..60 {
        let inst = random_small_instance(&mut r);
        let (obs, y, p) = (&inst.obs, &inst.labels, &inst.params);
        let lz = brute_log_z(obs, p);
        assert!((crf::log_partition(obs, p).unwrap() - lz).abs() < 1e-10);
        let joint = brute_score(obs, &y.0, p) - lz;
        assert!((crf::joint_log_prob(obs, y, p).unwrap() - joint).abs() < 1e-10);

        let seg = random_segment(&mut r, obs.len());
        let cond = brute_conditional(obs, y, seg, p);
        assert!((crf::conditional_segment_log_prob(obs, y, seg, p).unwrap() - cond).abs() < 1e-10);
        let partial = y.mask(seg).unwrap();
        let marg = brute_marginal(obs, &partial, p);
        assert!((crf::marginal_log_prob(obs, &partial, p).unwrap() - marg).abs() < 1e-10);

        let fast = crf::position_marginals(obs, p).unwrap();
        let slow = brute_position_marginals(obs, p);
        for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
        for row in &fast {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let (path, score) = crf::viterbi_decode(obs, p).unwrap();
        let (best, best_score) = brute_argmax(obs, p);
        assert_eq!(path.0, best);
        assert!((score - best_score).abs() < 1e-10);
    }
}

#[test]
fn viterbi_t6_c4_matches_exhaustive_max() {
    let mut r = rng(99);
    let inst = random_instance(&mut r, 6, 4, 3);
    let (path, score) = crf::viterbi_decode(&inst.obs, &inst.params).unwrap();
    let (best, best_score) = brute_argmax(&inst.obs, &inst.params);
    assert_eq!(path.0, best);
    assert!((score - best_score).abs() < 1e-10);
    assert!((crf::score(&inst.obs, &path, &inst.params).unwrap() - score).abs() < 1e-12);
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(5);
    for _ in 0..20 {
        let inst = random_instance(&mut r, 6, 3, 3);
        let (obs, y) = (&inst.obs, &inst.labels);
        let g = crf::grad_joint_loss(obs, y, &inst.params).unwrap();
        let fd = fd_gradient(&inst.params, 1e-5, |p| {
            -crf::joint_log_prob(obs, y, p).unwrap()
        });
        assert!(rel_err(&g, &fd, 1e-8) < 1e-5);

        let seg = Segment { a: 3, b: 3 };
        let g = crf::grad_conditional_loss(obs, y, seg, &inst.params).unwrap();
        let fd = fd_gradient(&inst.params, 1e-5, |p| {
            -crf::conditional_segment_log_prob(obs, y, seg, p).unwrap()
        });
        assert!(rel_err(&g, &fd, 1e-8) < 1e-5);

        let partial = y.mask(Segment { a: 2, b: 4 }).unwrap();
        let g = crf::grad_marginal_loss(obs, &partial, &inst.params).unwrap();
        let fd = fd_gradient(&inst.params, 1e-5, |p| {
            -crf::marginal_log_prob(obs, &partial, p).unwrap()
        });
        assert!(rel_err(&g, &fd, 1e-8) < 1e-5);
    }
}

#[test]
fn hvp_matches_gradient_differences() {
    let mut r = rng(17);
    for _ in 0..10 {
        let inst = random_instance(&mut r, 5, 4, 3);
        let v = random_params(&mut r, 4, 3, 1.0).to_gradient_layout();
        let hv = crf::sequence_hvp(&inst.obs, &inst.params, &v).unwrap();
        let eps = 1e-5;
        let gp =
            crf::grad_joint_loss(&inst.obs, &inst.labels, &inst.params.stepped(eps, &v)).unwrap();
        let gm =
            crf::grad_joint_loss(&inst.obs, &inst.labels, &inst.params.stepped(-eps, &v)).unwrap();
        let fd = (&gp - &gm).scaled(0.5 / eps);
        assert!(
            rel_err(&hv, &fd, 1e-8) < 1e-5,
            "{}",
            rel_err(&hv, &fd, 1e-8)
        );
    }
}

#[test]
fn hvp_single_token_is_logistic_hessian() {
    // C = 2, one token: H v = p(1-p) (x·(v1 - v0)) x on the emission rows,
    // with opposite signs, and zero on transitions.
    let x = vec![0.7, -1.3];
    let obs = crf::ObservationSequence::from_features(vec![x.clone()]).unwrap();
    let params = crf::CrfParams::from_parts(2, 2, &[0.2, 0.5, -0.4, 0.1], &[0.0; 4]).unwrap();
    let v =
        crf::CrfGradient::from_parts(2, 2, &[0.3, -0.2, 1.1, 0.4], &[0.9, 0.1, -0.3, 0.2]).unwrap();
    let hv = crf::sequence_hvp(&obs, &params, &v).unwrap();
    let s0 = 0.2 * x[0] + 0.5 * x[1];
    let s1 = -0.4 * x[0] + 0.1 * x[1];
    let p = 1.0 / (1.0 + (s0 - s1).exp());
    let xv = x[0] * (1.1 - 0.3) + x[1] * (0.4 + 0.2);
    for j in 0..2 {
        let expected = p * (1.0 - p) * xv * x[j];
        assert!((hv.w_row(1)[j] - expected).abs() < 1e-12);
        assert!((hv.w_row(0)[j] + expected).abs() < 1e-12);
    }
    assert!(hv.t().iter().all(|v| v.abs() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_decomposition_holds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_small_instance(&mut r);
        let seg = random_segment(&mut r, inst.obs.len());
        let (obs, y, p) = (&inst.obs, &inst.labels, &inst.params);
        let joint = -crf::joint_log_prob(obs, y, p).unwrap();
        let partial = y.mask(seg).unwrap();
        let marg = -crf::marginal_log_prob(obs, &partial, p).unwrap();
        let cond = -crf::conditional_segment_log_prob(obs, y, seg, p).unwrap();
        prop_assert!((joint - marg - cond).abs() < 1e-9);

        let gj = crf::grad_joint_loss(obs, y, p).unwrap();
        let gm = crf::grad_marginal_loss(obs, &partial, p).unwrap();
        let gc = crf::grad_conditional_loss(obs, y, seg, p).unwrap();
        let resid = &(&gj - &gm) - &gc;
        prop_assert!(resid.max_abs() < 1e-8);
    }

    #[test]
    fn all_masked_marginal_is_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_small_instance(&mut r);
        let all = PartialLabelSequence::all_masked(inst.obs.len());
        let v = crf::marginal_log_prob(&inst.obs, &all, &inst.params).unwrap();
        prop_assert!(v.abs() < 1e-10);
    }
}
