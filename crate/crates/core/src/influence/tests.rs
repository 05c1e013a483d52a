use super::*;
use crate::crf::{LabelSequence, ObservationSequence};
use crate::trainer::{self, TrainConfig};

fn example(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Example {
    Example {
        obs: ObservationSequence::from_features(features).unwrap(),
        labels: LabelSequence(labels),
    }
}

fn toy() -> (Dataset, CrfParams) {
    let exs = vec![
        example(
            vec![vec![1.0, 0.2], vec![-0.3, 1.0], vec![0.5, 0.5]],
            vec![0, 1, 1],
        ),
        example(vec![vec![0.9, -0.1], vec![0.1, 0.8]], vec![0, 1]),
        example(
            vec![
                vec![-1.0, 0.3],
                vec![1.2, 0.0],
                vec![0.0, 1.0],
                vec![0.4, 0.4],
            ],
            vec![1, 0, 2, 2],
        ),
        example(vec![vec![0.2, 0.2]], vec![2]),
    ];
    let ds = Dataset::from_examples(3, 2, exs).unwrap();
    let (params, _) = trainer::train(&ds, &TrainConfig::default()).unwrap();
    (ds, params)
}

#[test]
fn token_cache_round_trips_and_has_expected_size() {
    let (ds, params) = toy();
    let cache = GradientCache::build(&ds, &params, Granularity::Token).unwrap();
    assert_eq!(cache.len(), ds.total_tokens());
    let bytes = cache.encode();
    assert_eq!(bytes.len(), cache.byte_size());
    assert_eq!(
        bytes.len(),
        cache::HEADER_BYTES + ds.total_tokens() * (16 + 8 * (3 + 2))
    );
    assert_eq!(GradientCache::decode(&bytes).unwrap(), cache);
    assert!(GradientCache::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(GradientCache::decode(&bad).is_err());
}

#[test]
fn instance_cache_round_trips() {
    let (ds, params) = toy();
    let cache = GradientCache::build(&ds, &params, Granularity::Instance).unwrap();
    assert_eq!(GradientCache::decode(&cache.encode()).unwrap(), cache);
}

#[test]
fn record_dot_matches_dense_gradient() {
    let (ds, params) = toy();
    let cache = GradientCache::build(&ds, &params, Granularity::Token).unwrap();
    let v =
        CrfGradient::from_flat(3, 2, (0..15).map(|i| (i as f64 * 1.3).sin()).collect()).unwrap();
    let Records::Token(recs) = cache.records() else {
        unreachable!()
    };
    for r in recs {
        let ex = &ds.examples()[r.example];
        let dense = crf::grad_conditional_loss(
            &ex.obs,
            &ex.labels,
            Segment::token(r.position + 1),
            &params,
        )
        .unwrap();
        assert!((&r.to_dense() - &dense).max_abs() < 1e-12);
        assert!((r.dot(&v) - dense.dot(&v)).abs() < 1e-12);
    }
}

#[test]
fn explicit_and_cg_agree() {
    let (ds, params) = toy();
    let explicit =
        InfluenceEngine::new(&ds, &params, HessianMode::ExplicitDamped { damping: 1e-3 }).unwrap();
    let cg = InfluenceEngine::new(
        &ds,
        &params,
        HessianMode::CgHvp {
            damping: 1e-3,
            max_cg_iters: 500,
            cg_tol: 1e-12,
        },
    )
    .unwrap();
    let test = &ds.examples()[2];
    let loc = Locator::new(2, Segment { a: 2, b: 3 });
    for i in 0..ds.len() {
        let train = Locator::new(i, Segment::full(ds.examples()[i].len()));
        let a = explicit
            .segment_influence(test, loc, train, None)
            .unwrap()
            .value;
        let b = cg.segment_influence(test, loc, train, None).unwrap().value;
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn identity_mode_is_negative_gradient_dot() {
    let (ds, params) = toy();
    let eng = InfluenceEngine::new(&ds, &params, HessianMode::Identity).unwrap();
    let ex = &ds.examples()[0];
    let g = crf::grad_joint_loss(&ex.obs, &ex.labels, &params).unwrap();
    let r = eng.instance_influence(ex, 0, 0, None).unwrap();
    assert!((r.value + g.dot(&g)).abs() < 1e-14);
    assert_eq!(r.direction, Direction::Supporting);
}

#[test]
fn full_span_segment_equals_instance_influence() {
    let (ds, params) = toy();
    let eng =
        InfluenceEngine::new(&ds, &params, HessianMode::ExplicitDamped { damping: 1e-2 }).unwrap();
    let test = &ds.examples()[2];
    let a = eng.instance_influence(test, 2, 0, None).unwrap();
    let b = eng
        .segment_influence(
            test,
            Locator::new(2, Segment::full(4)),
            Locator::new(0, Segment::full(3)),
            None,
        )
        .unwrap();
    assert_eq!(a.value, b.value);
}

#[test]
fn cached_and_uncached_values_agree() {
    let (ds, params) = toy();
    let eng = InfluenceEngine::new(&ds, &params, HessianMode::Identity).unwrap();
    let tok = GradientCache::build(&ds, &params, Granularity::Token).unwrap();
    let inst = GradientCache::build(&ds, &params, Granularity::Instance).unwrap();
    let q = eng
        .prepare(&ds.examples()[1], Locator::token(1, 1))
        .unwrap();
    for loc in [Locator::token(2, 3), Locator::token(0, 0)] {
        let a = eng.value(&q, loc, Some(&tok)).unwrap();
        let b = eng.value(&q, loc, None).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
    let loc = Locator::new(2, Segment::full(4));
    assert!(
        (eng.value(&q, loc, Some(&inst)).unwrap() - eng.value(&q, loc, None).unwrap()).abs()
            < 1e-12
    );
}

#[test]
fn top_k_orders_and_flags_short_lists() {
    let mk = |example, value| InfluenceResult {
        train: Locator::token(example, 0),
        test: Locator::token(0, 0),
        value,
        direction: Direction::of(value),
    };
    let all = vec![mk(3, 1.0), mk(1, -2.0), mk(2, 1.0), mk(0, 0.5)];
    let signed = top_k(all.clone(), 3, RankBy::Signed);
    assert_eq!(
        signed
            .results
            .iter()
            .map(|r| r.train.example)
            .collect::<Vec<_>>(),
        vec![2, 3, 0]
    );
    assert!(!signed.truncated);
    let abs = top_k(all, 10, RankBy::Absolute);
    assert_eq!(abs.results[0].train.example, 1);
    assert_eq!(abs.results.len(), 4);
    assert!(abs.truncated);
}

#[test]
fn nearest_neighbours_rank_zero_norm_last() {
    let exs = vec![
        example(vec![vec![1.0, 0.0], vec![0.0, 0.0]], vec![0, 1]),
        example(vec![vec![2.0, 2.0], vec![5.0, 0.1]], vec![1, 0]),
    ];
    let ds = Dataset::from_examples(2, 2, exs).unwrap();
    let nn = segment_nn(&[1.0, 0.0], &ds, Similarity::Cosine, 10, |_, _, _| true).unwrap();
    let order: Vec<_> = nn.iter().map(|n| (n.example, n.position)).collect();
    assert_eq!(order, vec![(0, 0), (1, 1), (1, 0), (0, 1)]);
    assert!(nn[3].degenerate);
    let dot = segment_nn(&[1.0, 0.0], &ds, Similarity::Dot, 1, |_, _, label| {
        label == 0
    })
    .unwrap();
    assert_eq!((dot[0].example, dot[0].position), (1, 1));
    assert!(segment_nn(&[0.0, 0.0], &ds, Similarity::Cosine, 1, |_, _, _| true).is_err());
}

#[test]
fn cg_reports_non_convergence() {
    let b = CrfGradient::from_flat(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let diag = [1.0, 10.0, 100.0, 1000.0, 1e4, 1e5];
    let apply = |v: &CrfGradient| {
        let vals = v.as_slice().iter().zip(diag).map(|(x, d)| x * d).collect();
        CrfGradient::from_flat(2, 1, vals)
    };
    assert!(matches!(
        conjugate_gradient(&b, 2, 1e-12, apply),
        Err(Error::CgNotConverged { .. })
    ));
    let x = conjugate_gradient(&b, 50, 1e-12, apply).unwrap();
    for (i, v) in x.as_slice().iter().enumerate() {
        assert!((v - b.as_slice()[i] / diag[i]).abs() < 1e-9);
    }
}
