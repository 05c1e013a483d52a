use seginf::crf::{CrfParams, Segment};
use seginf::dataset::Dataset;
use seginf::influence::Locator;
use seginf::oracle::{self, RemovalSpec};
use seginf::synth::{self, NerSpec};
use seginf::trainer::{self, LossTerm, Objective, TrainConfig};

fn cfg() -> TrainConfig {
    // grad_tol / ridge bounds the distance to each minimum.
    TrainConfig {
        grad_tol: 1e-8,
        ..TrainConfig::default()
    }
}

fn setup() -> (Dataset, CrfParams) {
    let (corpora, table) = synth::ner_corpora(&NerSpec::default(), &[30], 9);
    let ds = corpora[0]
        .featurize(&table, &synth::ner_features())
        .unwrap()
        .0;
    let (params, _) = trainer::train(&ds, &cfg()).unwrap();
    (ds, params)
}

fn gap(a: &CrfParams, b: &CrfParams) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn full_span_removal_equals_leave_one_out() {
    let (ds, base) = setup();
    let k = 4;
    let full = Segment::full(ds.examples()[k].len());
    let (seg, _) = oracle::retrain_without_segment(
        &ds,
        RemovalSpec::Segment {
            example: k,
            segment: full,
        },
        &base,
        &cfg(),
    )
    .unwrap();
    // Leave-one-out on the remaining examples with the original weighting.
    let rest = ds.without(k);
    let mut loo = Objective::standard(&rest, cfg().l2_ridge);
    loo.normalizer = 1.0 / ds.len() as f64;
    let (direct, _) = oracle::retrain(&loo, &base, &cfg()).unwrap();
    assert!(gap(&seg, &direct) < 1e-4, "gap {}", gap(&seg, &direct));
    let (inst, _) =
        oracle::retrain_without_segment(&ds, RemovalSpec::Instance(k), &base, &cfg()).unwrap();
    assert!(gap(&inst, &direct) < 1e-4);
}

#[test]
fn adding_the_segment_back_restores_the_base_model() {
    let (ds, base) = setup();
    let (example, segment) = (2, Segment { a: 2, b: 3 });
    let (removed, _) = oracle::retrain_without_segment(
        &ds,
        RemovalSpec::Segment { example, segment },
        &base,
        &cfg(),
    )
    .unwrap();
    assert!(gap(&removed, &base) > 1e-4, "removal should move the model");
    let restored_obj = oracle::removal_objective(
        &ds,
        RemovalSpec::Segment { example, segment },
        cfg().l2_ridge,
    )
    .unwrap()
    .with_term(LossTerm::conditional(example, segment, 1.0));
    let (restored, _) = oracle::retrain(&restored_obj, &removed, &cfg()).unwrap();
    assert!(
        gap(&restored, &base) < 1e-4,
        "gap {}",
        gap(&restored, &base)
    );
}

#[test]
fn zero_weight_removal_is_a_no_op() {
    let (ds, base) = setup();
    let obj = Objective::standard(&ds, cfg().l2_ridge).with_term(LossTerm::conditional(
        1,
        Segment::token(1),
        0.0,
    ));
    let (params, diag) = oracle::retrain(&obj, &base, &cfg()).unwrap();
    assert!(diag.iterations <= 1);
    assert!(gap(&params, &base) < 1e-5);
}

#[test]
fn removing_an_example_hurts_its_own_fit() {
    let (ds, base) = setup();
    for k in [0, 7, 19] {
        let ex = &ds.examples()[k];
        let rec = oracle::exact_segment_influence(
            &ds,
            RemovalSpec::Instance(k),
            ex,
            Locator::new(k, Segment::full(ex.len())),
            &base,
            &cfg(),
        )
        .unwrap();
        assert!(rec.actual_delta > 0.0, "example {k}: {}", rec.actual_delta);
    }
}

#[test]
fn merged_runs_cover_adjacent_tokens_once() {
    let runs = oracle::merge_adjacent(&[
        Locator::token(0, 3),
        Locator::token(0, 1),
        Locator::token(0, 2),
        Locator::token(1, 0),
        Locator::token(0, 5),
    ]);
    assert_eq!(
        runs,
        vec![
            Locator::new(0, Segment { a: 2, b: 4 }),
            Locator::new(0, Segment::token(6)),
            Locator::new(1, Segment::token(1)),
        ]
    );
}
