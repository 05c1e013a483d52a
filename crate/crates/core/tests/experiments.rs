//! Small-scale runs of each experiment driver: structure and determinism
//! only. Thresholds are checked at full scale by the acceptance target.

use seginf::experiments::{self, ArtifactSpec, ConflictSpec, NoiseSpec, ValiditySpec};

#[test]
fn small_validity_run_is_finite_and_repeatable() {
    let spec = ValiditySpec {
        n_train: 200,
        n_val: 60,
        ..ValiditySpec::default()
    };
    let (a, _) = experiments::approximation_validity(&spec).unwrap();
    assert!(!a.pairs.is_empty());
    assert!(a
        .pairs
        .iter()
        .all(|p| p.predicted.is_finite() && p.actual.is_finite()));
    assert_eq!(a.step_diagnostics.len(), a.pairs.len());
    assert!(a.step_diagnostics.iter().all(|d| d.converged));
    let (b, _) = experiments::approximation_validity(&spec).unwrap();
    assert_eq!(a, b);
}

#[test]
fn small_artifact_run_reports_consistent_rates() {
    let spec = ArtifactSpec {
        n_train: 300,
        n_val: 40,
        ..ArtifactSpec::default()
    };
    let out = experiments::artifact_recovery(&spec).unwrap();
    assert!(out.n_driven <= out.queries.len());
    for rate in [
        out.adjacency_rate,
        out.instance_hit_rate,
        out.adjacency_rate_all,
    ] {
        assert!((0.0..=1.0).contains(&rate) || rate.is_nan());
    }
}

#[test]
fn small_noise_run_scores_every_document() {
    let spec = NoiseSpec {
        n_general: 60,
        n_soccer: 20,
        n_random: 10,
        n_systematic: 5,
        n_clean_val: 5,
        ..NoiseSpec::default()
    };
    let out = experiments::noise_detection(&spec).unwrap();
    for auc in [
        out.best_token_loss_random(),
        out.best_influence_random(),
        out.best_baseline_systematic(),
    ] {
        assert!((0.0..=1.0).contains(&auc));
    }
}

#[test]
fn conflict_rates_are_fractions() {
    let spec = ConflictSpec {
        n_train: 120,
        n_test: 30,
        ..ConflictSpec::default()
    };
    let out = experiments::label_conflict(&spec).unwrap();
    for rate in [
        out.segment_example_rate,
        out.instance_rate,
        out.nn_example_rate,
    ] {
        assert!((0.0..=1.0).contains(&rate) || rate.is_nan());
    }
}
