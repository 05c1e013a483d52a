//! Ground-truth influence by retraining.
//!
//! Removing the labels of a training segment means retraining with an extra
//! conditional-loss term of weight `-1/|D|`. All retraining is warm-started
//! from the base parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfParams, Segment};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::influence::{GradientCache, Granularity, HessianMode, InfluenceEngine, Locator, RankBy};
use crate::stats;
use crate::trainer::{self, Diagnostics, Objective, TermKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalSpec {
    Segment {
        example: usize,
        segment: Segment,
    },
    /// Drops the example's joint term, keeping the `1/|D|` normalizer.
    Instance(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactInfluenceRecord {
    pub removal: RemovalSpec,
    pub test: Locator,
    pub actual_delta: f64,
    pub predicted_delta: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Segment loss: conditional loss, or joint loss for the full span.
pub fn segment_loss(example: &Example, seg: Segment, params: &CrfParams) -> Result<f64> {
    seg.check(example.len())?;
    let lp = if seg == Segment::full(example.len()) {
        crf::joint_log_prob(&example.obs, &example.labels, params)?
    } else {
        crf::conditional_segment_log_prob(&example.obs, &example.labels, seg, params)?
    };
    Ok(-lp)
}

/// Minimizes `objective` from `init`; non-convergence is an error.
pub fn retrain(
    objective: &Objective<'_>,
    init: &CrfParams,
    cfg: &TrainConfig,
) -> Result<(CrfParams, Diagnostics)> {
    let (params, diag) = trainer::minimize(objective, cfg, init)?;
    if !diag.converged {
        return Err(Error::NotConverged {
            iterations: diag.iterations,
            grad_inf_norm: diag.final_grad_inf_norm,
        });
    }
    Ok((params, diag))
}

pub fn removal_objective<'a>(
    dataset: &'a Dataset,
    spec: RemovalSpec,
    ridge: f64,
) -> Result<Objective<'a>> {
    let mut obj = Objective::standard(dataset, ridge);
    match spec {
        RemovalSpec::Segment { example, segment } => {
            segment
                .check(dataset.get(example)?.len())
                .map_err(|e| e.at_example(example))?;
            obj.remove_segment(example, segment);
        }
        RemovalSpec::Instance(k) => {
            dataset.get(k)?;
            obj.terms
                .retain(|t| !(t.example == k && t.kind == TermKind::Joint));
        }
    }
    Ok(obj)
}

pub fn retrain_without_segment(
    dataset: &Dataset,
    spec: RemovalSpec,
    base: &CrfParams,
    cfg: &TrainConfig,
) -> Result<(CrfParams, Diagnostics)> {
    let obj = removal_objective(dataset, spec, cfg.l2_ridge)?;
    retrain(&obj, base, cfg)
}

/// Change in the test segment's loss after retraining without `spec`.
pub fn exact_segment_influence(
    dataset: &Dataset,
    spec: RemovalSpec,
    test: &Example,
    test_locator: Locator,
    base: &CrfParams,
    cfg: &TrainConfig,
) -> Result<ExactInfluenceRecord> {
    let before = segment_loss(test, test_locator.segment, base)?;
    let (removed, diagnostics) = retrain_without_segment(dataset, spec, base, cfg)?;
    let after = segment_loss(test, test_locator.segment, &removed)?;
    Ok(ExactInfluenceRecord {
        removal: spec,
        test: test_locator,
        actual_delta: after - before,
        predicted_delta: None,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub n_test_tokens: usize,
    pub top_k: usize,
    pub seed: u64,
    /// Hessian damping for the predictions; the training ridge makes the
    /// damped Hessian the exact Hessian of the training objective.
    pub damping: Option<f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            n_test_tokens: 20,
            top_k: 20,
            seed: 0,
            damping: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPair {
    /// Validation example and 1-based token.
    pub test: Locator,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub pairs: Vec<ValidationPair>,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub sign_agreement: f64,
    /// Training tokens removed, in removal order.
    pub pool: Vec<Locator>,
    /// Set when fewer mispredicted tokens than requested were available.
    pub insufficient_tokens: bool,
    pub step_diagnostics: Vec<Diagnostics>,
}

/// Merges single-token locators into maximal runs of adjacent tokens, sorted.
///
/// Removing the labels of a set of tokens is the same as subtracting the
/// conditional loss of each run: in a first-order chain, runs separated by
/// at least one labelled token are conditionally independent. Subtracting
/// separate token conditionals for adjacent tokens would instead leave an
/// objective that is unbounded below.
pub fn merge_adjacent(tokens: &[Locator]) -> Vec<Locator> {
    let mut sorted: Vec<Locator> = tokens.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out: Vec<Locator> = Vec::new();
    for loc in sorted {
        match out.last_mut() {
            Some(last) if last.example == loc.example && last.segment.b + 1 >= loc.segment.a => {
                last.segment.b = last.segment.b.max(loc.segment.b);
            }
            _ => out.push(loc),
        }
    }
    out
}

/// Validation tokens whose Viterbi label differs from gold, as
/// (example, 0-based position).
pub fn mispredicted_tokens(data: &Dataset, params: &CrfParams) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, ex) in data.examples().iter().enumerate() {
        let (pred, _) = crf::viterbi_decode(&ex.obs, params)?;
        for (t, (p, g)) in pred.0.iter().zip(ex.labels.as_slice()).enumerate() {
            if p != g {
                out.push((i, t));
            }
        }
    }
    Ok(out)
}

/// Samples mispredicted validation tokens, pools the training tokens with
/// the largest absolute influence on each, removes the pool one test
/// token's group at a time (retraining after each group), and compares the
/// actual change in each test token's conditional loss with the prediction
/// `-(1/N) Σ_s I(test, s)` over the pool's merged runs `s`.
pub fn validation_experiment(
    train: &Dataset,
    val: &Dataset,
    params: &CrfParams,
    train_cfg: &TrainConfig,
    cfg: &ValidationConfig,
) -> Result<ValidationOutcome> {
    let mut candidates = mispredicted_tokens(val, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    candidates.shuffle(&mut rng);
    let insufficient = candidates.len() < cfg.n_test_tokens;
    if insufficient {
        log::warn!(
            "only {} mispredicted validation tokens available, {} requested",
            candidates.len(),
            cfg.n_test_tokens
        );
    }
    candidates.truncate(cfg.n_test_tokens);
    if candidates.is_empty() || cfg.top_k == 0 {
        return Err(Error::invalid(
            "validation experiment has nothing to remove",
        ));
    }

    let damping = cfg.damping.unwrap_or(train_cfg.l2_ridge);
    let engine = InfluenceEngine::new(train, params, HessianMode::ExplicitDamped { damping })?;
    let cache = GradientCache::build(train, params, Granularity::Token)?;
    let queries = candidates
        .iter()
        .map(|&(i, t)| engine.prepare(&val.examples()[i], Locator::token(i, t)))
        .collect::<Result<Vec<_>>>()?;

    let mut pool: Vec<Locator> = Vec::new();
    let mut groups: Vec<Vec<Locator>> = Vec::new();
    for q in &queries {
        let top = engine.top_k_influential(q, cfg.top_k, &cache, RankBy::Absolute)?;
        let fresh: Vec<Locator> = top
            .results
            .iter()
            .map(|r| r.train)
            .filter(|loc| !pool.contains(loc))
            .collect();
        pool.extend(&fresh);
        groups.push(fresh);
    }

    let n = train.len() as f64;
    let segments = merge_adjacent(&pool);
    let mut predicted = Vec::with_capacity(queries.len());
    for q in &queries {
        let mut total = 0.0;
        for &loc in &segments {
            total += engine.value(q, loc, Some(&cache))?;
        }
        predicted.push(-total / n);
    }

    let mut current = params.clone();
    let mut step_diagnostics = Vec::new();
    let mut removed: Vec<Locator> = Vec::new();
    for group in groups.iter().filter(|g| !g.is_empty()) {
        removed.extend(group);
        let mut objective = Objective::standard(train, train_cfg.l2_ridge);
        for loc in merge_adjacent(&removed) {
            objective.remove_segment(loc.example, loc.segment);
        }
        let (next, diag) = retrain(&objective, &current, train_cfg)?;
        current = next;
        step_diagnostics.push(diag);
    }

    let mut pairs = Vec::with_capacity(queries.len());
    for (q, &pred) in queries.iter().zip(&predicted) {
        let ex = &val.examples()[q.test.example];
        let before = segment_loss(ex, q.test.segment, params)?;
        let after = segment_loss(ex, q.test.segment, &current)?;
        pairs.push(ValidationPair {
            test: q.test,
            predicted: pred,
            actual: after - before,
        });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.predicted).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.actual).collect();
    Ok(ValidationOutcome {
        pearson_r: stats::pearson(&xs, &ys)?,
        spearman_rho: stats::spearman(&xs, &ys)?,
        sign_agreement: stats::sign_agreement(&xs, &ys),
        pairs,
        pool,
        insufficient_tokens: insufficient,
        step_diagnostics,
    })
}
