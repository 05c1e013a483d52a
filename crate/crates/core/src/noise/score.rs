//! Misannotation scorers. Every scorer reports "higher = more suspicious".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceRef};
use crate::crf::{self, CrfParams, Segment};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::influence::{GradientCache, InfluenceEngine, Locator, PreparedQuery, Records};
use crate::stats::mean;

/// Number of largest values averaged by the token-level influence and
/// nearest-neighbour scorers.
pub const TOP_VALUES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Max,
}

impl Aggregation {
    pub const ALL: [Aggregation; 2] = [Aggregation::Mean, Aggregation::Max];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }

    /// Zero for an empty slice.
    pub fn apply(&self, xs: &[f64]) -> f64 {
        match self {
            _ if xs.is_empty() => 0.0,
            Aggregation::Mean => mean(xs),
            Aggregation::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisannotationScore {
    pub doc_id: String,
    /// Per-token scores in document order, for token-level scorers.
    pub token_scores: Option<Vec<f64>>,
    pub doc_score: f64,
    pub scorer: String,
    pub aggregation: Aggregation,
}

/// One scorer's document scores, in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    /// `<scorer>_<aggregation>`, e.g. `token_loss_mean`.
    pub name: String,
    pub scorer: String,
    pub aggregation: Aggregation,
    /// Token-level scorers keep per-token values; instance-level ones do not.
    pub token_level: bool,
    pub scores: Vec<MisannotationScore>,
}

/// A corpus featurized into a dataset, with the map back from examples to
/// sentences.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub corpus: &'a Corpus,
    pub dataset: &'a Dataset,
    pub refs: &'a [SentenceRef],
}

impl ScoringInput<'_> {
    fn check(&self) -> Result<()> {
        if self.refs.len() != self.dataset.len() {
            return Err(Error::LengthMismatch {
                expected: self.dataset.len(),
                found: self.refs.len(),
            });
        }
        Ok(())
    }

    /// Per-sentence values regrouped per document, in sentence order.
    fn by_doc(&self, per_example: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.corpus.documents.len()];
        let mut order: Vec<usize> = (0..self.refs.len()).collect();
        order.sort_by_key(|&i| self.refs[i]);
        let mut per_example: Vec<Option<Vec<f64>>> = per_example.into_iter().map(Some).collect();
        for i in order {
            out[self.refs[i].doc].extend(per_example[i].take().unwrap_or_default());
        }
        out
    }

    fn sets(&self, scorer: &str, per_example: Vec<Vec<f64>>, token_level: bool) -> Vec<ScoreSet> {
        let per_doc = self.by_doc(per_example);
        Aggregation::ALL
            .iter()
            .map(|&aggregation| ScoreSet {
                name: format!("{scorer}_{}", aggregation.as_str()),
                scorer: scorer.to_string(),
                aggregation,
                token_level,
                scores: self
                    .corpus
                    .documents
                    .iter()
                    .zip(&per_doc)
                    .map(|(doc, values)| MisannotationScore {
                        doc_id: doc.id.clone(),
                        token_scores: token_level.then(|| values.clone()),
                        doc_score: aggregation.apply(values),
                        scorer: scorer.to_string(),
                        aggregation,
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Instance loss, instance gradient norm, and token conditional loss,
/// gradient norm and entropy, each aggregated by mean and max.
pub fn score_baselines(input: ScoringInput<'_>, params: &CrfParams) -> Result<Vec<ScoreSet>> {
    input.check()?;
    struct PerExample {
        loss: f64,
        grad_norm: f64,
        token_loss: Vec<f64>,
        token_grad: Vec<f64>,
        entropy: Vec<f64>,
    }
    let rows: Vec<PerExample> = input
        .dataset
        .examples()
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let row = || -> Result<PerExample> {
                let (loss, grad) = crf::joint_loss_grad(&ex.obs, &ex.labels, params)?;
                let marginals = crf::position_marginals(&ex.obs, params)?;
                let y = ex.labels.as_slice();
                let mut token_loss = Vec::with_capacity(ex.len());
                let mut token_grad = Vec::with_capacity(ex.len());
                for t in 0..ex.len() {
                    let p = crf::token_conditional(&ex.obs, &ex.labels, t, params)?;
                    token_loss.push(-p[y[t]].ln());
                    let mut e = p;
                    e[y[t]] -= 1.0;
                    let dense = crf::expand_token_gradient(
                        params.n_labels(),
                        &e,
                        ex.obs.feature(t),
                        t.checked_sub(1).map(|s| y[s]),
                        y.get(t + 1).copied(),
                    );
                    token_grad.push(dense.norm());
                }
                let entropy = marginals
                    .iter()
                    .map(|row| {
                        -row.iter()
                            .filter(|p| **p > 0.0)
                            .map(|p| p * p.ln())
                            .sum::<f64>()
                    })
                    .collect();
                Ok(PerExample {
                    loss,
                    grad_norm: grad.norm(),
                    token_loss,
                    token_grad,
                    entropy,
                })
            };
            row().map_err(|e| e.at_example(i))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    out.extend(input.sets(
        "instance_loss",
        rows.iter().map(|r| vec![r.loss]).collect(),
        false,
    ));
    out.extend(input.sets(
        "instance_grad_norm",
        rows.iter().map(|r| vec![r.grad_norm]).collect(),
        false,
    ));
    out.extend(input.sets(
        "token_loss",
        rows.iter().map(|r| r.token_loss.clone()).collect(),
        true,
    ));
    out.extend(input.sets(
        "token_grad_norm",
        rows.iter().map(|r| r.token_grad.clone()).collect(),
        true,
    ));
    out.extend(input.sets(
        "token_entropy",
        rows.iter().map(|r| r.entropy.clone()).collect(),
        true,
    ));
    Ok(out)
}

fn mean_of_top(mut values: Vec<f64>, k: usize) -> f64 {
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(k);
    mean(&values)
}

/// Influence of the training data on a small clean validation set.
///
/// The instance scorer averages each training sentence's instance influence
/// over the validation sentences. The token scorer takes each training
/// token's influence on every validation token and averages the ten largest.
/// `engine` must be built over `input.dataset`; `token_cache` and
/// `instance_cache` are its token and instance gradient caches.
pub fn score_influence(
    input: ScoringInput<'_>,
    clean_val: &Dataset,
    engine: &InfluenceEngine<'_>,
    token_cache: &GradientCache,
    instance_cache: &GradientCache,
) -> Result<Vec<ScoreSet>> {
    input.check()?;
    if clean_val.is_empty() {
        return Err(Error::invalid(
            "influence scoring needs a non-empty clean validation set",
        ));
    }
    let val = clean_val.examples();
    let instance_queries: Vec<PreparedQuery> = val
        .par_iter()
        .enumerate()
        .map(|(i, ex)| engine.prepare(ex, Locator::new(i, Segment::full(ex.len()))))
        .collect::<Result<_>>()?;
    let Records::Instance(inst) = instance_cache.records() else {
        return Err(Error::invalid(
            "instance scorer needs an instance-granularity cache",
        ));
    };
    if inst.len() != input.dataset.len() {
        return Err(Error::LengthMismatch {
            expected: input.dataset.len(),
            found: inst.len(),
        });
    }
    let instance_scores: Vec<Vec<f64>> = inst
        .par_iter()
        .map(|r| {
            let vals: Vec<f64> = instance_queries
                .iter()
                .map(|q| -r.gradient.dot(&q.direction))
                .collect();
            vec![mean(&vals)]
        })
        .collect();

    let token_locs: Vec<(usize, usize)> = val
        .iter()
        .enumerate()
        .flat_map(|(i, ex)| (0..ex.len()).map(move |t| (i, t)))
        .collect();
    let token_queries: Vec<PreparedQuery> = token_locs
        .par_iter()
        .map(|&(i, t)| engine.prepare(&val[i], Locator::token(i, t)))
        .collect::<Result<_>>()?;
    let Records::Token(recs) = token_cache.records() else {
        return Err(Error::invalid(
            "token scorer needs a token-granularity cache",
        ));
    };
    let flat: Vec<f64> = recs
        .par_iter()
        .map(|r| {
            mean_of_top(
                token_queries.iter().map(|q| -r.dot(&q.direction)).collect(),
                TOP_VALUES,
            )
        })
        .collect();
    let mut token_scores: Vec<Vec<f64>> = input
        .dataset
        .examples()
        .iter()
        .map(|ex| Vec::with_capacity(ex.len()))
        .collect();
    for (r, v) in recs.iter().zip(flat) {
        token_scores[r.example].push(v);
    }
    let mut out = input.sets("instance_influence", instance_scores, false);
    out.extend(input.sets("token_influence", token_scores, true));
    Ok(out)
}

/// Per training token, the mean of the ten largest dot products with
/// validation tokens carrying a different label. Tokens with no such
/// candidate score 0; the count of those is returned alongside.
pub fn score_segment_nn(
    input: ScoringInput<'_>,
    clean_val: &Dataset,
) -> Result<(Vec<ScoreSet>, usize)> {
    input.check()?;
    if clean_val.dim() != input.dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: input.dataset.dim(),
            found: clean_val.dim(),
        });
    }
    let val_tokens: Vec<(&[f64], usize)> = clean_val
        .examples()
        .iter()
        .flat_map(|ex| (0..ex.len()).map(move |t| (ex.obs.feature(t), ex.labels.as_slice()[t])))
        .collect();
    let per_example: Vec<(Vec<f64>, usize)> = input
        .dataset
        .examples()
        .par_iter()
        .map(|ex| {
            let mut empty = 0;
            let scores = (0..ex.len())
                .map(|t| {
                    let f = ex.obs.feature(t);
                    let y = ex.labels.as_slice()[t];
                    let sims: Vec<f64> = val_tokens
                        .iter()
                        .filter(|(_, l)| *l != y)
                        .map(|(g, _)| crf::dot_slices(f, g))
                        .collect();
                    if sims.is_empty() {
                        empty += 1;
                    }
                    mean_of_top(sims, TOP_VALUES)
                })
                .collect();
            (scores, empty)
        })
        .collect();
    let empty: usize = per_example.iter().map(|(_, e)| e).sum();
    if empty > 0 {
        log::warn!(
            "{empty} training tokens had no differently-labelled validation token; scored 0"
        );
    }
    Ok((
        input.sets(
            "segment_nn",
            per_example.into_iter().map(|(s, _)| s).collect(),
            true,
        ),
        empty,
    ))
}
