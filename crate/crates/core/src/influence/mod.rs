//! Influence of training segments on test segments.
//!
//! The influence of a training segment `s'` on a test segment `s` is
//! `I = -g_testᵀ H⁻¹ g_train`, where both gradients are of the conditional
//! segment loss and `H` is the Hessian of the mean training joint loss
//! (damped, or replaced by the identity, per [`HessianMode`]). Full-span
//! segments reduce to instance influence. A negative value means that
//! upweighting the training segment lowers the test loss (supporting).
//!
//! Removing a training segment changes the test loss by about `-I / N`.

pub mod cache;
pub mod nn;
mod solver;

use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfGradient, CrfParams, Segment};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};

pub use cache::{GradientCache, Granularity, Records, TokenRecord};
pub use nn::{segment_nn, Neighbor, Similarity};
pub use solver::{conjugate_gradient, explicit_hessian, hvp, HessianMode, Solver};

/// An example index and a 1-based inclusive segment within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Locator {
    pub example: usize,
    pub segment: Segment,
}

impl Locator {
    pub fn new(example: usize, segment: Segment) -> Self {
        Self { example, segment }
    }

    /// A single token at 0-based `position`.
    pub fn token(example: usize, position: usize) -> Self {
        Self::new(example, Segment::token(position + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Supporting,
    Opposing,
    Neutral,
}

impl Direction {
    pub fn of(value: f64) -> Self {
        if value < 0.0 {
            Direction::Supporting
        } else if value > 0.0 {
            Direction::Opposing
        } else {
            Direction::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceResult {
    pub train: Locator,
    pub test: Locator,
    pub value: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    /// Largest value first.
    Signed,
    /// Largest magnitude first.
    Absolute,
    /// Most negative (most supporting) first.
    Supporting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub results: Vec<InfluenceResult>,
    /// Set when fewer than `k` candidates existed.
    pub truncated: bool,
}

/// A test segment with `H⁻¹ g_test` already applied.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub test: Locator,
    pub direction: CrfGradient,
}

/// Gradient of the conditional loss of `seg`; the joint loss for a full span.
pub fn segment_gradient(
    example: &Example,
    seg: Segment,
    params: &CrfParams,
) -> Result<CrfGradient> {
    seg.check(example.len())?;
    if seg == Segment::full(example.len()) {
        crf::grad_joint_loss(&example.obs, &example.labels, params)
    } else {
        crf::grad_conditional_loss(&example.obs, &example.labels, seg, params)
    }
}

pub struct InfluenceEngine<'a> {
    train: &'a Dataset,
    params: &'a CrfParams,
    mode: HessianMode,
    solver: Solver<'a>,
}

impl<'a> InfluenceEngine<'a> {
    /// Explicit mode builds and factors the dense Hessian here, once.
    pub fn new(train: &'a Dataset, params: &'a CrfParams, mode: HessianMode) -> Result<Self> {
        params.same_shape(train.n_labels(), train.dim())?;
        Ok(Self {
            train,
            params,
            mode,
            solver: Solver::new(train, params, mode)?,
        })
    }

    pub fn mode(&self) -> HessianMode {
        self.mode
    }

    pub fn train(&self) -> &Dataset {
        self.train
    }

    pub fn params(&self) -> &CrfParams {
        self.params
    }

    pub fn prepare(&self, test: &Example, locator: Locator) -> Result<PreparedQuery> {
        let g = segment_gradient(test, locator.segment, self.params)?;
        Ok(PreparedQuery {
            test: locator,
            direction: self.solver.solve(&g)?,
        })
    }

    /// `-⟨H⁻¹ g_test, g_train⟩`, using `cache` when it holds the record.
    pub fn value(
        &self,
        query: &PreparedQuery,
        train: Locator,
        cache: Option<&GradientCache>,
    ) -> Result<f64> {
        let ex = self.train.get(train.example)?;
        train
            .segment
            .check(ex.len())
            .map_err(|e| e.at_example(train.example))?;
        if let Some(cache) = cache {
            self.check_cache(cache)?;
            if train.segment.is_single() {
                if let Some(rec) = cache.token(train.example, train.segment.a - 1) {
                    return Ok(-rec.dot(&query.direction));
                }
            }
            if train.segment == Segment::full(ex.len()) {
                if let Some(g) = cache.instance(train.example) {
                    return Ok(-g.dot(&query.direction));
                }
            }
        }
        let g = segment_gradient(ex, train.segment, self.params)
            .map_err(|e| e.at_example(train.example))?;
        Ok(-g.dot(&query.direction))
    }

    fn check_cache(&self, cache: &GradientCache) -> Result<()> {
        if cache.n_labels() != self.train.n_labels() || cache.dim() != self.train.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train.dim(),
                found: cache.dim(),
            });
        }
        if cache.n_examples() != self.train.len() {
            return Err(Error::LengthMismatch {
                expected: self.train.len(),
                found: cache.n_examples(),
            });
        }
        Ok(())
    }

    fn result(&self, query: &PreparedQuery, train: Locator, value: f64) -> InfluenceResult {
        InfluenceResult {
            train,
            test: query.test,
            value,
            direction: Direction::of(value),
        }
    }

    /// Influence of training example `train_index` on the whole of `test`.
    pub fn instance_influence(
        &self,
        test: &Example,
        test_index: usize,
        train_index: usize,
        cache: Option<&GradientCache>,
    ) -> Result<InfluenceResult> {
        let q = self.prepare(test, Locator::new(test_index, Segment::full(test.len())))?;
        let train_len = self.train.get(train_index)?.len();
        let train = Locator::new(train_index, Segment::full(train_len));
        let v = self.value(&q, train, cache)?;
        Ok(self.result(&q, train, v))
    }

    pub fn segment_influence(
        &self,
        test: &Example,
        test_locator: Locator,
        train: Locator,
        cache: Option<&GradientCache>,
    ) -> Result<InfluenceResult> {
        let q = self.prepare(test, test_locator)?;
        let v = self.value(&q, train, cache)?;
        Ok(self.result(&q, train, v))
    }

    /// Influence of every record in `cache` (every training token, or every
    /// training example), in cache order.
    pub fn all_influences(
        &self,
        query: &PreparedQuery,
        cache: &GradientCache,
    ) -> Result<Vec<InfluenceResult>> {
        use rayon::prelude::*;
        self.check_cache(cache)?;
        Ok(match cache.records() {
            Records::Token(recs) => recs
                .par_iter()
                .map(|r| {
                    self.result(
                        query,
                        Locator::token(r.example, r.position),
                        -r.dot(&query.direction),
                    )
                })
                .collect(),
            Records::Instance(recs) => recs
                .par_iter()
                .map(|r| {
                    let len = self.train.examples()[r.example].len();
                    self.result(
                        query,
                        Locator::new(r.example, Segment::full(len)),
                        -r.gradient.dot(&query.direction),
                    )
                })
                .collect(),
        })
    }

    pub fn top_k_influential(
        &self,
        query: &PreparedQuery,
        k: usize,
        cache: &GradientCache,
        rank_by: RankBy,
    ) -> Result<TopK> {
        let all = self.all_influences(query, cache)?;
        Ok(top_k(all, k, rank_by))
    }
}

/// Sorts by the ranking key, breaking ties by training locator, and keeps `k`.
pub fn top_k(mut all: Vec<InfluenceResult>, k: usize, rank_by: RankBy) -> TopK {
    let key = |r: &InfluenceResult| match rank_by {
        RankBy::Signed => r.value,
        RankBy::Absolute => r.value.abs(),
        RankBy::Supporting => -r.value,
    };
    all.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.train.cmp(&b.train)));
    let truncated = all.len() < k;
    all.truncate(k);
    TopK {
        results: all,
        truncated,
    }
}

#[cfg(test)]
mod tests;
