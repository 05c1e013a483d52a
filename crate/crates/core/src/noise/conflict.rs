//! Do the top supporting and top opposing training items disagree on how a
//! pattern-matched span should be labelled?
//!
//! For every mispredicted test token inside a pattern match, each
//! attribution method names a supporting and an opposing training item. The
//! pair is a conflict when the supporting item leaves a matched span
//! outside any entity and the opposing item labels a matched span as
//! entity. For token-level methods this is also checked on the retrieved
//! tokens themselves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::patterns::PatternMatcher;
use crate::crf::{self, Segment};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::influence::{segment_nn, GradientCache, InfluenceEngine, Locator, Records, Similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictCheck {
    pub supporting: Locator,
    pub opposing: Locator,
    pub example_conflict: bool,
    /// Only for token-level methods.
    pub token_conflict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    /// Test example and 1-based token.
    pub test: Locator,
    pub segment: ConflictCheck,
    pub instance: ConflictCheck,
    pub nearest_neighbor: ConflictCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub records: Vec<ConflictRecord>,
    pub segment_example_rate: f64,
    pub segment_token_rate: f64,
    pub instance_rate: f64,
    pub nn_example_rate: f64,
    pub nn_token_rate: f64,
    /// Set when no mispredicted test token fell inside a pattern match.
    pub no_matches: bool,
}

/// Pattern matches of every sentence in a dataset.
struct MatchIndex {
    /// Per example and token: inside some matched span.
    in_span: Vec<Vec<bool>>,
    excludes: Vec<bool>,
    includes: Vec<bool>,
}

impl MatchIndex {
    fn build(data: &Dataset, matcher: &PatternMatcher, outside: usize) -> Self {
        let mut in_span = Vec::with_capacity(data.len());
        let mut excludes = Vec::with_capacity(data.len());
        let mut includes = Vec::with_capacity(data.len());
        for ex in data.examples() {
            let y = ex.labels.as_slice();
            let mut mask = vec![false; ex.len()];
            let (mut exc, mut inc) = (false, false);
            for (a, b) in matcher.find_spans(ex.obs.tokens()) {
                mask[a..=b].iter_mut().for_each(|m| *m = true);
                exc |= y[a..=b].iter().all(|&l| l == outside);
                inc |= y[a..=b].iter().all(|&l| l != outside);
            }
            in_span.push(mask);
            excludes.push(exc);
            includes.push(inc);
        }
        Self {
            in_span,
            excludes,
            includes,
        }
    }
}

fn check(
    train: &Dataset,
    index: &MatchIndex,
    outside: usize,
    supporting: Locator,
    opposing: Locator,
    token_level: bool,
) -> ConflictCheck {
    let example_conflict = index.excludes[supporting.example] && index.includes[opposing.example];
    let token_conflict = token_level.then(|| {
        let token_ok = |loc: Locator, want_outside: bool| {
            let t = loc.segment.a - 1;
            let label = train.examples()[loc.example].labels.as_slice()[t];
            index.in_span[loc.example][t] && (label == outside) == want_outside
        };
        token_ok(supporting, true) && token_ok(opposing, false)
    });
    ConflictCheck {
        supporting,
        opposing,
        example_conflict,
        token_conflict,
    }
}

fn rate(records: &[ConflictRecord], f: impl Fn(&ConflictRecord) -> bool) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
}

/// `token_cache` and `instance_cache` must be built over the engine's
/// training set. `outside` is the index of the outside label.
pub fn conflict_analysis(
    test: &Dataset,
    engine: &InfluenceEngine<'_>,
    token_cache: &GradientCache,
    instance_cache: &GradientCache,
    matcher: &PatternMatcher,
    outside: usize,
) -> Result<ConflictReport> {
    let params = engine.params();
    let train = engine.train();
    let train_index = MatchIndex::build(train, matcher, outside);
    let test_index = MatchIndex::build(test, matcher, outside);
    let mut targets = Vec::new();
    for (i, ex) in test.examples().iter().enumerate() {
        let (pred, _) = crf::viterbi_decode(&ex.obs, params)?;
        for t in 0..ex.len() {
            if pred.0[t] != ex.labels.as_slice()[t] && test_index.in_span[i][t] {
                targets.push((i, t));
            }
        }
    }
    if targets.is_empty() {
        log::warn!("no mispredicted test token lies inside a pattern match");
    }
    let Records::Instance(_) = instance_cache.records() else {
        return Err(Error::invalid(
            "conflict analysis needs an instance-granularity cache",
        ));
    };

    let records: Vec<ConflictRecord> = targets
        .par_iter()
        .map(|&(i, t)| -> Result<ConflictRecord> {
            let ex = &test.examples()[i];
            let extremes = |all: Vec<crate::influence::InfluenceResult>| {
                let min = all
                    .iter()
                    .min_by(|a, b| a.value.total_cmp(&b.value).then(a.train.cmp(&b.train)))
                    .map(|r| r.train);
                let max = all
                    .iter()
                    .max_by(|a, b| a.value.total_cmp(&b.value).then(b.train.cmp(&a.train)))
                    .map(|r| r.train);
                min.zip(max)
            };
            let q = engine.prepare(ex, Locator::token(i, t))?;
            let (sup, opp) = extremes(engine.all_influences(&q, token_cache)?)
                .ok_or_else(|| Error::invalid("empty token cache"))?;
            let segment = check(train, &train_index, outside, sup, opp, true);

            let q = engine.prepare(ex, Locator::new(i, Segment::full(ex.len())))?;
            let (sup, opp) = extremes(engine.all_influences(&q, instance_cache)?)
                .ok_or_else(|| Error::invalid("empty instance cache"))?;
            let instance = check(train, &train_index, outside, sup, opp, false);

            let gold = ex.labels.as_slice()[t];
            let f = ex.obs.feature(t);
            let same = segment_nn(f, train, Similarity::Cosine, 1, |_, _, l| l == gold)?;
            let diff = segment_nn(f, train, Similarity::Cosine, 1, |_, _, l| l != gold)?;
            let (Some(s), Some(d)) = (same.first(), diff.first()) else {
                return Err(Error::invalid(
                    "nearest-neighbour search found no candidates",
                ));
            };
            let nearest_neighbor = check(
                train,
                &train_index,
                outside,
                Locator::token(s.example, s.position),
                Locator::token(d.example, d.position),
                true,
            );
            Ok(ConflictRecord {
                test: Locator::token(i, t),
                segment,
                instance,
                nearest_neighbor,
            })
        })
        .collect::<Result<_>>()?;

    Ok(ConflictReport {
        segment_example_rate: rate(&records, |r| r.segment.example_conflict),
        segment_token_rate: rate(&records, |r| r.segment.token_conflict == Some(true)),
        instance_rate: rate(&records, |r| r.instance.example_conflict),
        nn_example_rate: rate(&records, |r| r.nearest_neighbor.example_conflict),
        nn_token_rate: rate(&records, |r| {
            r.nearest_neighbor.token_conflict == Some(true)
        }),
        no_matches: records.is_empty(),
        records,
    })
}
