use std::fmt::Write as _;

use anyhow::Context;
use serde::Serialize;

use seginf::corpus::{Corpus, SentenceRef};
use seginf::crf::{self, LabelSequence, Segment};
use seginf::influence::{GradientCache, Granularity, InfluenceEngine, Locator};
use seginf::noise::{conflict_analysis, PatternMatcher};
use seginf::oracle::{self, ValidationConfig};
use seginf::report::RunReport;
use seginf::trainer::TrainConfig;

use super::{check_training_corpus, model_and_table, read_corpus};
use crate::args::{required, ConflictArgs, InfluenceArgs, QueryLabels, ValidateArgs};
use crate::UsageError;

/// Parses `a:b` or `a` (1-based, inclusive).
fn parse_segment(text: &str) -> Result<Segment, UsageError> {
    let bad = || {
        UsageError(format!(
            "segment must be `a:b` or `a` with 1 <= a <= b, got {text:?}"
        ))
    };
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let (a, b) = match text.split_once(':') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => {
            let a = num(text)?;
            (a, a)
        }
    };
    Segment::new(a, b).map_err(|_| bad())
}

/// `w w [[x/B-PER y/I-PER]] w w`, with `context` tokens on each side.
pub fn snippet(corpus: &Corpus, at: SentenceRef, seg: Segment, context: usize) -> String {
    let sent = &corpus.documents[at.doc].sentences[at.sentence];
    let (a, b) = (seg.a - 1, seg.b - 1);
    let lo = a.saturating_sub(context);
    let hi = (b + context).min(sent.len() - 1);
    let mut out = String::new();
    if lo > 0 {
        out.push_str("... ");
    }
    for t in lo..=hi {
        if t == a {
            out.push_str("[[");
        }
        if (a..=b).contains(&t) {
            let _ = write!(
                out,
                "{}/{}",
                sent.tokens[t],
                corpus.labels.name(sent.labels[t])
            );
        } else {
            out.push_str(&sent.tokens[t]);
        }
        if t == b {
            out.push_str("]]");
        }
        if t < hi {
            out.push(' ');
        }
    }
    if hi + 1 < sent.len() {
        out.push_str(" ...");
    }
    out
}

#[derive(Debug, Serialize)]
struct InfluenceRow {
    rank: usize,
    doc: String,
    sentence: usize,
    /// 1-based inclusive token range.
    segment: (usize, usize),
    value: f64,
    direction: seginf::influence::Direction,
    snippet: String,
}

fn load_or_build_cache(
    args: &InfluenceArgs,
    train: &seginf::dataset::Dataset,
    params: &seginf::crf::CrfParams,
    granularity: Granularity,
    report: &mut RunReport,
) -> anyhow::Result<GradientCache> {
    let Some(path) = &args.cache else {
        return Ok(GradientCache::build(train, params, granularity)?);
    };
    if path.exists() {
        let cache = GradientCache::load(path)
            .with_context(|| format!("reading cache {}", path.display()))?;
        if cache.granularity() != granularity {
            return Err(seginf::Error::Invalid(format!(
                "cache {} has a different granularity",
                path.display()
            ))
            .into());
        }
        return Ok(cache);
    }
    let cache = GradientCache::build(train, params, granularity)?;
    cache
        .save(path)
        .with_context(|| format!("writing cache {}", path.display()))?;
    report.artifact(path);
    Ok(cache)
}

pub fn influence(args: InfluenceArgs, seed: u64) -> anyhow::Result<RunReport> {
    args.solver.mode().validate()?;
    let (model, table) = model_and_table(&args.model, &args.emb)?;
    let train_path = required(&args.train, "train")?;
    let test_path = required(&args.test, "test")?;
    let train_corpus = read_corpus(train_path, Some(&model.labels), &args.doc_marker)?;
    check_training_corpus(&model, &train_corpus, train_path);
    let test_corpus = read_corpus(test_path, Some(&model.labels), &args.doc_marker)?;
    let (train, train_refs) = train_corpus.featurize(&table, &model.feature_config)?;
    let (test, test_refs) = test_corpus.featurize(&table, &model.feature_config)?;

    let doc = match &args.doc {
        Some(id) => test_corpus
            .doc_index(id)
            .ok_or_else(|| seginf::Error::Invalid(format!("test corpus has no document {id:?}")))?,
        None => 0,
    };
    let at = SentenceRef {
        doc,
        sentence: args.sentence,
    };
    let index = test_refs.iter().position(|r| *r == at).ok_or_else(|| {
        seginf::Error::Invalid(format!(
            "no sentence {} in test document {doc}",
            args.sentence
        ))
    })?;
    let mut example = test.examples()[index].clone();
    let segment = match &args.segment {
        Some(s) => parse_segment(s)?,
        None => Segment::full(example.len()),
    };
    segment.check(example.len())?;
    if args.labels == QueryLabels::Predicted {
        example.labels = LabelSequence(crf::viterbi_decode(&example.obs, &model.params)?.0 .0);
    }

    let mut report = RunReport::new("influence", seed, &args)?;
    let granularity = Granularity::from(args.granularity);
    if train.is_empty() {
        return Err(seginf::Error::Invalid("query against an empty training cache".into()).into());
    }
    let cache = load_or_build_cache(&args, &train, &model.params, granularity, &mut report)?;
    if cache.is_empty() {
        return Err(seginf::Error::Invalid("query against an empty training cache".into()).into());
    }
    let engine = InfluenceEngine::new(&train, &model.params, args.solver.mode())?;
    let query = engine.prepare(&example, Locator::new(index, segment))?;
    let top = engine.top_k_influential(&query, args.k, &cache, args.rank_by.into())?;

    let mut shown = test_corpus.clone();
    shown.documents[at.doc].sentences[at.sentence].labels = example.labels.0.clone();
    report.metric("test_doc", &test_corpus.documents[doc].id)?;
    report.metric("test_sentence", args.sentence)?;
    report.metric("test_segment", (segment.a, segment.b))?;
    report.metric("test_snippet", snippet(&shown, at, segment, args.context))?;
    report.metric("candidates", cache.len())?;
    report.metric("truncated", top.truncated)?;
    report.table(
        "influence",
        top.results.iter().enumerate().map(|(i, r)| {
            let at = train_refs[r.train.example];
            InfluenceRow {
                rank: i + 1,
                doc: train_corpus.documents[at.doc].id.clone(),
                sentence: at.sentence,
                segment: (r.train.segment.a, r.train.segment.b),
                value: r.value,
                direction: r.direction,
                snippet: snippet(&train_corpus, at, r.train.segment, args.context),
            }
        }),
    )?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct PairRow {
    doc: String,
    sentence: usize,
    token: usize,
    text: String,
    predicted: f64,
    actual: f64,
}

pub fn validate(args: ValidateArgs, seed: u64) -> anyhow::Result<RunReport> {
    let (model, table) = model_and_table(&args.model, &args.emb)?;
    let train_path = required(&args.train, "train")?;
    let val_path = required(&args.val, "val")?;
    let train_corpus = read_corpus(train_path, Some(&model.labels), &args.doc_marker)?;
    check_training_corpus(&model, &train_corpus, train_path);
    let val_corpus = read_corpus(val_path, Some(&model.labels), &args.doc_marker)?;
    let (train, _) = train_corpus.featurize(&table, &model.feature_config)?;
    let (val, val_refs) = val_corpus.featurize(&table, &model.feature_config)?;
    let train_cfg = TrainConfig {
        l2_ridge: args.ridge,
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        seed,
        ..TrainConfig::default()
    };
    train_cfg.validate()?;
    let cfg = ValidationConfig {
        n_test_tokens: args.n_test_tokens,
        top_k: args.top_k,
        seed,
        damping: args.damping,
    };
    let outcome = oracle::validation_experiment(&train, &val, &model.params, &train_cfg, &cfg)?;

    let rows: Vec<PairRow> = outcome
        .pairs
        .iter()
        .map(|p| {
            let at = val_refs[p.test.example];
            let t = p.test.segment.a - 1;
            PairRow {
                doc: val_corpus.documents[at.doc].id.clone(),
                sentence: at.sentence,
                token: p.test.segment.a,
                text: val_corpus.documents[at.doc].sentences[at.sentence].tokens[t].clone(),
                predicted: p.predicted,
                actual: p.actual,
            }
        })
        .collect();
    let mut report = RunReport::new("validate", seed, &args)?;
    report.metric("pairs", outcome.pairs.len())?;
    report.metric("pearson_r", outcome.pearson_r)?;
    report.metric("spearman_rho", outcome.spearman_rho)?;
    report.metric("sign_agreement", outcome.sign_agreement)?;
    report.metric("removed_tokens", outcome.pool.len())?;
    report.metric("insufficient_tokens", outcome.insufficient_tokens)?;
    report.metric(
        "retrain_iterations",
        outcome
            .step_diagnostics
            .iter()
            .map(|d| d.iterations)
            .collect::<Vec<_>>(),
    )?;
    if let Some(path) = &args.pairs_out {
        let mut text = String::from("predicted\tactual\n");
        for p in &outcome.pairs {
            let _ = writeln!(text, "{:e}\t{:e}", p.predicted, p.actual);
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        report.artifact(path);
    }
    report.table("pairs", rows)?;
    Ok(report)
}

pub fn conflict(args: ConflictArgs, seed: u64) -> anyhow::Result<RunReport> {
    args.solver.mode().validate()?;
    let (model, table) = model_and_table(&args.model, &args.emb)?;
    let train_path = required(&args.train, "train")?;
    let test_path = required(&args.test, "test")?;
    let patterns_path = required(&args.patterns, "patterns")?;
    let train_corpus = read_corpus(train_path, Some(&model.labels), &args.doc_marker)?;
    check_training_corpus(&model, &train_corpus, train_path);
    let test_corpus = read_corpus(test_path, Some(&model.labels), &args.doc_marker)?;
    let text = std::fs::read_to_string(patterns_path)
        .with_context(|| format!("reading {}", patterns_path.display()))?;
    let matcher = PatternMatcher::parse(&text)
        .with_context(|| format!("parsing {}", patterns_path.display()))?;
    let outside = model.labels.index_of(&args.outside)?;

    let (train, train_refs) = train_corpus.featurize(&table, &model.feature_config)?;
    let (test, test_refs) = test_corpus.featurize(&table, &model.feature_config)?;
    let engine = InfluenceEngine::new(&train, &model.params, args.solver.mode())?;
    let tokens = GradientCache::build(&train, &model.params, Granularity::Token)?;
    let instances = GradientCache::build(&train, &model.params, Granularity::Instance)?;
    let out = conflict_analysis(&test, &engine, &tokens, &instances, &matcher, outside)?;

    let train_doc = |loc: Locator| {
        train_corpus.documents[train_refs[loc.example].doc]
            .id
            .clone()
    };
    let mut report = RunReport::new("conflict", seed, &args)?;
    report.metric("queries", out.records.len())?;
    report.metric("segment_example_rate", out.segment_example_rate)?;
    report.metric("segment_token_rate", out.segment_token_rate)?;
    report.metric("instance_rate", out.instance_rate)?;
    report.metric("nn_example_rate", out.nn_example_rate)?;
    report.metric("nn_token_rate", out.nn_token_rate)?;
    report.metric("no_matches", out.no_matches)?;
    report.table(
        "records",
        out.records.iter().map(|r| {
            let at = test_refs[r.test.example];
            serde_json::json!({
                "test_doc": test_corpus.documents[at.doc].id,
                "test_sentence": at.sentence,
                "test_token": r.test.segment.a,
                "segment": {
                    "supporting": train_doc(r.segment.supporting),
                    "opposing": train_doc(r.segment.opposing),
                    "example_conflict": r.segment.example_conflict,
                    "token_conflict": r.segment.token_conflict,
                },
                "instance": {
                    "supporting": train_doc(r.instance.supporting),
                    "opposing": train_doc(r.instance.opposing),
                    "example_conflict": r.instance.example_conflict,
                },
                "nearest_neighbor": {
                    "supporting": train_doc(r.nearest_neighbor.supporting),
                    "opposing": train_doc(r.nearest_neighbor.opposing),
                    "example_conflict": r.nearest_neighbor.example_conflict,
                    "token_conflict": r.nearest_neighbor.token_conflict,
                },
            })
        }),
    )?;
    Ok(report)
}
