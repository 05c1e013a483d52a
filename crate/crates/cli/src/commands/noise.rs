use std::fmt::Write as _;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use seginf::influence::{GradientCache, Granularity, InfluenceEngine};
use seginf::noise::{
    self, retrieval_curve, CorruptionManifest, Gazetteer, MisannotationScore, ScoreSet,
    ScoringInput,
};
use seginf::report::RunReport;

use super::{check_training_corpus, model_and_table, read_corpus};
use crate::args::{required, CorruptArgs, CorruptKind, CurveArgs, ScoreArgs, ScorerArg};
use crate::UsageError;

pub fn corrupt(args: CorruptArgs, seed: u64) -> anyhow::Result<RunReport> {
    let kind = *required(&args.kind, "kind")?;
    let input = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let manifest_path = required(&args.manifest, "manifest")?;
    let corpus = read_corpus(input, None, &args.doc_marker)?;
    let (noisy, manifest) = match kind {
        CorruptKind::Artifact => {
            noise::insert_artifact(&corpus, args.rate, &args.artifact, &args.forced_label, seed)?
        }
        CorruptKind::Random => {
            let exclude: Vec<usize> = match &args.exclude_prefix {
                Some(prefix) => corpus
                    .documents
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| {
                        d.sentences.first().and_then(|s| s.tokens.first()) == Some(prefix)
                    })
                    .map(|(i, _)| i)
                    .collect(),
                None => Vec::new(),
            };
            noise::random_entity_noise(&corpus, args.n_docs, seed, &exclude)?
        }
        CorruptKind::Systematic => {
            let path = required(&args.gazetteer, "gazetteer")?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let gazetteer =
                Gazetteer::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
            noise::systematic_relabel(
                &corpus,
                &args.doc_prefix,
                &gazetteer,
                &args.from_type,
                &args.to_type,
                args.n_docs,
                seed,
            )?
        }
    };
    noisy
        .write_conll(output)
        .with_context(|| format!("writing {}", output.display()))?;
    manifest
        .save(manifest_path)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    let mut report = RunReport::new("corrupt", seed, &args)?;
    report.metric("documents", corpus.documents.len())?;
    report.metric("corrupted_documents", manifest.corrupted_docs.len())?;
    report.metric("inserts", manifest.inserts.len())?;
    report.metric("edits", manifest.edits.len())?;
    report.artifact(output);
    report.artifact(manifest_path);
    Ok(report)
}

/// One line of a score file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreLine {
    pub name: String,
    #[serde(flatten)]
    pub score: MisannotationScore,
}

#[derive(Debug, Serialize)]
struct TopDoc<'a> {
    name: &'a str,
    rank: usize,
    doc: &'a str,
    score: f64,
}

const TOP_DOCS: usize = 10;

pub fn score(args: ScoreArgs, seed: u64) -> anyhow::Result<RunReport> {
    let mut scorers = args.scorers.clone();
    scorers.sort();
    scorers.dedup();
    let needs_val = scorers.iter().any(|s| *s != ScorerArg::Baselines);
    if needs_val && args.clean_val.is_none() {
        return Err(UsageError("the influence and nn scorers need --clean-val".into()).into());
    }
    args.solver.mode().validate()?;
    let (model, table) = model_and_table(&args.model, &args.emb)?;
    let input_path = required(&args.input, "input")?;
    let output = required(&args.output, "output")?;
    let corpus = read_corpus(input_path, Some(&model.labels), &args.doc_marker)?;
    check_training_corpus(&model, &corpus, input_path);
    let (dataset, refs) = corpus.featurize(&table, &model.feature_config)?;
    let input = ScoringInput {
        corpus: &corpus,
        dataset: &dataset,
        refs: &refs,
    };
    let val = match &args.clean_val {
        Some(path) if needs_val => {
            let val_corpus = read_corpus(path, Some(&model.labels), &args.doc_marker)?;
            Some(val_corpus.featurize(&table, &model.feature_config)?.0)
        }
        _ => None,
    };

    let mut report = RunReport::new("score", seed, &args)?;
    let mut sets: Vec<ScoreSet> = Vec::new();
    for scorer in &scorers {
        match scorer {
            ScorerArg::Baselines => sets.extend(noise::score_baselines(input, &model.params)?),
            ScorerArg::Influence => {
                let val = val.as_ref().expect("checked above");
                let engine = InfluenceEngine::new(&dataset, &model.params, args.solver.mode())?;
                let tokens = GradientCache::build(&dataset, &model.params, Granularity::Token)?;
                let instances =
                    GradientCache::build(&dataset, &model.params, Granularity::Instance)?;
                sets.extend(noise::score_influence(
                    input, val, &engine, &tokens, &instances,
                )?);
            }
            ScorerArg::Nn => {
                let (nn, empty) =
                    noise::score_segment_nn(input, val.as_ref().expect("checked above"))?;
                report.metric("nn_tokens_without_candidates", empty)?;
                sets.extend(nn);
            }
        }
    }

    let mut text = String::new();
    for set in &sets {
        for s in &set.scores {
            let line = ScoreLine {
                name: set.name.clone(),
                score: s.clone(),
            };
            let _ = writeln!(text, "{}", serde_json::to_string(&line)?);
        }
    }
    std::fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;

    report.metric("documents", corpus.documents.len())?;
    report.metric(
        "score_sets",
        sets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
    )?;
    let mut rows = Vec::new();
    for set in &sets {
        let mut order: Vec<&MisannotationScore> = set.scores.iter().collect();
        order.sort_by(|a, b| {
            b.doc_score
                .total_cmp(&a.doc_score)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        rows.extend(
            order
                .iter()
                .take(TOP_DOCS)
                .enumerate()
                .map(|(i, s)| TopDoc {
                    name: &set.name,
                    rank: i + 1,
                    doc: &s.doc_id,
                    score: s.doc_score,
                }),
        );
    }
    report.table("top_documents", rows)?;
    report.artifact(output);
    Ok(report)
}

/// Score lines grouped by name, in order of first appearance.
pub fn read_scores(
    paths: &[std::path::PathBuf],
) -> anyhow::Result<Vec<(String, Vec<MisannotationScore>)>> {
    let mut groups: Vec<(String, Vec<MisannotationScore>)> = Vec::new();
    for path in paths {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScoreLine =
                serde_json::from_str(line).map_err(|e| seginf::Error::Parse {
                    line: i + 1,
                    message: format!("{}: {e}", path.display()),
                })?;
            match groups.iter_mut().find(|(n, _)| *n == parsed.name) {
                Some((_, g)) => g.push(parsed.score),
                None => groups.push((parsed.name, vec![parsed.score])),
            }
        }
    }
    Ok(groups)
}

#[derive(Debug, Serialize)]
struct AucRow<'a> {
    name: &'a str,
    auc: f64,
}

pub fn curve(args: CurveArgs, seed: u64) -> anyhow::Result<RunReport> {
    if args.scores.is_empty() {
        return Err(UsageError("missing --scores".into()).into());
    }
    let manifest_path = required(&args.manifest, "manifest")?;
    let manifest = CorruptionManifest::load(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let groups = read_scores(&args.scores)?;
    let curves: Vec<_> = groups
        .iter()
        .map(|(name, s)| (name.as_str(), retrieval_curve(s, &manifest)))
        .collect();

    let mut report = RunReport::new("curve", seed, &args)?;
    report.metric("corrupted_documents", manifest.corrupted_docs.len())?;
    if let Some((name, c)) = curves
        .iter()
        .max_by(|a, b| a.1.auc.total_cmp(&b.1.auc).then(b.0.cmp(a.0)))
    {
        report.metric("best", AucRow { name, auc: c.auc })?;
    }
    report.table(
        "auc",
        curves.iter().map(|(name, c)| AucRow { name, auc: c.auc }),
    )?;
    if let Some(path) = &args.output {
        let mut text = String::from("name\tn\tfraction\n");
        for (name, c) in &curves {
            for (n, f) in &c.points {
                let _ = writeln!(text, "{name}\t{n}\t{f}");
            }
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        report.artifact(path);
    }
    Ok(report)
}
