use std::collections::BTreeSet;

use anyhow::Context;
use serde::Serialize;

use seginf::corpus::{entity_spans, Corpus};
use seginf::crf::{self, CrfParams};
use seginf::dataset::Dataset;
use seginf::features::{parse_stopwords, FeatureConfig};
use seginf::model_file::ModelFile;
use seginf::report::RunReport;
use seginf::trainer::{self, Init, TrainConfig};

use super::{model_and_table, read_corpus, read_embeddings};
use crate::args::{required, PredictArgs, TrainArgs};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Accuracy {
    pub tokens: usize,
    pub token_accuracy: f64,
    pub sentence_exact_match: f64,
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
}

pub fn decode_all(dataset: &Dataset, params: &CrfParams) -> seginf::Result<Vec<Vec<usize>>> {
    dataset
        .examples()
        .iter()
        .map(|ex| crf::viterbi_decode(&ex.obs, params).map(|(y, _)| y.0))
        .collect()
}

/// Token accuracy, exact sentence matches, and exact-span entity scores.
pub fn accuracy(corpus: &Corpus, gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Accuracy {
    let mut tokens = 0;
    let mut correct = 0;
    let mut exact = 0;
    let (mut tp, mut n_gold, mut n_pred) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        tokens += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a == b).count();
        exact += usize::from(g == p);
        if corpus.is_bio() {
            let gs: BTreeSet<_> = entity_spans(g, &corpus.labels).into_iter().collect();
            let ps: BTreeSet<_> = entity_spans(p, &corpus.labels).into_iter().collect();
            tp += gs.intersection(&ps).count();
            n_gold += gs.len();
            n_pred += ps.len();
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Accuracy {
        tokens,
        token_accuracy: ratio(correct, tokens),
        sentence_exact_match: ratio(exact, gold.len()),
        entity_precision: precision,
        entity_recall: recall,
        entity_f1: f1,
    }
}

fn gold_labels(dataset: &Dataset) -> Vec<Vec<usize>> {
    dataset
        .examples()
        .iter()
        .map(|ex| ex.labels.0.clone())
        .collect()
}

pub fn train(args: TrainArgs, seed: u64) -> anyhow::Result<RunReport> {
    let train_path = required(&args.train, "train")?;
    let model_path = required(&args.model, "model")?;
    let corpus = read_corpus(train_path, None, &args.doc_marker)?;
    let table = read_embeddings(&args.emb)?;
    let mut features = FeatureConfig {
        context_window: args.context_window,
        context_embeddings: args.context_embeddings,
        ..FeatureConfig::default()
    };
    if let Some(path) = &args.stopwords {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        features.stopwords = parse_stopwords(&text);
    }
    let features = features.normalized()?;
    let cfg = TrainConfig {
        l2_ridge: args.ridge,
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        lbfgs_memory: args.lbfgs_memory,
        seed,
        init: if args.init_scale > 0.0 {
            Init::Uniform(args.init_scale)
        } else {
            Init::Zeros
        },
    };
    cfg.validate()?;

    let (dataset, _) = corpus.featurize(&table, &features)?;
    if dataset.is_empty() {
        return Err(seginf::Error::Invalid("training corpus has no sentences".into()).into());
    }
    let (params, diag) = trainer::train(&dataset, &cfg)?;
    if !diag.converged && !args.allow_unconverged {
        return Err(seginf::Error::NotConverged {
            iterations: diag.iterations,
            grad_inf_norm: diag.final_grad_inf_norm,
        }
        .into());
    }
    let model = ModelFile {
        labels: corpus.labels.clone(),
        feature_config: features,
        corpus_fingerprint: corpus.fingerprint(),
        embedding_fingerprint: table.fingerprint(),
        params,
    };
    model
        .save(model_path)
        .with_context(|| format!("writing model {}", model_path.display()))?;

    let pred = decode_all(&dataset, &model.params)?;
    let acc = accuracy(&corpus, &gold_labels(&dataset), &pred);
    let mut report = RunReport::new("train", seed, &args)?;
    report.metric("documents", corpus.documents.len())?;
    report.metric("sentences", dataset.len())?;
    report.metric("labels", corpus.labels.names())?;
    report.metric("feature_dim", dataset.dim())?;
    report.metric("parameters", model.params.n_params())?;
    report.metric("iterations", diag.iterations)?;
    report.metric("evaluations", diag.evaluations)?;
    report.metric("final_loss", diag.final_loss)?;
    report.metric("final_grad_inf_norm", diag.final_grad_inf_norm)?;
    report.metric("converged", diag.converged)?;
    report.metric("train_accuracy", acc)?;
    report.table(
        "loss_history",
        diag.loss_history.iter().enumerate().map(|(i, l)| (i, *l)),
    )?;
    report.artifact(model_path);
    Ok(report)
}

pub fn predict(args: PredictArgs, seed: u64) -> anyhow::Result<RunReport> {
    let (model, table) = model_and_table(&args.model, &args.emb)?;
    let input = required(&args.input, "input")?;
    let corpus = read_corpus(input, Some(&model.labels), &args.doc_marker)?;
    let (dataset, refs) = corpus.featurize(&table, &model.feature_config)?;
    let pred = decode_all(&dataset, &model.params)?;
    let acc = accuracy(&corpus, &gold_labels(&dataset), &pred);

    let mut report = RunReport::new("predict", seed, &args)?;
    report.metric("sentences", dataset.len())?;
    report.metric("accuracy", acc)?;
    if let Some(out) = &args.output {
        let mut tagged = corpus.clone();
        for (r, labels) in refs.iter().zip(pred) {
            tagged.documents[r.doc].sentences[r.sentence].labels = labels;
        }
        tagged
            .write_conll(out)
            .with_context(|| format!("writing {}", out.display()))?;
        report.artifact(out);
    }
    Ok(report)
}
