use std::path::Path;

use anyhow::Context;

use seginf::corpus::Corpus;
use seginf::features::EmbeddingTable;
use seginf::report::RunReport;
use seginf::synth::{self, NerSpec, NewsSpec};

use crate::args::{required, SynthArgs, SynthKind};

fn write(path: &Path, text: &str, report: &mut RunReport) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    report.artifact(path);
    Ok(())
}

pub fn run(args: SynthArgs, seed: u64) -> anyhow::Result<RunReport> {
    let dir = required(&args.out_dir, "out-dir")?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut report = RunReport::new("synth", seed, &args)?;
    let ner = NerSpec {
        emb_dim: args.emb_dim,
        ..NerSpec::default()
    };
    let (train, test, table, extra): (Corpus, Corpus, EmbeddingTable, Option<(&str, String)>) =
        match args.kind {
            SynthKind::Ner | SynthKind::Artifact => {
                let splits = [args.n_train.unwrap_or(300), args.n_test.unwrap_or(100)];
                let (mut corpora, table) = if args.kind == SynthKind::Ner {
                    synth::ner_corpora(&ner, &splits, seed)
                } else {
                    synth::artifact_corpora(&ner, &splits, seed)
                };
                let test = corpora.pop().expect("two splits");
                (corpora.pop().expect("two splits"), test, table, None)
            }
            SynthKind::News => {
                let total = args.n_train.unwrap_or(500);
                let n_soccer = total * 4 / 25;
                let spec = NewsSpec {
                    n_general: total - n_soccer,
                    n_soccer,
                    emb_dim: args.emb_dim,
                    ..NewsSpec::default()
                };
                let news = synth::news_corpora(&spec, args.n_test.unwrap_or(10), seed);
                (
                    news.train,
                    news.soccer_val,
                    news.embeddings,
                    Some(("gazetteer.txt", news.gazetteer)),
                )
            }
            SynthKind::Dosage => {
                let d = synth::dosage_corpora(
                    args.n_train.unwrap_or(400),
                    args.n_test.unwrap_or(100),
                    args.include_rate,
                    args.dosage_rate,
                    seed,
                );
                (
                    d.train,
                    d.test,
                    d.embeddings,
                    Some(("patterns.txt", synth::DOSAGE_PATTERNS.to_string())),
                )
            }
        };
    write(&dir.join("train.conll"), &train.to_conll(), &mut report)?;
    write(&dir.join("test.conll"), &test.to_conll(), &mut report)?;
    write(&dir.join("embeddings.txt"), &table.to_text(), &mut report)?;
    if let Some((name, text)) = extra {
        write(&dir.join(name), &text, &mut report)?;
    }
    report.metric("train_documents", train.documents.len())?;
    report.metric("test_documents", test.documents.len())?;
    report.metric("train_tokens", train.n_tokens())?;
    report.metric("labels", train.labels.names())?;
    report.metric("embedding_dim", table.dim())?;
    Ok(report)
}
