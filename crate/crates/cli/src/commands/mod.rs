mod influence;
mod noise;
mod synth;
mod train;

use std::path::Path;

use anyhow::Context;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;

use seginf::corpus::{self, Corpus, ParseOptions};
use seginf::crf::LabelSet;
use seginf::features::EmbeddingTable;
use seginf::model_file::ModelFile;
use seginf::report::RunReport;

use crate::args::{required, Command, EmbeddingArgs};
use crate::config::{self, Table};

pub fn dispatch(
    command: Command,
    matches: &ArgMatches,
    file: Option<&Table>,
    seed: u64,
) -> anyhow::Result<RunReport> {
    fn m<T: Serialize + DeserializeOwned>(
        a: T,
        matches: &ArgMatches,
        file: Option<&Table>,
    ) -> anyhow::Result<T> {
        config::merge(a, matches, file)
    }
    match command {
        Command::Synth(a) => synth::run(m(a, matches, file)?, seed),
        Command::Train(a) => train::train(m(a, matches, file)?, seed),
        Command::Predict(a) => train::predict(m(a, matches, file)?, seed),
        Command::Influence(a) => influence::influence(m(a, matches, file)?, seed),
        Command::Validate(a) => influence::validate(m(a, matches, file)?, seed),
        Command::Conflict(a) => influence::conflict(m(a, matches, file)?, seed),
        Command::Corrupt(a) => noise::corrupt(m(a, matches, file)?, seed),
        Command::Score(a) => noise::score(m(a, matches, file)?, seed),
        Command::Curve(a) => noise::curve(m(a, matches, file)?, seed),
    }
}

/// Loads a corpus, warning when it is empty or breaks BIO.
pub fn read_corpus(
    path: &Path,
    labels: Option<&LabelSet>,
    doc_marker: &str,
) -> anyhow::Result<Corpus> {
    let opts = ParseOptions { labels, doc_marker };
    let mut corpus = corpus::load_conll(path, &opts)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    if labels.is_none() {
        corpus.complete_bio()?;
    }
    if corpus.n_sentences() == 0 {
        log::warn!("{} contains no sentences", path.display());
    }
    let violations = corpus.bio_violations();
    if !violations.is_empty() {
        log::warn!("{}: {} BIO violations", path.display(), violations.len());
        for v in violations.iter().take(5) {
            log::warn!(
                "  doc {} sentence {} token {}: {} without a matching B-",
                v.doc,
                v.sentence,
                v.position,
                v.label
            );
        }
    }
    Ok(corpus)
}

pub fn read_embeddings(args: &EmbeddingArgs) -> anyhow::Result<EmbeddingTable> {
    let path = required(&args.embeddings, "embeddings")?;
    EmbeddingTable::load(path, args.policy())
        .with_context(|| format!("reading embeddings {}", path.display()))
}

pub fn read_model(path: &Option<std::path::PathBuf>) -> anyhow::Result<ModelFile> {
    let path = required(path, "model")?;
    ModelFile::load(path).with_context(|| format!("reading model {}", path.display()))
}

/// Loads the model and embeddings and checks that they belong together.
pub fn model_and_table(
    model: &Option<std::path::PathBuf>,
    emb: &EmbeddingArgs,
) -> anyhow::Result<(ModelFile, EmbeddingTable)> {
    let model = read_model(model)?;
    let table = read_embeddings(emb)?;
    if table.fingerprint() != model.embedding_fingerprint {
        return Err(seginf::Error::Invalid(
            "embeddings differ from those the model was trained with".into(),
        )
        .into());
    }
    Ok((model, table))
}

/// Warns when `corpus` is not the one the model was trained on.
pub fn check_training_corpus(model: &ModelFile, corpus: &Corpus, path: &Path) {
    if corpus.fingerprint() != model.corpus_fingerprint {
        log::warn!(
            "{} is not the corpus the model was trained on; influence assumes a model at the optimum of this corpus",
            path.display()
        );
    }
}
