//! End-to-end experiments on the synthetic corpora: approximation validity,
//! artifact recovery, noise detection, and label-conflict analysis.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceRef};
use crate::crf::{self, CrfParams, Segment};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, FeatureConfig};
use crate::influence::{GradientCache, Granularity, HessianMode, InfluenceEngine, Locator, RankBy};
use crate::noise::{
    self, ConflictReport, CorruptionManifest, Gazetteer, PatternMatcher, RetrievalCurve,
    ScoringInput,
};
use crate::oracle::{self, ValidationConfig, ValidationOutcome};
use crate::synth;
use crate::trainer::{self, Diagnostics, TrainConfig};

/// A corpus featurized and trained on.
#[derive(Debug, Clone)]
pub struct Trained {
    pub dataset: Dataset,
    pub refs: Vec<SentenceRef>,
    pub params: CrfParams,
    pub diagnostics: Diagnostics,
}

pub fn train_corpus(
    corpus: &Corpus,
    table: &EmbeddingTable,
    features: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let (dataset, refs) = corpus.featurize(table, features)?;
    let (params, diagnostics) = trainer::train(&dataset, cfg)?;
    Ok(Trained {
        dataset,
        refs,
        params,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValiditySpec {
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub ridge: f64,
}

impl Default for ValiditySpec {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_val: 200,
            seed: 1,
            ridge: 1e-3,
        }
    }
}

/// Predicted versus retrained change in conditional loss on the
/// five-label corpus.
pub fn approximation_validity(spec: &ValiditySpec) -> Result<(ValidationOutcome, Trained)> {
    let (corpora, table) = synth::ner_corpora(
        &synth::NerSpec::default(),
        &[spec.n_train, spec.n_val],
        spec.seed,
    );
    let cfg = TrainConfig {
        l2_ridge: spec.ridge,
        ..TrainConfig::default()
    };
    let features = synth::ner_features();
    let trained = train_corpus(&corpora[0], &table, &features, &cfg)?;
    let (val, _) = corpora[1].featurize(&table, &features)?;
    let outcome = oracle::validation_experiment(
        &trained.dataset,
        &val,
        &trained.params,
        &cfg,
        &ValidationConfig {
            seed: spec.seed,
            ..ValidationConfig::default()
        },
    )?;
    Ok((outcome, trained))
}

/// Example index of every `(doc id, sentence)` pair in `refs`.
fn example_index(
    corpus: &Corpus,
    refs: &[SentenceRef],
) -> std::collections::HashMap<(String, usize), usize> {
    refs.iter()
        .enumerate()
        .map(|(i, r)| ((corpus.documents[r.doc].id.clone(), r.sentence), i))
        .collect()
}

/// `example` with its labels replaced by the Viterbi prediction.
fn predicted(example: &Example, params: &CrfParams) -> Result<Example> {
    let (labels, _) = crf::viterbi_decode(&example.obs, params)?;
    Ok(Example {
        obs: example.obs.clone(),
        labels,
    })
}

fn entity_type(label: &str) -> Option<&str> {
    crate::corpus::bio_parts(label).map(|(_, t)| t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub emb_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub rate: f64,
    pub forced_label: String,
    pub seed: u64,
    pub ridge: f64,
    pub mode: HessianMode,
    pub rank_by: RankBy,
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        Self {
            emb_dim: 12,
            n_train: 1500,
            n_val: 400,
            rate: 0.10,
            forced_label: "B-PER".into(),
            seed: 1,
            ridge: 1e-3,
            mode: HessianMode::ExplicitDamped { damping: 1e-3 },
            rank_by: RankBy::Absolute,
        }
    }
}

/// One validation token that follows an inserted artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactQuery {
    pub val_example: usize,
    /// 0-based position of the token after the artifact.
    pub position: usize,
    pub predicted_label: String,
    /// Label of the token before the artifact forced it.
    pub original_label: String,
    /// The original label is not of the forced label's entity type, so the
    /// artifact is what changed it.
    pub artifact_driven: bool,
    pub top_token: Locator,
    pub top_token_value: f64,
    pub token_adjacent: bool,
    pub top_instance: usize,
    pub top_instance_value: f64,
    pub instance_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactOutcome {
    pub queries: Vec<ArtifactQuery>,
    /// Number of artifact-driven queries; the rates below are over these.
    pub n_driven: usize,
    /// Fraction of queries whose most influential training token sits next
    /// to an artifact.
    pub adjacency_rate: f64,
    /// Fraction of queries whose most influential training example carries
    /// an artifact.
    pub instance_hit_rate: f64,
    /// Adjacency rate over every query, artifact-driven or not.
    pub adjacency_rate_all: f64,
    /// Fraction of queries predicted as the forced label.
    pub forced_prediction_rate: f64,
    pub train_manifest: CorruptionManifest,
}

/// Inserts an artifact token into a fraction of training and validation
/// sentences, trains, and asks which training token (and which training
/// example) most influences the prediction on each token that follows an
/// artifact in validation.
pub fn artifact_recovery(spec: &ArtifactSpec) -> Result<ArtifactOutcome> {
    let ner = synth::NerSpec {
        emb_dim: spec.emb_dim,
        ..synth::NerSpec::default()
    };
    let (corpora, table) = synth::artifact_corpora(&ner, &[spec.n_train, spec.n_val], spec.seed);
    let (train_corpus_, train_manifest) = noise::insert_artifact(
        &corpora[0],
        spec.rate,
        synth::ARTIFACT_TOKEN,
        &spec.forced_label,
        spec.seed,
    )?;
    let (val_corpus, val_manifest) = noise::insert_artifact(
        &corpora[1],
        spec.rate,
        synth::ARTIFACT_TOKEN,
        &spec.forced_label,
        spec.seed.wrapping_add(1),
    )?;
    let features = synth::contextual_features();
    let cfg = TrainConfig {
        l2_ridge: spec.ridge,
        ..TrainConfig::default()
    };
    let trained = train_corpus(&train_corpus_, &table, &features, &cfg)?;
    let (val, val_refs) = val_corpus.featurize(&table, &features)?;

    let train_index = example_index(&train_corpus_, &trained.refs);
    let mut adjacent = std::collections::HashSet::new();
    let mut artifact_examples = std::collections::HashSet::new();
    for ins in &train_manifest.inserts {
        let ex = train_index[&(ins.doc.clone(), ins.sentence)];
        artifact_examples.insert(ex);
        adjacent.insert((ex, ins.position + 1));
        if ins.position > 0 {
            adjacent.insert((ex, ins.position - 1));
        }
    }

    let engine = InfluenceEngine::new(&trained.dataset, &trained.params, spec.mode)?;
    let token_cache = GradientCache::build(&trained.dataset, &trained.params, Granularity::Token)?;
    let instance_cache =
        GradientCache::build(&trained.dataset, &trained.params, Granularity::Instance)?;
    let forced = train_corpus_.labels.index_of(&spec.forced_label)?;
    let val_index = example_index(&val_corpus, &val_refs);

    let mut queries = Vec::new();
    for (ins, edit) in val_manifest.inserts.iter().zip(&val_manifest.edits) {
        let i = val_index[&(ins.doc.clone(), ins.sentence)];
        let t = ins.position + 1;
        let test = predicted(&val.examples()[i], &trained.params)?;
        let label = test.labels.as_slice()[t];

        let q = engine.prepare(&test, Locator::token(i, t))?;
        let top = engine.top_k_influential(&q, 1, &token_cache, spec.rank_by)?;
        let tok = top
            .results
            .first()
            .ok_or_else(|| Error::invalid("empty token cache"))?;
        let q = engine.prepare(&test, Locator::new(i, Segment::full(test.len())))?;
        let top = engine.top_k_influential(&q, 1, &instance_cache, spec.rank_by)?;
        let inst = top
            .results
            .first()
            .ok_or_else(|| Error::invalid("empty instance cache"))?;
        queries.push(ArtifactQuery {
            val_example: i,
            position: t,
            predicted_label: train_corpus_.labels.name(label).to_string(),
            original_label: edit.old.clone(),
            artifact_driven: entity_type(&edit.old) != entity_type(&spec.forced_label),
            top_token: tok.train,
            top_token_value: tok.value,
            token_adjacent: adjacent.contains(&(tok.train.example, tok.train.segment.a - 1)),
            top_instance: inst.train.example,
            top_instance_value: inst.value,
            instance_hit: artifact_examples.contains(&inst.train.example),
        });
    }
    let frac = |f: &dyn Fn(&ArtifactQuery) -> bool, driven_only: bool| {
        let pool: Vec<&ArtifactQuery> = queries
            .iter()
            .filter(|q| q.artifact_driven || !driven_only)
            .collect();
        if pool.is_empty() {
            0.0
        } else {
            pool.iter().filter(|q| f(q)).count() as f64 / pool.len() as f64
        }
    };
    let forced_name = train_corpus_.labels.name(forced).to_string();
    Ok(ArtifactOutcome {
        n_driven: queries.iter().filter(|q| q.artifact_driven).count(),
        adjacency_rate: frac(&|q| q.token_adjacent, true),
        instance_hit_rate: frac(&|q| q.instance_hit, true),
        adjacency_rate_all: frac(&|q| q.token_adjacent, false),
        forced_prediction_rate: frac(&|q| q.predicted_label == forced_name, true),
        queries,
        train_manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub n_general: usize,
    pub n_soccer: usize,
    pub n_random: usize,
    pub n_systematic: usize,
    pub n_clean_val: usize,
    pub seed: u64,
    pub ridge: f64,
    pub mode: HessianMode,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            n_general: 420,
            n_soccer: 80,
            n_random: 100,
            n_systematic: 20,
            n_clean_val: 10,
            seed: 1,
            ridge: 1e-3,
            mode: HessianMode::ExplicitDamped { damping: 1e-3 },
        }
    }
}

/// Retrieval AUC of one scorer against each kind of noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerAuc {
    pub name: String,
    pub scorer: String,
    pub random_auc: f64,
    pub systematic_auc: f64,
}

pub const BASELINE_SCORERS: [&str; 5] = [
    "instance_loss",
    "instance_grad_norm",
    "token_loss",
    "token_grad_norm",
    "token_entropy",
];
pub const INFLUENCE_SCORERS: [&str; 2] = ["instance_influence", "token_influence"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseOutcome {
    pub aucs: Vec<ScorerAuc>,
    pub curves: Vec<(String, RetrievalCurve, RetrievalCurve)>,
    pub random_manifest: CorruptionManifest,
    pub systematic_manifest: CorruptionManifest,
    pub empty_nn_tokens: usize,
}

impl NoiseOutcome {
    fn best(&self, scorers: &[&str], f: impl Fn(&ScorerAuc) -> f64) -> f64 {
        self.aucs
            .iter()
            .filter(|a| scorers.contains(&a.scorer.as_str()))
            .map(f)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best_token_loss_random(&self) -> f64 {
        self.best(&["token_loss"], |a| a.random_auc)
    }

    pub fn best_influence_random(&self) -> f64 {
        self.best(&INFLUENCE_SCORERS, |a| a.random_auc)
    }

    pub fn best_baseline_systematic(&self) -> f64 {
        self.best(&BASELINE_SCORERS, |a| a.systematic_auc)
    }

    pub fn best_influence_systematic(&self) -> f64 {
        self.best(&INFLUENCE_SCORERS, |a| a.systematic_auc)
    }

    /// Weakest influence scorer on systematic noise, each at its better
    /// aggregation.
    pub fn worst_influence_systematic(&self) -> f64 {
        INFLUENCE_SCORERS
            .iter()
            .map(|s| self.best(&[s], |a| a.systematic_auc))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Injects systematic ORG-to-LOC noise into soccer documents and random
/// entity noise into other documents of one news corpus, trains on it, and
/// evaluates every scorer's retrieval of each kind of noise. Influence
/// scorers use a few clean soccer documents as validation.
pub fn noise_detection(spec: &NoiseSpec) -> Result<NoiseOutcome> {
    let news = synth::news_corpora(
        &synth::NewsSpec {
            n_general: spec.n_general,
            n_soccer: spec.n_soccer,
            ..synth::NewsSpec::default()
        },
        spec.n_clean_val,
        spec.seed,
    );
    let gazetteer = Gazetteer::parse(&news.gazetteer)?;
    let (systematic, systematic_manifest) = noise::systematic_relabel(
        &news.train,
        "SOCCER",
        &gazetteer,
        "ORG",
        "LOC",
        spec.n_systematic,
        spec.seed,
    )?;
    let soccer: Vec<usize> = systematic
        .documents
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            d.sentences
                .first()
                .and_then(|s| s.tokens.first())
                .is_some_and(|t| t == "SOCCER")
        })
        .map(|(i, _)| i)
        .collect();
    let (noisy, random_manifest) = noise::random_entity_noise(
        &systematic,
        spec.n_random,
        spec.seed.wrapping_add(1),
        &soccer,
    )?;

    let features = synth::contextual_features();
    let cfg = TrainConfig {
        l2_ridge: spec.ridge,
        ..TrainConfig::default()
    };
    let trained = train_corpus(&noisy, &news.embeddings, &features, &cfg)?;
    let (clean_val, _) = news.soccer_val.featurize(&news.embeddings, &features)?;
    let input = ScoringInput {
        corpus: &noisy,
        dataset: &trained.dataset,
        refs: &trained.refs,
    };
    let engine = InfluenceEngine::new(&trained.dataset, &trained.params, spec.mode)?;
    let token_cache = GradientCache::build(&trained.dataset, &trained.params, Granularity::Token)?;
    let instance_cache =
        GradientCache::build(&trained.dataset, &trained.params, Granularity::Instance)?;

    let mut sets = noise::score_baselines(input, &trained.params)?;
    sets.extend(noise::score_influence(
        input,
        &clean_val,
        &engine,
        &token_cache,
        &instance_cache,
    )?);
    let (nn, empty_nn_tokens) = noise::score_segment_nn(input, &clean_val)?;
    sets.extend(nn);

    let mut aucs = Vec::new();
    let mut curves = Vec::new();
    for set in &sets {
        let random = noise::retrieval_curve(&set.scores, &random_manifest);
        let systematic = noise::retrieval_curve(&set.scores, &systematic_manifest);
        aucs.push(ScorerAuc {
            name: set.name.clone(),
            scorer: set.scorer.clone(),
            random_auc: random.auc,
            systematic_auc: systematic.auc,
        });
        curves.push((set.name.clone(), random, systematic));
    }
    Ok(NoiseOutcome {
        aucs,
        curves,
        random_manifest,
        systematic_manifest,
        empty_nn_tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub include_rate: f64,
    pub dosage_rate: f64,
    pub seed: u64,
    pub ridge: f64,
    pub mode: HessianMode,
}

impl Default for ConflictSpec {
    fn default() -> Self {
        Self {
            n_train: 400,
            n_test: 100,
            include_rate: 0.5,
            dosage_rate: 0.3,
            seed: 1,
            ridge: 1e-3,
            mode: HessianMode::ExplicitDamped { damping: 1e-3 },
        }
    }
}

/// Trains on intervention spans that include the dosage about half of the
/// time, then checks whether the top supporting and opposing training
/// examples of each mispredicted dosage token disagree about the dosage.
pub fn label_conflict(spec: &ConflictSpec) -> Result<ConflictReport> {
    let data = synth::dosage_corpora(
        spec.n_train,
        spec.n_test,
        spec.include_rate,
        spec.dosage_rate,
        spec.seed,
    );
    let features = synth::contextual_features();
    let cfg = TrainConfig {
        l2_ridge: spec.ridge,
        ..TrainConfig::default()
    };
    let trained = train_corpus(&data.train, &data.embeddings, &features, &cfg)?;
    let (test, _) = data.test.featurize(&data.embeddings, &features)?;
    let engine = InfluenceEngine::new(&trained.dataset, &trained.params, spec.mode)?;
    let token_cache = GradientCache::build(&trained.dataset, &trained.params, Granularity::Token)?;
    let instance_cache =
        GradientCache::build(&trained.dataset, &trained.params, Granularity::Instance)?;
    let matcher = PatternMatcher::parse(synth::DOSAGE_PATTERNS)?;
    let outside = data.train.labels.index_of("O")?;
    noise::conflict_analysis(
        &test,
        &engine,
        &token_cache,
        &instance_cache,
        &matcher,
        outside,
    )
}
