use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use seginf::features::OovPolicy;
use seginf::influence::{Granularity, HessianMode, RankBy};

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "seginf",
    version,
    about = "Segment-level influence for linear-chain CRF taggers"
)]
pub struct Cli {
    #[command(flatten)]
    pub globals: Globals,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Globals {
    /// TOML config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the JSONL report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Do not print the summary to stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with embeddings.
    Synth(SynthArgs),
    /// Train a CRF on a CoNLL corpus.
    Train(TrainArgs),
    /// Tag a corpus and score the predictions against its labels.
    Predict(PredictArgs),
    /// Rank training tokens or sentences by influence on a test segment.
    Influence(InfluenceArgs),
    /// Compare predicted influence with retraining on mispredicted tokens.
    Validate(ValidateArgs),
    /// Inject label noise and write a manifest.
    Corrupt(CorruptArgs),
    /// Score every document of a training corpus for misannotation.
    Score(ScoreArgs),
    /// Retrieval curves of score files against a manifest.
    Curve(CurveArgs),
    /// Supporting/opposing label conflicts inside pattern matches.
    Conflict(ConflictArgs),
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, UsageError> {
    value.as_ref().ok_or_else(|| {
        UsageError(format!(
            "missing --{flag} (or `{}` in the config file)",
            flag.replace('-', "_")
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovArg {
    Zero,
    Hashed,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EmbeddingArgs {
    /// Embedding file: `token v1 ... vd` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Vector for tokens missing from the table.
    #[arg(long, value_enum, default_value_t = OovArg::Zero)]
    pub oov: OovArg,
    /// Bucket count for `--oov hashed`.
    #[arg(long, default_value_t = 1000)]
    pub oov_buckets: u32,
}

impl EmbeddingArgs {
    pub fn policy(&self) -> OovPolicy {
        match self.oov {
            OovArg::Zero => OovPolicy::Zero,
            OovArg::Hashed => OovPolicy::HashedBucket(self.oov_buckets),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Identity,
    Explicit,
    Cg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// How the inverse Hessian is applied.
    #[arg(long, value_enum, default_value_t = ModeArg::Explicit)]
    pub mode: ModeArg,
    /// Damping λ added to the Hessian; use the training ridge for the exact
    /// Hessian of the training objective.
    #[arg(long, default_value_t = 1e-3)]
    pub damping: f64,
    #[arg(long, default_value_t = 1000)]
    pub cg_max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub cg_tol: f64,
}

impl SolverArgs {
    pub fn mode(&self) -> HessianMode {
        match self.mode {
            ModeArg::Identity => HessianMode::Identity,
            ModeArg::Explicit => HessianMode::ExplicitDamped {
                damping: self.damping,
            },
            ModeArg::Cg => HessianMode::CgHvp {
                damping: self.damping,
                max_cg_iters: self.cg_max_iters,
                cg_tol: self.cg_tol,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Five-label person/location sentences.
    Ner,
    /// `ner` plus an embedding for the artifact token `special`.
    Artifact,
    /// Nine-label news documents with soccer reports and a city gazetteer.
    News,
    /// Intervention spans with inconsistently labelled dosages.
    Dosage,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Ner)]
    pub kind: SynthKind,
    /// Directory for train.conll, test.conll, embeddings.txt and extras.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Training documents (kind-specific default).
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test documents (kind-specific default).
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 12)]
    pub emb_dim: usize,
    /// Dosage corpus: share of training dosages labelled inside the span.
    #[arg(long, default_value_t = 0.5)]
    pub include_rate: f64,
    /// Dosage corpus: share of training documents with a dosage.
    #[arg(long, default_value_t = 0.3)]
    pub dosage_rate: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training corpus (CoNLL columns).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    /// Output model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 10)]
    pub lbfgs_memory: usize,
    /// Keep the model even if L-BFGS stops before reaching `grad_tol`.
    #[arg(long)]
    pub allow_unconverged: bool,
    /// Uniform initialization in (-s, s); 0 starts from zeros.
    #[arg(long, default_value_t = 0.0)]
    pub init_scale: f64,
    /// 0: own indicator features only; 1: also neighbours'.
    #[arg(long, default_value_t = 1)]
    pub context_window: u8,
    /// Append neighbour embeddings to each token's features.
    #[arg(long)]
    pub context_embeddings: bool,
    /// Stopword list, one per line (default: a built-in English list).
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Document marker in the corpus file.
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    /// Corpus to tag; its labels are the reference.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write the tagged corpus here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityArg {
    Token,
    Instance,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Token => Granularity::Token,
            GranularityArg::Instance => Granularity::Instance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankArg {
    Absolute,
    Signed,
    Supporting,
}

impl From<RankArg> for RankBy {
    fn from(r: RankArg) -> Self {
        match r {
            RankArg::Absolute => RankBy::Absolute,
            RankArg::Signed => RankBy::Signed,
            RankArg::Supporting => RankBy::Supporting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryLabels {
    /// The test corpus labels.
    Gold,
    /// The model's Viterbi labels: explains what the model predicts.
    Predicted,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    /// The corpus the model was trained on.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Corpus holding the test sentence.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Test document id (default: the first document).
    #[arg(long)]
    pub doc: Option<String>,
    /// 0-based sentence within the document.
    #[arg(long, default_value_t = 0)]
    pub sentence: usize,
    /// 1-based inclusive token range `a:b` or a single token `a`
    /// (default: the whole sentence).
    #[arg(long)]
    pub segment: Option<String>,
    #[arg(long, value_enum, default_value_t = QueryLabels::Gold)]
    pub labels: QueryLabels,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Rank training tokens or whole training sentences.
    #[arg(long, value_enum, default_value_t = GranularityArg::Token)]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value_t = RankArg::Absolute)]
    pub rank_by: RankArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Tokens of context on each side in the snippets.
    #[arg(long, default_value_t = 3)]
    pub context: usize,
    /// Load the gradient cache from this file if it exists, otherwise build
    /// it and save it there.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation corpus whose mispredicted tokens are the test tokens.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Must equal the ridge the model was trained with.
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 20)]
    pub n_test_tokens: usize,
    /// Training tokens removed per test token.
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
    /// Hessian damping for the predictions (default: the ridge).
    #[arg(long)]
    pub damping: Option<f64>,
    /// Write `predicted actual` pairs as TSV for plotting.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptKind {
    /// Insert an artifact token and force the next label.
    Artifact,
    /// Give every entity span of chosen documents a different type.
    Random,
    /// Relabel gazetteer tokens of one type in documents with a prefix.
    Systematic,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorruptArgs {
    #[arg(long, value_enum)]
    pub kind: Option<CorruptKind>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Corrupted corpus.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Artifact: share of sentences corrupted.
    #[arg(long, default_value_t = 0.1)]
    pub rate: f64,
    #[arg(long, default_value = seginf::synth::ARTIFACT_TOKEN)]
    pub artifact: String,
    #[arg(long, default_value = "B-PER")]
    pub forced_label: String,
    /// Random and systematic: documents to corrupt.
    #[arg(long, default_value_t = 20)]
    pub n_docs: usize,
    /// Random: skip documents whose first token is this.
    #[arg(long)]
    pub exclude_prefix: Option<String>,
    /// Systematic: only documents whose first token is this.
    #[arg(long, default_value = "SOCCER")]
    pub doc_prefix: String,
    /// Systematic: tokens to relabel, one per line.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long, default_value = "ORG")]
    pub from_type: String,
    #[arg(long, default_value = "LOC")]
    pub to_type: String,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerArg {
    /// Loss, gradient norm and entropy at instance and token level.
    Baselines,
    /// Instance and token influence on a clean validation set.
    Influence,
    /// Similarity to differently-labelled validation tokens.
    Nn,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    /// Model trained on `--input`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    /// The (possibly noisy) training corpus to score.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Clean validation corpus, needed by `influence` and `nn`.
    #[arg(long)]
    pub clean_val: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ScorerArg::Baselines])]
    pub scorers: Vec<ScorerArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Score file: one JSON object per scorer and document.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CurveArgs {
    /// Score files written by `score`.
    #[arg(long, required = false, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Curve points as TSV: `name n fraction`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConflictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub emb: EmbeddingArgs,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Reference-labelled test corpus.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Pattern file: `@NAME@ = regex` macros and one pattern per line.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    #[arg(long, default_value = "O")]
    pub outside: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = seginf::corpus::DEFAULT_DOC_MARKER)]
    pub doc_marker: String,
}
