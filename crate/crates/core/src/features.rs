//! Token feature extraction: embedding lookup plus syntactic indicators for
//! each token and, optionally, its immediate neighbours.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crf::ObservationSequence;
use crate::error::{Error, Result};

/// What to return for a token missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    Zero,
    /// Tokens hash into `n` buckets, each with a fixed pseudo-random vector.
    HashedBucket(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    oov_policy: OovPolicy,
    lowercase: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_policy: OovPolicy) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
            oov_policy,
            lowercase: true,
        }
    }

    /// Parses whitespace-separated `token v1 ... v_dim` lines. Blank lines
    /// are skipped; a repeated token keeps its first vector.
    pub fn parse(text: &str, oov_policy: OovPolicy) -> Result<Self> {
        let mut dim = None;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line: line_no,
                            message: format!("invalid number {f:?}"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("token {token:?} has no vector"),
                });
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {d} values, found {}", values.len()),
                    })
                }
                _ => {}
            }
            entries.entry(token.to_owned()).or_insert(values);
        }
        let Some(dim) = dim else {
            return Err(Error::invalid("no embeddings loaded"));
        };
        Ok(Self {
            dim,
            entries,
            oov_policy,
            lowercase: true,
        })
    }

    pub fn load(path: impl AsRef<Path>, oov_policy: OovPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let table = Self::parse(&text, oov_policy)?;
        log::info!(
            "loaded {} embeddings of dim {} from {}",
            table.len(),
            table.dim,
            path.as_ref().display()
        );
        Ok(table)
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.entries.entry(token.into()).or_insert(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        let key = if self.lowercase {
            token.to_lowercase()
        } else {
            token.to_owned()
        };
        if let Some(v) = self.entries.get(&key) {
            return v.clone();
        }
        match self.oov_policy {
            OovPolicy::Zero => vec![0.0; self.dim],
            OovPolicy::HashedBucket(n) => {
                let bucket = stable_hash(&key) % u64::from(n.max(1));
                let mut rng = ChaCha8Rng::seed_from_u64(bucket);
                let scale = 1.0 / (self.dim as f64).sqrt();
                (0..self.dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect::<Vec<f64>>()
            }
        }
    }

    /// Text form accepted by [`EmbeddingTable::parse`], sorted by token.
    /// Values are written with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            for v in &self.entries[k] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Content hash over the sorted entries.
    pub fn fingerprint(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for k in keys {
            h.update(k.as_bytes());
            h.update([0]);
            for v in &self.entries[k] {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

fn stable_hash(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntacticFlag {
    /// Token contains an ASCII digit.
    Digit,
    /// Every cased character is uppercase (at least one cased character).
    Capitalized,
    /// First character uppercase, remaining cased characters lowercase.
    TitleCase,
    /// Lowercased token is in the stopword list.
    Stopword,
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "he", "in", "is", "it",
    "its", "of", "on", "or", "that", "the", "to", "was", "were", "will", "with",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_embeddings: bool,
    pub syntactic_flags: Vec<SyntacticFlag>,
    /// 0: own indicators only. 1: also left and right neighbour indicators.
    pub context_window: u8,
    /// Also append left and right neighbour embeddings (zero at the
    /// boundaries). A contextual-encoder stand-in; off by default.
    #[serde(default)]
    pub context_embeddings: bool,
    pub stopwords: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            use_embeddings: true,
            syntactic_flags: vec![
                SyntacticFlag::Digit,
                SyntacticFlag::Capitalized,
                SyntacticFlag::TitleCase,
                SyntacticFlag::Stopword,
            ],
            context_window: 1,
            context_embeddings: false,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FeatureConfig {
    /// Sorts and de-duplicates flags, lowercases stopwords.
    pub fn normalized(mut self) -> Result<Self> {
        if self.context_window > 1 {
            return Err(Error::invalid(format!(
                "context_window must be 0 or 1, got {}",
                self.context_window
            )));
        }
        self.syntactic_flags.sort();
        self.syntactic_flags.dedup();
        self.stopwords = self.stopwords.iter().map(|s| s.to_lowercase()).collect();
        self.stopwords.sort();
        self.stopwords.dedup();
        Ok(self)
    }

    /// Feature dimension implied by this config for a table of `emb_dim`.
    pub fn dim(&self, emb_dim: usize) -> usize {
        let emb = if self.use_embeddings { emb_dim } else { 0 };
        let ctx = if self.context_embeddings {
            2 * emb_dim
        } else {
            0
        };
        let flags = self.syntactic_flags.len() * (1 + 2 * usize::from(self.context_window));
        emb + ctx + flags
    }
}

/// One token per line; `#` starts a comment.
pub fn parse_stopwords(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn indicator(flag: SyntacticFlag, token: &str, stopwords: &[String]) -> f64 {
    let on = match flag {
        SyntacticFlag::Digit => token.chars().any(|c| c.is_ascii_digit()),
        SyntacticFlag::Capitalized => {
            let mut cased = token
                .chars()
                .filter(|c| c.is_uppercase() || c.is_lowercase());
            let first = cased.next();
            first.is_some_and(char::is_uppercase) && cased.all(char::is_uppercase)
        }
        SyntacticFlag::TitleCase => {
            let mut chars = token.chars();
            chars.next().is_some_and(char::is_uppercase) && chars.all(|c| !c.is_uppercase())
        }
        SyntacticFlag::Stopword => stopwords.binary_search(&token.to_lowercase()).is_ok(),
    };
    if on {
        1.0
    } else {
        0.0
    }
}

/// Feature vectors for `tokens`: `[embedding | left emb | right emb | own
/// indicators | left indicators | right indicators]`, with the optional
/// blocks present according to `config`. Neighbour blocks at the sequence
/// boundaries are zero. Expects a config passed through
/// [`FeatureConfig::normalized`].
pub fn extract_features(
    tokens: &[String],
    table: &EmbeddingTable,
    config: &FeatureConfig,
) -> Result<ObservationSequence> {
    if tokens.is_empty() {
        return Err(Error::invalid("cannot featurize an empty token sequence"));
    }
    let dim = config.dim(table.dim());
    let flags = &config.syntactic_flags;
    let needs_emb = config.use_embeddings || config.context_embeddings;
    let embeddings: Vec<Vec<f64>> = if needs_emb {
        tokens.iter().map(|t| table.lookup(t)).collect()
    } else {
        Vec::new()
    };
    let indicators: Vec<Vec<f64>> = tokens
        .iter()
        .map(|t| {
            flags
                .iter()
                .map(|&f| indicator(f, t, &config.stopwords))
                .collect()
        })
        .collect();
    let zero_emb = vec![0.0; table.dim()];
    let zero_ind = vec![0.0; flags.len()];

    let mut rows = Vec::with_capacity(tokens.len());
    for t in 0..tokens.len() {
        let mut row = Vec::with_capacity(dim);
        if config.use_embeddings {
            row.extend_from_slice(&embeddings[t]);
        }
        if config.context_embeddings {
            row.extend_from_slice(if t > 0 { &embeddings[t - 1] } else { &zero_emb });
            row.extend_from_slice(embeddings.get(t + 1).unwrap_or(&zero_emb));
        }
        row.extend_from_slice(&indicators[t]);
        if config.context_window == 1 {
            row.extend_from_slice(if t > 0 { &indicators[t - 1] } else { &zero_ind });
            row.extend_from_slice(indicators.get(t + 1).unwrap_or(&zero_ind));
        }
        debug_assert_eq!(row.len(), dim);
        rows.push(row);
    }
    ObservationSequence::new(tokens.to_vec(), rows)
}
