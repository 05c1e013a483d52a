//! CoNLL-style column corpora.
//!
//! One token per line: the first whitespace-separated field is the token and
//! the last is its label (middle columns are ignored). A blank line ends a
//! sentence. A line starting with the document marker (`-DOCSTART-` by
//! default) starts a document; `-DOCSTART- <id>` with exactly one extra
//! field names it, otherwise documents are named `doc<N>`. A file with no
//! markers at all has one document per sentence.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::crf::{LabelSequence, LabelSet};
use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::features::{extract_features, EmbeddingTable, FeatureConfig};

pub const DEFAULT_DOC_MARKER: &str = "-DOCSTART-";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub labels: Vec<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub labels: LabelSet,
    pub documents: Vec<Document>,
}

/// Position of one sentence inside a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceRef {
    pub doc: usize,
    pub sentence: usize,
}

#[derive(Debug, Clone)]
pub struct ParseOptions<'a> {
    /// Fixes the label set; labels outside it are errors. When absent the
    /// set is inferred: `O` first if present, then the rest sorted.
    pub labels: Option<&'a LabelSet>,
    pub doc_marker: &'a str,
}

impl Default for ParseOptions<'_> {
    fn default() -> Self {
        Self {
            labels: None,
            doc_marker: DEFAULT_DOC_MARKER,
        }
    }
}

pub fn parse_conll(text: &str, opts: &ParseOptions<'_>) -> Result<Corpus> {
    struct RawDoc {
        id: Option<String>,
        sentences: Vec<Vec<(String, String, usize)>>,
    }
    let mut docs: Vec<RawDoc> = Vec::new();
    let mut current: Vec<(String, String, usize)> = Vec::new();
    let mut saw_marker = false;
    let flush = |docs: &mut Vec<RawDoc>, current: &mut Vec<(String, String, usize)>| {
        if !current.is_empty() {
            if docs.is_empty() {
                docs.push(RawDoc {
                    id: None,
                    sentences: Vec::new(),
                });
            }
            docs.last_mut()
                .unwrap()
                .sentences
                .push(std::mem::take(current));
        }
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut docs, &mut current);
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] == opts.doc_marker {
            flush(&mut docs, &mut current);
            saw_marker = true;
            let id = (fields.len() == 2).then(|| fields[1].to_string());
            docs.push(RawDoc {
                id,
                sentences: Vec::new(),
            });
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `token label`, found {trimmed:?}"),
            });
        }
        current.push((
            fields[0].to_string(),
            fields[fields.len() - 1].to_string(),
            line_no,
        ));
    }
    flush(&mut docs, &mut current);

    let labels = match opts.labels {
        Some(set) => set.clone(),
        None => {
            let mut names: Vec<&str> = docs
                .iter()
                .flat_map(|d| d.sentences.iter().flatten())
                .map(|(_, l, _)| l.as_str())
                .collect();
            names.sort_unstable();
            names.dedup();
            if let Some(pos) = names.iter().position(|n| *n == "O") {
                names.remove(pos);
                names.insert(0, "O");
            }
            match names.len() {
                // An empty corpus still carries a label set; nothing indexes it.
                0 => names = vec!["O", "B-ENT"],
                1 => {
                    return Err(Error::invalid(format!(
                        "cannot infer a label set from the single label {:?}; pass one explicitly",
                        names[0]
                    )))
                }
                _ => {}
            }
            LabelSet::new(names)?
        }
    };

    let raw_docs: Vec<RawDoc> = if saw_marker {
        docs.into_iter()
            .filter(|d| !d.sentences.is_empty() || d.id.is_some())
            .collect()
    } else {
        docs.into_iter()
            .flat_map(|d| d.sentences)
            .map(|s| RawDoc {
                id: None,
                sentences: vec![s],
            })
            .collect()
    };
    let mut documents = Vec::with_capacity(raw_docs.len());
    for (n, raw) in raw_docs.into_iter().enumerate() {
        let mut sentences = Vec::with_capacity(raw.sentences.len());
        for s in raw.sentences {
            let mut tokens = Vec::with_capacity(s.len());
            let mut ys = Vec::with_capacity(s.len());
            for (tok, lab, line) in s {
                let y = labels.get(&lab).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unknown label {lab:?}"),
                })?;
                tokens.push(tok);
                ys.push(y);
            }
            sentences.push(Sentence { tokens, labels: ys });
        }
        documents.push(Document {
            id: raw.id.unwrap_or_else(|| format!("doc{n}")),
            sentences,
        });
    }
    if documents.is_empty() {
        log::warn!("corpus is empty");
    }
    let corpus = Corpus { labels, documents };
    for v in corpus.bio_violations().iter().take(10) {
        log::warn!("{v}");
    }
    Ok(corpus)
}

pub fn load_conll(path: impl AsRef<Path>, opts: &ParseOptions<'_>) -> Result<Corpus> {
    parse_conll(&std::fs::read_to_string(path)?, opts)
}

/// A BIO violation: an `I-X` tag not preceded by `B-X` or `I-X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioViolation {
    pub doc: String,
    pub sentence: usize,
    pub position: usize,
    pub label: String,
}

impl std::fmt::Display for BioViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BIO violation in {} sentence {} token {}: {} does not continue an entity",
            self.doc,
            self.sentence + 1,
            self.position + 1,
            self.label
        )
    }
}

/// Entity type of a BIO label: `Some((is_begin, type))`, `None` for `O` or
/// non-BIO labels.
pub fn bio_parts(label: &str) -> Option<(bool, &str)> {
    if let Some(t) = label.strip_prefix("B-") {
        Some((true, t))
    } else {
        label.strip_prefix("I-").map(|t| (false, t))
    }
}

/// Maximal entity spans `(start, end_inclusive, type)` of a BIO sequence.
/// A stray `I-X` opens a new span.
pub fn entity_spans<'a>(labels: &[usize], names: &'a LabelSet) -> Vec<(usize, usize, &'a str)> {
    let mut spans: Vec<(usize, usize, &str)> = Vec::new();
    for (t, &y) in labels.iter().enumerate() {
        match bio_parts(names.name(y)) {
            Some((false, ty)) if spans.last().is_some_and(|s| s.1 + 1 == t && s.2 == ty) => {
                spans.last_mut().unwrap().1 = t;
            }
            Some((_, ty)) => spans.push((t, t, ty)),
            None => {}
        }
    }
    spans
}

impl Corpus {
    pub fn n_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences().map(|(_, s)| s.len()).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = (SentenceRef, &Sentence)> {
        self.documents.iter().enumerate().flat_map(|(d, doc)| {
            doc.sentences.iter().enumerate().map(move |(s, sent)| {
                (
                    SentenceRef {
                        doc: d,
                        sentence: s,
                    },
                    sent,
                )
            })
        })
    }

    pub fn is_bio(&self) -> bool {
        self.labels
            .names()
            .iter()
            .all(|n| n == "O" || bio_parts(n).is_some())
    }

    pub fn bio_violations(&self) -> Vec<BioViolation> {
        let mut out = Vec::new();
        if !self.is_bio() {
            return out;
        }
        for (r, s) in self.sentences() {
            for t in 0..s.len() {
                let name = self.labels.name(s.labels[t]);
                if let Some((false, ty)) = bio_parts(name) {
                    let ok = t > 0
                        && bio_parts(self.labels.name(s.labels[t - 1]))
                            .is_some_and(|(_, p)| p == ty);
                    if !ok {
                        out.push(BioViolation {
                            doc: self.documents[r.doc].id.clone(),
                            sentence: r.sentence,
                            position: t,
                            label: name.to_string(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            let _ = writeln!(out, "{} {}\n", DEFAULT_DOC_MARKER, doc.id);
            for s in &doc.sentences {
                for (tok, &y) in s.tokens.iter().zip(&s.labels) {
                    let _ = writeln!(out, "{tok}\t{}", self.labels.name(y));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_conll(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_conll())?;
        Ok(())
    }

    /// SHA-256 of the canonical CoNLL rendering.
    pub fn fingerprint(&self) -> String {
        crate::features::hex(&Sha256::digest(self.to_conll().as_bytes()))
    }

    /// For a BIO label set, appends the missing half of every `B-X`/`I-X`
    /// pair, so that every entity type can be both begun and continued.
    /// Existing label indices are unchanged.
    pub fn complete_bio(&mut self) -> Result<()> {
        if !self.is_bio() {
            return Ok(());
        }
        let mut names = self.labels.names().to_vec();
        let types: Vec<String> = names
            .iter()
            .filter_map(|n| bio_parts(n).map(|(_, t)| t.to_string()))
            .collect();
        for ty in types {
            for prefix in ["B-", "I-"] {
                let name = format!("{prefix}{ty}");
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        if names.len() != self.labels.len() {
            self.labels = LabelSet::new(names)?;
        }
        Ok(())
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Featurizes every sentence. The returned refs map dataset example
    /// indices back to the corpus.
    pub fn featurize(
        &self,
        table: &EmbeddingTable,
        config: &FeatureConfig,
    ) -> Result<(Dataset, Vec<SentenceRef>)> {
        let config = config.clone().normalized()?;
        let dim = config.dim(table.dim());
        let mut dataset = Dataset::new(self.labels.len(), dim);
        let mut refs = Vec::with_capacity(self.n_sentences());
        for (r, s) in self.sentences() {
            let obs = extract_features(&s.tokens, table, &config)?;
            dataset.push(Example {
                obs,
                labels: LabelSequence(s.labels.clone()),
            })?;
            refs.push(r);
        }
        Ok((dataset, refs))
    }
}
