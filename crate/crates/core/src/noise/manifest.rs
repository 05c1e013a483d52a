//! Ground-truth record of a corruption, replayable on the clean corpus.
//!
//! Text format, one record per line, fields separated by single spaces:
//!
//! ```text
//! # seginf-manifest v1
//! kind artifact|random|systematic
//! seed <u64>
//! doc <doc id>
//! insert <doc id> <sentence> <position> <token> <label>
//! edit <doc id> <sentence> <position> <old label> <new label>
//! ```
//!
//! Sentences and positions are 0-based. Insert positions index the sentence
//! after insertion; edit positions index the corrupted corpus, so replay
//! applies all inserts before any edit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "# seginf-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Artifact,
    Random,
    Systematic,
}

impl CorruptionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorruptionKind::Artifact => "artifact",
            CorruptionKind::Random => "random",
            CorruptionKind::Systematic => "systematic",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "artifact" => Some(CorruptionKind::Artifact),
            "random" => Some(CorruptionKind::Random),
            "systematic" => Some(CorruptionKind::Systematic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub doc: String,
    pub sentence: usize,
    pub position: usize,
    pub token: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub doc: String,
    pub sentence: usize,
    pub position: usize,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionManifest {
    pub kind: CorruptionKind,
    pub seed: u64,
    /// Every selected document, including ones that received no edit.
    pub corrupted_docs: BTreeSet<String>,
    pub inserts: Vec<Insertion>,
    pub edits: Vec<Edit>,
}

impl CorruptionManifest {
    pub fn new(kind: CorruptionKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            corrupted_docs: BTreeSet::new(),
            inserts: Vec::new(),
            edits: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_HEADER}");
        let _ = writeln!(out, "kind {}", self.kind.as_str());
        let _ = writeln!(out, "seed {}", self.seed);
        for d in &self.corrupted_docs {
            let _ = writeln!(out, "doc {d}");
        }
        for i in &self.inserts {
            let _ = writeln!(
                out,
                "insert {} {} {} {} {}",
                i.doc, i.sentence, i.position, i.token, i.label
            );
        }
        for e in &self.edits {
            let _ = writeln!(
                out,
                "edit {} {} {} {} {}",
                e.doc, e.sentence, e.position, e.old, e.new
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {MANIFEST_HEADER:?}"),
                })
            }
        }
        let mut kind = None;
        let mut seed = None;
        let mut m = CorruptionManifest::new(CorruptionKind::Random, 0);
        for (i, line) in lines {
            let line_no = i + 1;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("invalid index {s:?}")))
            };
            match (fields[0], fields.len()) {
                ("kind", 2) => {
                    kind = Some(
                        CorruptionKind::parse(fields[1])
                            .ok_or_else(|| err(format!("unknown kind {:?}", fields[1])))?,
                    )
                }
                ("seed", 2) => {
                    seed = Some(
                        fields[1]
                            .parse::<u64>()
                            .map_err(|_| err("invalid seed".into()))?,
                    )
                }
                ("doc", 2) => {
                    m.corrupted_docs.insert(fields[1].to_string());
                }
                ("insert", 6) => m.inserts.push(Insertion {
                    doc: fields[1].to_string(),
                    sentence: num(fields[2])?,
                    position: num(fields[3])?,
                    token: fields[4].to_string(),
                    label: fields[5].to_string(),
                }),
                ("edit", 6) => m.edits.push(Edit {
                    doc: fields[1].to_string(),
                    sentence: num(fields[2])?,
                    position: num(fields[3])?,
                    old: fields[4].to_string(),
                    new: fields[5].to_string(),
                }),
                (other, n) => {
                    return Err(err(format!(
                        "unrecognized record {other:?} with {n} fields"
                    )))
                }
            }
        }
        m.kind = kind.ok_or_else(|| Error::invalid("manifest has no kind line"))?;
        m.seed = seed.ok_or_else(|| Error::invalid("manifest has no seed line"))?;
        for d in m
            .inserts
            .iter()
            .map(|i| &i.doc)
            .chain(m.edits.iter().map(|e| &e.doc))
        {
            if !m.corrupted_docs.contains(d) {
                return Err(Error::invalid(format!(
                    "record for undeclared document {d:?}"
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies the manifest to the clean corpus.
    pub fn replay(&self, clean: &Corpus) -> Result<Corpus> {
        let mut out = clean.clone();
        let locate = |out: &Corpus, doc: &str, sentence: usize| -> Result<(usize, usize)> {
            let d = out.doc_index(doc).ok_or_else(|| {
                Error::invalid(format!("manifest names unknown document {doc:?}"))
            })?;
            if sentence >= out.documents[d].sentences.len() {
                return Err(Error::invalid(format!(
                    "document {doc:?} has no sentence {sentence}"
                )));
            }
            Ok((d, sentence))
        };
        for ins in &self.inserts {
            let (d, s) = locate(&out, &ins.doc, ins.sentence)?;
            let label = out.labels.index_of(&ins.label)?;
            let sent = &mut out.documents[d].sentences[s];
            if ins.position > sent.len() {
                return Err(Error::invalid(format!(
                    "insert position {} beyond sentence length {} in {:?}",
                    ins.position,
                    sent.len(),
                    ins.doc
                )));
            }
            sent.tokens.insert(ins.position, ins.token.clone());
            sent.labels.insert(ins.position, label);
        }
        for e in &self.edits {
            let (d, s) = locate(&out, &e.doc, e.sentence)?;
            let old = out.labels.index_of(&e.old)?;
            let new = out.labels.index_of(&e.new)?;
            let sent = &mut out.documents[d].sentences[s];
            match sent.labels.get_mut(e.position) {
                Some(y) if *y == old => *y = new,
                Some(_) => {
                    return Err(Error::invalid(format!(
                        "edit at {:?} sentence {} position {} expects label {}",
                        e.doc, e.sentence, e.position, e.old
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "edit position {} out of range in {:?}",
                        e.position, e.doc
                    )))
                }
            }
        }
        Ok(out)
    }
}
