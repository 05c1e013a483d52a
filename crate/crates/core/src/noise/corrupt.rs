//! The three corruption types.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{CorruptionKind, CorruptionManifest, Edit, Insertion};
use super::patterns::Gazetteer;
use crate::corpus::{bio_parts, entity_spans, Corpus};
use crate::error::{Error, Result};

const OUTSIDE: &str = "O";

fn entity_types(corpus: &Corpus) -> Result<Vec<String>> {
    if !corpus.is_bio() {
        return Err(Error::invalid("corruption needs BIO labels"));
    }
    let mut types: Vec<String> = corpus
        .labels
        .names()
        .iter()
        .filter_map(|n| bio_parts(n).map(|(_, t)| t.to_string()))
        .collect();
    types.sort();
    types.dedup();
    for t in &types {
        for prefix in ["B-", "I-"] {
            corpus.labels.index_of(&format!("{prefix}{t}"))?;
        }
    }
    Ok(types)
}

/// Inserts `artifact` into `⌊rate·N⌋` sentences (of the `N` with at least
/// two tokens), at a uniformly random position in `1..T`, labelled `O`, and
/// forces the label of the following token to `forced_label`.
pub fn insert_artifact(
    corpus: &Corpus,
    rate: f64,
    artifact: &str,
    forced_label: &str,
    seed: u64,
) -> Result<(Corpus, CorruptionManifest)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "rate must be in [0, 1], got {rate}"
        )));
    }
    if artifact.is_empty() || artifact.contains(char::is_whitespace) {
        return Err(Error::invalid(
            "artifact token must be a single non-empty word",
        ));
    }
    let forced = corpus.labels.index_of(forced_label)?;
    let outside = corpus.labels.index_of(OUTSIDE)?;
    let mut eligible: Vec<(usize, usize)> = corpus
        .sentences()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(r, _)| (r.doc, r.sentence))
        .collect();
    let count = (rate * eligible.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen = eligible[..count].to_vec();
    chosen.sort_unstable();

    let mut out = corpus.clone();
    let mut manifest = CorruptionManifest::new(CorruptionKind::Artifact, seed);
    for (d, s) in chosen {
        let id = out.documents[d].id.clone();
        let sent = &mut out.documents[d].sentences[s];
        let pos = rng.gen_range(1..sent.len());
        sent.tokens.insert(pos, artifact.to_string());
        sent.labels.insert(pos, outside);
        let old = sent.labels[pos + 1];
        sent.labels[pos + 1] = forced;
        manifest.corrupted_docs.insert(id.clone());
        manifest.inserts.push(Insertion {
            doc: id.clone(),
            sentence: s,
            position: pos,
            token: artifact.to_string(),
            label: OUTSIDE.to_string(),
        });
        manifest.edits.push(Edit {
            doc: id,
            sentence: s,
            position: pos + 1,
            old: corpus.labels.name(old).to_string(),
            new: forced_label.to_string(),
        });
    }
    Ok((out, manifest))
}

/// Rewrites `labels[start..=end]` as one span of type `ty`, recording edits.
fn rewrite_span(
    corpus: &Corpus,
    labels: &mut [usize],
    (start, end): (usize, usize),
    ty: &str,
    at: (&str, usize),
    edits: &mut Vec<Edit>,
) -> Result<()> {
    for t in start..=end {
        let tag = if t == start { "B" } else { "I" };
        let new = corpus.labels.index_of(&format!("{tag}-{ty}"))?;
        if labels[t] != new {
            edits.push(Edit {
                doc: at.0.to_string(),
                sentence: at.1,
                position: t,
                old: corpus.labels.name(labels[t]).to_string(),
                new: corpus.labels.name(new).to_string(),
            });
            labels[t] = new;
        }
    }
    Ok(())
}

/// In `n_docs` randomly chosen documents (never one listed in `exclude`),
/// gives every entity span a uniformly random different type.
pub fn random_entity_noise(
    corpus: &Corpus,
    n_docs: usize,
    seed: u64,
    exclude: &[usize],
) -> Result<(Corpus, CorruptionManifest)> {
    let types = entity_types(corpus)?;
    if types.len() < 2 && n_docs > 0 {
        return Err(Error::invalid(
            "random entity noise needs at least two entity types",
        ));
    }
    let mut eligible: Vec<usize> = (0..corpus.documents.len())
        .filter(|d| !exclude.contains(d))
        .collect();
    if n_docs > eligible.len() {
        return Err(Error::invalid(format!(
            "requested {n_docs} noisy documents but only {} are eligible",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen = eligible[..n_docs].to_vec();
    chosen.sort_unstable();

    let mut out = corpus.clone();
    let mut manifest = CorruptionManifest::new(CorruptionKind::Random, seed);
    for d in chosen {
        let id = out.documents[d].id.clone();
        manifest.corrupted_docs.insert(id.clone());
        for s in 0..out.documents[d].sentences.len() {
            let spans: Vec<(usize, usize, String)> =
                entity_spans(&out.documents[d].sentences[s].labels, &corpus.labels)
                    .into_iter()
                    .map(|(a, b, t)| (a, b, t.to_string()))
                    .collect();
            for (a, b, ty) in spans {
                let others: Vec<&String> = types.iter().filter(|t| **t != ty).collect();
                let new_ty = others.choose(&mut rng).expect("two or more types");
                let labels = &mut out.documents[d].sentences[s].labels;
                rewrite_span(
                    corpus,
                    labels,
                    (a, b),
                    new_ty,
                    (&id, s),
                    &mut manifest.edits,
                )?;
            }
        }
    }
    Ok((out, manifest))
}

/// Among documents whose first token is `doc_prefix`, picks `n_docs` and
/// relabels every `from_type` token found in the gazetteer as `to_type`.
pub fn systematic_relabel(
    corpus: &Corpus,
    doc_prefix: &str,
    gazetteer: &Gazetteer,
    from_type: &str,
    to_type: &str,
    n_docs: usize,
    seed: u64,
) -> Result<(Corpus, CorruptionManifest)> {
    let types = entity_types(corpus)?;
    for t in [from_type, to_type] {
        if !types.iter().any(|x| x == t) {
            return Err(Error::UnknownLabel(format!("B-{t}")));
        }
    }
    let mut eligible: Vec<usize> = corpus
        .documents
        .iter()
        .enumerate()
        .filter(|(_, doc)| {
            doc.sentences
                .first()
                .and_then(|s| s.tokens.first())
                .is_some_and(|t| t == doc_prefix)
        })
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < n_docs {
        return Err(Error::invalid(format!(
            "only {} documents start with {doc_prefix:?}, {n_docs} requested",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen = eligible[..n_docs].to_vec();
    chosen.sort_unstable();

    let mut out = corpus.clone();
    let mut manifest = CorruptionManifest::new(CorruptionKind::Systematic, seed);
    for d in chosen {
        let id = out.documents[d].id.clone();
        manifest.corrupted_docs.insert(id.clone());
        for s in 0..out.documents[d].sentences.len() {
            let sent = &out.documents[d].sentences[s];
            let spans: Vec<(usize, usize)> = entity_spans(&sent.labels, &corpus.labels)
                .into_iter()
                .filter(|(_, _, t)| *t == from_type)
                .map(|(a, b, _)| (a, b))
                .collect();
            let hit: Vec<bool> = sent.tokens.iter().map(|t| gazetteer.contains(t)).collect();
            for (a, b) in spans {
                // Split the span into runs of matched / unmatched tokens; each
                // run becomes its own span of the resulting type.
                let mut start = a;
                while start <= b {
                    let mut end = start;
                    while end < b && hit[end + 1] == hit[start] {
                        end += 1;
                    }
                    let ty = if hit[start] { to_type } else { from_type };
                    if hit[start] || start != a {
                        let labels = &mut out.documents[d].sentences[s].labels;
                        rewrite_span(
                            corpus,
                            labels,
                            (start, end),
                            ty,
                            (&id, s),
                            &mut manifest.edits,
                        )?;
                    }
                    start = end + 1;
                }
            }
        }
    }
    Ok((out, manifest))
}
