//! Feeds the checked-in fuzz seed corpora through their parsers, so the
//! seeds stay meaningful as the formats evolve.

use std::path::PathBuf;

use seginf::corpus::{parse_conll, ParseOptions};
use seginf::features::{EmbeddingTable, OovPolicy};
use seginf::influence::GradientCache;
use seginf::model_file::ModelFile;
use seginf::noise::{CorruptionManifest, Gazetteer, PatternMatcher};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Checks that exactly the seeds named in `bad` fail to parse.
fn check<T, E: std::fmt::Debug>(target: &str, bad: &[&str], parse: impl Fn(&[u8]) -> Result<T, E>) {
    for (name, bytes) in seeds(target) {
        let result = parse(&bytes);
        if bad.contains(&name.as_str()) {
            assert!(result.is_err(), "{target}/{name} should be rejected");
        } else {
            result.unwrap_or_else(|e| panic!("{target}/{name}: {e:?}"));
        }
    }
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn conll_seeds() {
    check("conll", &["single_label"], |b| {
        parse_conll(text(b), &ParseOptions::default())
    });
}

#[test]
fn embedding_seeds() {
    check("embeddings", &["ragged"], |b| {
        EmbeddingTable::parse(text(b), OovPolicy::Zero)
    });
}

#[test]
fn model_file_seeds() {
    check("model_file", &["truncated"], ModelFile::decode);
}

#[test]
fn cache_seeds() {
    check("cache", &["header_only"], GradientCache::decode);
}

#[test]
fn manifest_seeds() {
    check("manifest", &[], |b| CorruptionManifest::parse(text(b)));
}

#[test]
fn pattern_seeds() {
    check("pattern", &["bad_regex"], |b| {
        let (tokens, patterns) = text(b).split_once('\n').unwrap();
        let tokens: Vec<String> = tokens.split_whitespace().map(str::to_string).collect();
        PatternMatcher::parse(patterns).map(|m| m.find_spans(&tokens))
    });
    let (first, rest) = seeds("pattern")
        .into_iter()
        .find(|(n, _)| n == "dosage")
        .map(|(_, b)| {
            let t = String::from_utf8(b).unwrap();
            let (a, b) = t.split_once('\n').unwrap();
            (a.to_string(), b.to_string())
        })
        .unwrap();
    let tokens: Vec<String> = first.split_whitespace().map(str::to_string).collect();
    assert_eq!(
        PatternMatcher::parse(&rest).unwrap().find_spans(&tokens),
        vec![(2, 3)]
    );
}

#[test]
fn gazetteer_seeds() {
    check("gazetteer", &["multiword"], |b| Gazetteer::parse(text(b)));
}
