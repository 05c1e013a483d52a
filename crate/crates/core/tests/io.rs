use proptest::prelude::*;

use seginf::corpus::{parse_conll, Corpus, Document, ParseOptions, Sentence};
use seginf::crf::LabelSet;
use seginf::influence::{GradientCache, Granularity};
use seginf::noise::{insert_artifact, random_entity_noise, CorruptionManifest};
use seginf::synth::{self, NerSpec};
use seginf::trainer::{self, TrainConfig};

fn labels() -> LabelSet {
    synth::ner_labels()
}

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    let token = "[A-Za-z0-9.,'-]{1,8}";
    let sentence = prop::collection::vec((token, 0usize..5), 1..8).prop_map(|pairs| {
        let (tokens, labels) = pairs.into_iter().unzip();
        Sentence { tokens, labels }
    });
    let doc = prop::collection::vec(sentence, 0..4);
    prop::collection::vec(doc, 0..5).prop_map(|docs| Corpus {
        labels: labels(),
        documents: docs
            .into_iter()
            .enumerate()
            .map(|(i, sentences)| Document {
                id: format!("d{i}"),
                sentences,
            })
            .collect(),
    })
}

proptest! {
    #[test]
    fn conll_rendering_round_trips(corpus in corpus_strategy()) {
        let labels = labels();
        let opts = ParseOptions { labels: Some(&labels), ..ParseOptions::default() };
        let parsed = parse_conll(&corpus.to_conll(), &opts).unwrap();
        prop_assert_eq!(parsed, corpus);
    }

    #[test]
    fn manifests_replay_their_corruption(seed in 0u64..1000, rate in 0.0f64..=1.0, n_docs in 0usize..30) {
        let (corpora, _) = synth::ner_corpora(&NerSpec::default(), &[40], seed);
        let clean = &corpora[0];
        let (art, m) = insert_artifact(clean, rate, "special", "B-PER", seed).unwrap();
        let text = CorruptionManifest::parse(&m.to_text()).unwrap();
        prop_assert_eq!(text.replay(clean).unwrap(), art);
        let (noisy, m) = random_entity_noise(clean, n_docs, seed, &[]).unwrap();
        prop_assert_eq!(m.replay(clean).unwrap(), noisy);
    }
}

#[test]
fn inferred_bio_labels_are_completed() {
    let text = "-DOCSTART- a\n\nParis B-LOC\nis O\nnice O\n\nBob B-PER\nSmith I-PER\n";
    let mut corpus = parse_conll(text, &ParseOptions::default()).unwrap();
    assert_eq!(corpus.labels.names(), ["O", "B-LOC", "B-PER", "I-PER"]);
    let before = corpus.clone();
    corpus.complete_bio().unwrap();
    assert_eq!(
        corpus.labels.names(),
        ["O", "B-LOC", "B-PER", "I-PER", "I-LOC"]
    );
    assert_eq!(corpus.documents, before.documents);
    corpus.complete_bio().unwrap();
    assert_eq!(corpus.labels.len(), 5);
}

#[test]
fn non_bio_label_sets_are_left_alone() {
    let mut corpus = parse_conll("a X\nb Y\n", &ParseOptions::default()).unwrap();
    corpus.complete_bio().unwrap();
    assert_eq!(corpus.labels.names(), ["X", "Y"]);
}

#[test]
fn token_cache_size_follows_factored_layout() {
    let (corpora, table) = synth::ner_corpora(&NerSpec::default(), &[50], 5);
    let ds = corpora[0]
        .featurize(&table, &synth::ner_features())
        .unwrap()
        .0;
    let (params, _) = trainer::train(&ds, &TrainConfig::default()).unwrap();
    let cache = GradientCache::build(&ds, &params, Granularity::Token).unwrap();
    let (c, d) = (ds.n_labels(), ds.dim());
    let tokens = ds.total_tokens();
    let bytes = cache.encode();
    assert_eq!(bytes.len(), cache.byte_size());
    // One error vector and one feature vector per token; the two transition
    // rows are addressed by neighbour labels instead of being stored.
    let payload = tokens * (c + d) * 8;
    assert!(bytes.len() >= payload);
    assert!(
        bytes.len() <= tokens * (d + 3 * c) * 8 + 64,
        "{} bytes for {tokens} tokens",
        bytes.len()
    );
    assert_eq!(GradientCache::decode(&bytes).unwrap(), cache);
}
