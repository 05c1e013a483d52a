//! Seeded synthetic corpora with matching embedding tables.
//!
//! Every word belongs to a kind (person name, city, filler word, ...). A
//! kind has a random centroid and each word's embedding is the centroid plus
//! isotropic noise, so words of one kind are near each other. Ambiguous
//! words mix two centroids.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Corpus, Document, Sentence};
use crate::crf::LabelSet;
use crate::features::{EmbeddingTable, FeatureConfig, OovPolicy};

const SYLLABLES: &[&str] = &[
    "ka", "ro", "li", "ta", "ne", "mo", "sa", "vi", "do", "ru", "pe", "la", "mi", "zo", "ga", "te",
    "bri", "lo", "na", "chi", "ve", "so", "ma", "ki", "del", "ar", "on", "is", "um", "fa",
];

struct Lexicon {
    dim: usize,
    rng: ChaCha8Rng,
    noise: f64,
    centroids: BTreeMap<&'static str, Vec<f64>>,
    table: EmbeddingTable,
    used: HashSet<String>,
}

impl Lexicon {
    fn new(dim: usize, noise: f64, seed: u64) -> Self {
        Self {
            dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            centroids: BTreeMap::new(),
            table: EmbeddingTable::new(dim, OovPolicy::Zero),
            used: HashSet::new(),
        }
    }

    fn gaussian(&mut self, scale: f64) -> Vec<f64> {
        let s = scale / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                s * z
            })
            .collect()
    }

    fn centroid(&mut self, kind: &'static str) -> Vec<f64> {
        if let Some(c) = self.centroids.get(kind) {
            return c.clone();
        }
        let c = self.gaussian(1.0);
        self.centroids.insert(kind, c.clone());
        c
    }

    /// Adds `surface` as a word of the given kinds, mixing centroids with
    /// the given weights.
    fn add(&mut self, surface: &str, kinds: &[(&'static str, f64)]) {
        let key = surface.to_lowercase();
        if !self.used.insert(key.clone()) {
            return;
        }
        let mut v = self.gaussian(self.noise);
        for &(kind, w) in kinds {
            let c = self.centroid(kind);
            v.iter_mut().zip(&c).for_each(|(x, c)| *x += w * c);
        }
        self.table.insert(key, v).expect("lexicon dimension");
    }

    fn fresh_surface(&mut self, title: bool) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let mut w: String = (0..n)
                .map(|_| *SYLLABLES.choose(&mut self.rng).unwrap())
                .collect();
            if self.used.contains(&w) {
                continue;
            }
            if title {
                w = w[..1].to_uppercase() + &w[1..];
            }
            return w;
        }
    }

    fn words(&mut self, kind: &'static str, n: usize, title: bool) -> Vec<String> {
        (0..n)
            .map(|_| {
                let w = self.fresh_surface(title);
                self.add(&w, &[(kind, 1.0)]);
                w
            })
            .collect()
    }

    fn fixed(&mut self, kind: &'static str, surfaces: &[&str]) -> Vec<String> {
        surfaces
            .iter()
            .map(|s| {
                self.add(s, &[(kind, 1.0)]);
                s.to_string()
            })
            .collect()
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a str {
    xs.choose(rng).expect("non-empty word list")
}

struct Builder<'a> {
    labels: &'a LabelSet,
    tokens: Vec<String>,
    ys: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn new(labels: &'a LabelSet) -> Self {
        Self {
            labels,
            tokens: Vec::new(),
            ys: Vec::new(),
        }
    }

    fn push(&mut self, token: &str, label: &str) {
        self.tokens.push(token.to_string());
        self.ys
            .push(self.labels.get(label).expect("synthetic label"));
    }

    /// Adds an entity span of type `ty`, unless the previous token is part
    /// of an entity: abutting entities read as one mislabelled span.
    fn entity(&mut self, words: &[&str], ty: &str) {
        let abuts = self
            .ys
            .last()
            .is_some_and(|&y| crate::corpus::bio_parts(self.labels.name(y)).is_some());
        if abuts {
            return;
        }
        for (i, w) in words.iter().enumerate() {
            let tag = if i == 0 { "B" } else { "I" };
            self.push(w, &format!("{tag}-{ty}"));
        }
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }

    fn finish(self) -> Sentence {
        Sentence {
            tokens: self.tokens,
            labels: self.ys,
        }
    }
}

/// Five-label person/location corpus: `O, B-PER, I-PER, B-LOC, I-LOC`.
/// Sentences have 4 to 15 tokens; a share of names is ambiguous between
/// persons and locations, so a linear model makes some mistakes.
#[derive(Debug, Clone)]
pub struct NerSpec {
    pub emb_dim: usize,
    pub max_len: usize,
    /// Embedding noise relative to the centroid scale.
    pub noise: f64,
    /// Share of entity mentions that use an ambiguous name.
    pub ambiguity: f64,
}

impl Default for NerSpec {
    fn default() -> Self {
        Self {
            emb_dim: 12,
            max_len: 15,
            noise: 0.6,
            ambiguity: 0.15,
        }
    }
}

pub fn ner_labels() -> LabelSet {
    LabelSet::new(["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]).expect("static labels")
}

/// Generates `splits.len()` corpora over one shared vocabulary; split `i`
/// has `splits[i]` documents of one sentence each.
pub fn ner_corpora(spec: &NerSpec, splits: &[usize], seed: u64) -> (Vec<Corpus>, EmbeddingTable) {
    let labels = ner_labels();
    let mut lex = Lexicon::new(spec.emb_dim, spec.noise, seed);
    let stop = lex.fixed("stop", crate::features::DEFAULT_STOPWORDS);
    let filler = lex.words("filler", 60, false);
    let title_o = lex.words("title_o", 12, true);
    let first = lex.words("first", 40, true);
    let last = lex.words("last", 40, true);
    let place = lex.words("place", 50, true);
    let ambiguous: Vec<String> = (0..15)
        .map(|_| {
            let w = lex.fresh_surface(true);
            lex.add(&w, &[("first", 0.5), ("place", 0.5)]);
            w
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::new();
    let mut doc_no = 0usize;
    for &n_docs in splits {
        let mut documents = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let target = rng.gen_range(4..=spec.max_len);
            let mut b = Builder::new(&labels);
            while b.len() < target {
                let room = target - b.len();
                let r: f64 = rng.gen();
                if r < 0.25 {
                    let amb = rng.gen_bool(spec.ambiguity);
                    if rng.gen_bool(0.5) {
                        let f = if amb {
                            pick(&mut rng, &ambiguous)
                        } else {
                            pick(&mut rng, &first)
                        };
                        if room >= 2 && rng.gen_bool(0.5) {
                            b.entity(&[f, pick(&mut rng, &last)], "PER");
                        } else {
                            b.entity(&[f], "PER");
                        }
                    } else {
                        let p = if amb {
                            pick(&mut rng, &ambiguous)
                        } else {
                            pick(&mut rng, &place)
                        };
                        if room >= 2 && rng.gen_bool(0.2) {
                            b.entity(&[p, pick(&mut rng, &place)], "LOC");
                        } else {
                            b.entity(&[p], "LOC");
                        }
                    }
                } else if r < 0.33 {
                    b.push(pick(&mut rng, &title_o), "O");
                } else if r < 0.6 {
                    b.push(pick(&mut rng, &stop), "O");
                } else {
                    b.push(pick(&mut rng, &filler), "O");
                }
            }
            documents.push(Document {
                id: format!("doc{doc_no}"),
                sentences: vec![b.finish()],
            });
            doc_no += 1;
        }
        out.push(Corpus {
            labels: labels.clone(),
            documents,
        });
    }
    (out, lex.table)
}

/// Feature configuration used with the five-label corpus in validation runs.
pub fn ner_features() -> FeatureConfig {
    FeatureConfig::default()
}

/// Features with neighbour embeddings, needed when a label depends on the
/// identity of the previous word (artifacts, soccer contexts, dosages).
pub fn contextual_features() -> FeatureConfig {
    FeatureConfig {
        context_embeddings: true,
        ..FeatureConfig::default()
    }
}

/// Artifact token used by the artifact experiments; present in the
/// five-label lexicon with its own embedding.
pub const ARTIFACT_TOKEN: &str = "special";

/// The five-label corpora plus an embedding for [`ARTIFACT_TOKEN`].
pub fn artifact_corpora(
    spec: &NerSpec,
    splits: &[usize],
    seed: u64,
) -> (Vec<Corpus>, EmbeddingTable) {
    let (corpora, mut table) = ner_corpora(spec, splits, seed);
    let mut lex = Lexicon::new(spec.emb_dim, 0.0, seed ^ 0xa11);
    let v = lex.gaussian(1.0);
    table.insert(ARTIFACT_TOKEN, v).expect("artifact dimension");
    (corpora, table)
}

pub fn conll_labels() -> LabelSet {
    LabelSet::new([
        "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC",
    ])
    .expect("static labels")
}

/// Nine-label news-like corpus with soccer reports.
#[derive(Debug, Clone)]
pub struct NewsSpec {
    pub n_general: usize,
    pub n_soccer: usize,
    pub emb_dim: usize,
    pub noise: f64,
}

impl Default for NewsSpec {
    fn default() -> Self {
        Self {
            n_general: 420,
            n_soccer: 80,
            emb_dim: 12,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewsCorpora {
    pub train: Corpus,
    /// Clean soccer documents for influence-based scoring.
    pub soccer_val: Corpus,
    pub embeddings: EmbeddingTable,
    /// City names, one per line.
    pub gazetteer: String,
}

/// General documents mention cities as locations (`in Berlin`); soccer
/// documents start with `SOCCER` and use city names as team names, labelled
/// as organizations.
pub fn news_corpora(spec: &NewsSpec, n_val_soccer: usize, seed: u64) -> NewsCorpora {
    let labels = conll_labels();
    let mut lex = Lexicon::new(spec.emb_dim, spec.noise, seed);
    let stop = lex.fixed("stop", crate::features::DEFAULT_STOPWORDS);
    let filler = lex.words("filler", 60, false);
    let loc_prep = lex.fixed("loc_prep", &["near", "outside", "across", "toward"]);
    let sport = lex.fixed(
        "sport",
        &[
            "beat", "drew", "against", "versus", "edged", "thrashed", "hosted", "held",
        ],
    );
    let sport_o = lex.fixed(
        "sport_o",
        &[
            "goal", "halftime", "penalty", "striker", "league", "match", "title",
        ],
    );
    let scores = lex.fixed(
        "score",
        &["1-0", "2-1", "3-0", "0-0", "1-1", "2-2", "4-1", "3-2"],
    );
    lex.fixed("header", &["SOCCER", "-"]);
    let first = lex.words("first", 40, true);
    let last = lex.words("last", 40, true);
    let country = lex.words("place", 30, true);
    let city = lex.words("city", 25, true);
    let org = lex.words("org", 40, true);
    let misc = lex.words("misc", 25, true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);

    let general_sentence = |rng: &mut ChaCha8Rng| -> Sentence {
        let mut b = Builder::new(&labels);
        let target = rng.gen_range(6..=14);
        while b.len() < target {
            let r: f64 = rng.gen();
            if r < 0.07 {
                b.entity(&[pick(rng, &first), pick(rng, &last)], "PER");
            } else if r < 0.12 {
                b.push(pick(rng, &loc_prep), "O");
                b.entity(&[pick(rng, &city)], "LOC");
            } else if r < 0.17 {
                b.entity(&[pick(rng, &country)], "LOC");
            } else if r < 0.22 {
                b.entity(&[pick(rng, &org)], "ORG");
            } else if r < 0.25 {
                b.entity(&[pick(rng, &misc)], "MISC");
            } else if r < 0.55 {
                b.push(pick(rng, &stop), "O");
            } else {
                b.push(pick(rng, &filler), "O");
            }
        }
        b.finish()
    };
    let soccer_sentence = |rng: &mut ChaCha8Rng, header: bool| -> Sentence {
        let mut b = Builder::new(&labels);
        if header {
            b.push("SOCCER", "O");
            b.push("-", "O");
        }
        b.entity(&[pick(rng, &city)], "ORG");
        b.push(pick(rng, &sport), "O");
        b.entity(&[pick(rng, &city)], "ORG");
        b.push(pick(rng, &scores), "O");
        for _ in 0..rng.gen_range(1..=4) {
            let r: f64 = rng.gen();
            if r < 0.2 {
                b.entity(&[pick(rng, &first), pick(rng, &last)], "PER");
            } else if r < 0.5 {
                b.push(pick(rng, &sport_o), "O");
            } else {
                b.push(pick(rng, &stop), "O");
            }
        }
        b.finish()
    };

    let mut docs = Vec::new();
    let mut kinds: Vec<bool> = std::iter::repeat_n(false, spec.n_general)
        .chain(std::iter::repeat_n(true, spec.n_soccer))
        .collect();
    kinds.shuffle(&mut rng);
    for (i, soccer) in kinds.into_iter().enumerate() {
        let n_sent = rng.gen_range(1..=2);
        let sentences = if soccer {
            (0..n_sent)
                .map(|s| soccer_sentence(&mut rng, s == 0))
                .collect()
        } else {
            (0..n_sent).map(|_| general_sentence(&mut rng)).collect()
        };
        docs.push(Document {
            id: format!("doc{i}"),
            sentences,
        });
    }
    let val_docs = (0..n_val_soccer)
        .map(|i| Document {
            id: format!("val{i}"),
            sentences: vec![soccer_sentence(&mut rng, true)],
        })
        .collect();
    let gazetteer = city
        .iter()
        .map(|c| format!("{}\n", c.to_lowercase()))
        .collect();
    NewsCorpora {
        train: Corpus {
            labels: labels.clone(),
            documents: docs,
        },
        soccer_val: Corpus {
            labels,
            documents: val_docs,
        },
        embeddings: lex.table,
        gazetteer,
    }
}

pub fn dosage_labels() -> LabelSet {
    LabelSet::new(["O", "B-INT", "I-INT"]).expect("static labels")
}

/// Pattern file matching a number followed by a dosage unit, written
/// together (`25mg`) or apart (`25 mg`).
pub const DOSAGE_PATTERNS: &str = "\
# number followed by a unit
@NUM@ = [0-9]+(?:\\.[0-9]+)?
@NUM@ ?(?:mg|ml|g|mcg|mg/kg|mg/day|ml/kg)
";

#[derive(Debug, Clone)]
pub struct DosageCorpora {
    pub train: Corpus,
    /// Expert-labelled documents: dosages are never part of the span.
    pub test: Corpus,
    pub embeddings: EmbeddingTable,
}

/// Intervention corpus with a two-way inconsistency. Dosages are single
/// tokens (`25mg`). A training document gives a dosage after the drug name with probability `dosage_rate`; that
/// dosage is part of the intervention span with probability `include_rate`,
/// otherwise outside it. Every test document gives a dosage, outside the
/// span. Numbers also appear outside dosages (`for 30 days`), and generic
/// therapy words (`exercise`) are marked as interventions half of the time
/// in both splits.
pub fn dosage_corpora(
    n_train: usize,
    n_test: usize,
    include_rate: f64,
    dosage_rate: f64,
    seed: u64,
) -> DosageCorpora {
    let labels = dosage_labels();
    let mut lex = Lexicon::new(12, 0.5, seed);
    let stop = lex.fixed("stop", crate::features::DEFAULT_STOPWORDS);
    lex.fixed("for", &["for"]);
    let filler = lex.words("filler", 50, false);
    let verbs = lex.fixed(
        "verb",
        &["received", "given", "administered", "took", "assigned"],
    );
    let drugs = lex.words("drug", 40, false);
    let numbers = lex.fixed(
        "number",
        &[
            "5", "10", "20", "25", "50", "100", "200", "2.5", "7.5", "0.5",
        ],
    );
    let mut dosages = Vec::new();
    for n in &numbers {
        for u in ["mg", "ml", "g", "mcg", "mg/kg", "mg/day", "ml/kg"] {
            let w = format!("{n}{u}");
            lex.add(&w, &[("number", 0.5), ("unit", 0.5)]);
            dosages.push(w);
        }
    }
    let durations = lex.fixed(
        "duration",
        &["days", "weeks", "months", "patients", "hours"],
    );
    let tail = lex.fixed("tail", &["daily", "orally", "weekly", "twice"]);
    let therapies = lex.fixed(
        "therapy",
        &[
            "exercise",
            "counselling",
            "diet",
            "education",
            "massage",
            "surgery",
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let make = |n: usize,
                prefix: &str,
                include_rate: f64,
                dosage_rate: f64,
                rng: &mut ChaCha8Rng|
     -> Corpus {
        let mut documents = Vec::with_capacity(n);
        let words = |b: &mut Builder<'_>, k: usize, rng: &mut ChaCha8Rng| {
            for _ in 0..k {
                let r: f64 = rng.gen();
                if r < 0.1 {
                    b.push("for", "O");
                    b.push(pick(rng, &numbers), "O");
                    b.push(pick(rng, &durations), "O");
                } else if r < 0.2 {
                    let tag = if rng.gen_bool(0.5) { "B-INT" } else { "O" };
                    b.push("with", "O");
                    b.push(pick(rng, &therapies), tag);
                } else if r < 0.55 {
                    b.push(pick(rng, &stop), "O");
                } else {
                    b.push(pick(rng, &filler), "O");
                }
            }
        };
        for i in 0..n {
            let mut b = Builder::new(&labels);
            let k = rng.gen_range(1..=4);
            words(&mut b, k, rng);
            b.push(pick(rng, &verbs), "O");
            b.push(pick(rng, &drugs), "B-INT");
            if rng.gen_bool(dosage_rate) {
                let tag = if rng.gen_bool(include_rate) {
                    "I-INT"
                } else {
                    "O"
                };
                b.push(pick(rng, &dosages), tag);
                b.push(pick(rng, &tail), "O");
            }
            let k = rng.gen_range(1..=5);
            words(&mut b, k, rng);
            documents.push(Document {
                id: format!("{prefix}{i}"),
                sentences: vec![b.finish()],
            });
        }
        Corpus {
            labels: labels.clone(),
            documents,
        }
    };
    let train = make(n_train, "train", include_rate, dosage_rate, &mut rng);
    let test = make(n_test, "test", 0.0, 1.0, &mut rng);
    DosageCorpora {
        train,
        test,
        embeddings: lex.table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_bio_valid() {
        let spec = NerSpec::default();
        let (a, ta) = ner_corpora(&spec, &[30, 10], 3);
        let (b, tb) = ner_corpora(&spec, &[30, 10], 3);
        assert_eq!(a, b);
        assert_eq!(ta.fingerprint(), tb.fingerprint());
        for c in &a {
            assert!(c.bio_violations().is_empty());
            assert!(c.sentences().all(|(_, s)| (4..=15).contains(&s.len())));
        }
        let news = news_corpora(&NewsSpec::default(), 10, 1);
        assert!(news.train.bio_violations().is_empty());
        let soccer = news
            .train
            .documents
            .iter()
            .filter(|d| d.sentences[0].tokens[0] == "SOCCER")
            .count();
        assert_eq!(soccer, 80);
        let dosage = dosage_corpora(20, 5, 0.5, 0.3, 2);
        assert!(dosage.train.bio_violations().is_empty());
        assert!(dosage.test.bio_violations().is_empty());
    }
}
