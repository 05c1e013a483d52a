//! Label-noise injection with ground-truth manifests, misannotation
//! scorers, retrieval curves, and conflict analysis.
//!
//! Artifact corruption deliberately produces a bare forced label after the
//! artifact (for example `B-PER` after an `O`), which is BIO-valid; forcing
//! an `I-` label would not be and is allowed anyway.

mod conflict;
mod corrupt;
mod curve;
mod manifest;
mod patterns;
mod score;

pub use conflict::{conflict_analysis, ConflictCheck, ConflictRecord, ConflictReport};
pub use corrupt::{insert_artifact, random_entity_noise, systematic_relabel};
pub use curve::{retrieval_curve, RetrievalCurve};
pub use manifest::{CorruptionKind, CorruptionManifest, Edit, Insertion, MANIFEST_HEADER};
pub use patterns::{Gazetteer, PatternMatcher};
pub use score::{
    score_baselines, score_influence, score_segment_nn, Aggregation, MisannotationScore, ScoreSet,
    ScoringInput, TOP_VALUES,
};
