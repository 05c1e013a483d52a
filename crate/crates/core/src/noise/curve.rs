//! Retrieval curves: how quickly a ranking surfaces the corrupted documents.

use serde::{Deserialize, Serialize};

use super::manifest::CorruptionManifest;
use super::score::MisannotationScore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCurve {
    /// `(n, fraction of corrupted documents among the top n)`, n = 1..=N.
    pub points: Vec<(usize, f64)>,
    /// Mean of the fractions: the area under the curve with both axes
    /// normalized to [0, 1].
    pub auc: f64,
}

/// Ranks documents by descending score, ties by document id.
pub fn retrieval_curve(
    scores: &[MisannotationScore],
    manifest: &CorruptionManifest,
) -> RetrievalCurve {
    let mut order: Vec<&MisannotationScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.doc_score
            .total_cmp(&a.doc_score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let total = manifest.corrupted_docs.len();
    if total == 0 {
        log::warn!("manifest lists no corrupted documents; retrieval curve is flat zero");
    }
    let mut found = 0usize;
    let points: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if manifest.corrupted_docs.contains(&s.doc_id) {
                found += 1;
            }
            let frac = if total == 0 {
                0.0
            } else {
                found as f64 / total as f64
            };
            (i + 1, frac)
        })
        .collect();
    let auc = if points.is_empty() {
        0.0
    } else {
        points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64
    };
    RetrievalCurve { points, auc }
}
