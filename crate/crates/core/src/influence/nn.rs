//! Segment nearest neighbours in feature space, the cheap proxy that
//! ignores the model.

use serde::{Deserialize, Serialize};

use crate::crf::dot_slices;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub example: usize,
    /// 0-based token position.
    pub position: usize,
    pub label: usize,
    pub similarity: f64,
    /// Zero-norm candidate under cosine similarity; ranked after all others.
    pub degenerate: bool,
}

/// The `k` training tokens most similar to `query`, among those accepted by
/// `keep(example, position, label)`. Ties are broken by (example, position).
pub fn segment_nn(
    query: &[f64],
    train: &Dataset,
    similarity: Similarity,
    k: usize,
    keep: impl Fn(usize, usize, usize) -> bool,
) -> Result<Vec<Neighbor>> {
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: query.len(),
        });
    }
    let q_norm = dot_slices(query, query).sqrt();
    if similarity == Similarity::Cosine && q_norm == 0.0 {
        return Err(Error::invalid("cosine similarity with a zero-norm query"));
    }
    let mut out = Vec::new();
    let mut degenerate_count = 0usize;
    for (i, ex) in train.examples().iter().enumerate() {
        for t in 0..ex.len() {
            let label = ex.labels.as_slice()[t];
            if !keep(i, t, label) {
                continue;
            }
            let f = ex.obs.feature(t);
            let dot = dot_slices(query, f);
            let (sim, degenerate) = match similarity {
                Similarity::Dot => (dot, false),
                Similarity::Cosine => {
                    let n = dot_slices(f, f).sqrt();
                    if n == 0.0 {
                        degenerate_count += 1;
                        (0.0, true)
                    } else {
                        (dot / (q_norm * n), false)
                    }
                }
            };
            out.push(Neighbor {
                example: i,
                position: t,
                label,
                similarity: sim,
                degenerate,
            });
        }
    }
    if degenerate_count > 0 {
        log::warn!("{degenerate_count} zero-norm candidates ranked last under cosine similarity");
    }
    out.sort_by(|a, b| {
        a.degenerate
            .cmp(&b.degenerate)
            .then(b.similarity.total_cmp(&a.similarity))
            .then((a.example, a.position).cmp(&(b.example, b.position)))
    });
    out.truncate(k);
    Ok(out)
}
