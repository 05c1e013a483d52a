use std::collections::HashMap;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, duplicate-free set of label names. A label's index is its
/// position in the list and never changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::invalid(format!(
                "a label set needs at least 2 labels, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid label name {name:?}")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.get(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_owned()))
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }
}

/// Dense per-token feature vectors for one sequence, plus surface tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    dim: usize,
    features: Vec<f64>,
    tokens: Vec<String>,
}

impl ObservationSequence {
    pub fn new(tokens: Vec<String>, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid(
                "observation sequence must have at least one token",
            ));
        }
        if tokens.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                found: tokens.len(),
            });
        }
        let dim = features[0].len();
        let mut flat = Vec::with_capacity(dim * features.len());
        for row in &features {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature value {v}")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            dim,
            features: flat,
            tokens,
        })
    }

    /// Builds a sequence from features alone; tokens become `t1`, `t2`, ...
    pub fn from_features(features: Vec<Vec<f64>>) -> Result<Self> {
        let tokens = (1..=features.len()).map(|t| format!("t{t}")).collect();
        Self::new(tokens, features)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Feature vector of 0-based position `t`.
    pub fn feature(&self, t: usize) -> &[f64] {
        &self.features[t * self.dim..(t + 1) * self.dim]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Full label assignment (indices into a [`LabelSet`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSequence(pub Vec<usize>);

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn check(&self, len: usize, n_labels: usize) -> Result<()> {
        if self.0.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: self.0.len(),
            });
        }
        match self.0.iter().find(|&&y| y >= n_labels) {
            Some(&index) => Err(Error::LabelOutOfRange { index, n_labels }),
            None => Ok(()),
        }
    }

    /// Masks the positions covered by `seg`.
    pub fn mask(&self, seg: Segment) -> Result<PartialLabelSequence> {
        seg.check(self.len())?;
        let range = seg.range0();
        Ok(PartialLabelSequence(
            self.0
                .iter()
                .enumerate()
                .map(|(t, &y)| if range.contains(&t) { None } else { Some(y) })
                .collect(),
        ))
    }
}

/// Label assignment where `None` marks a masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialLabelSequence(pub Vec<Option<usize>>);

impl PartialLabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_masked(len: usize) -> Self {
        Self(vec![None; len])
    }

    pub fn check(&self, len: usize, n_labels: usize) -> Result<()> {
        if self.0.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: self.0.len(),
            });
        }
        match self.0.iter().flatten().find(|&&y| y >= n_labels) {
            Some(&index) => Err(Error::LabelOutOfRange { index, n_labels }),
            None => Ok(()),
        }
    }
}

impl From<&LabelSequence> for PartialLabelSequence {
    fn from(labels: &LabelSequence) -> Self {
        Self(labels.0.iter().map(|&y| Some(y)).collect())
    }
}

/// Inclusive, 1-based token range `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub a: usize,
    pub b: usize,
}

impl Segment {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == 0 || a > b {
            return Err(Error::InvalidSegment { a, b, len: 0 });
        }
        Ok(Self { a, b })
    }

    /// Single-token segment at 1-based position `t`.
    pub fn token(t: usize) -> Self {
        Self { a: t, b: t }
    }

    /// Whole-sequence segment `[1, len]`.
    pub fn full(len: usize) -> Self {
        Self { a: 1, b: len }
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.a == 0 || self.a > self.b || self.b > len {
            return Err(Error::InvalidSegment {
                a: self.a,
                b: self.b,
                len,
            });
        }
        Ok(())
    }

    /// 0-based inclusive range.
    pub fn range0(&self) -> std::ops::RangeInclusive<usize> {
        (self.a - 1)..=(self.b - 1)
    }

    pub fn width(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn is_single(&self) -> bool {
        self.a == self.b
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.a, self.b)
    }
}

macro_rules! weight_layout {
    ($name:ident) => {
        impl $name {
            pub fn zeros(n_labels: usize, dim: usize) -> Self {
                Self {
                    n_labels,
                    dim,
                    values: vec![0.0; n_labels * dim + n_labels * n_labels],
                }
            }

            /// Builds from a row-major `C x d` emission block and a row-major
            /// `C x C` transition block.
            pub fn from_parts(n_labels: usize, dim: usize, w: &[f64], t: &[f64]) -> Result<Self> {
                if w.len() != n_labels * dim {
                    return Err(Error::DimensionMismatch {
                        expected: n_labels * dim,
                        found: w.len(),
                    });
                }
                if t.len() != n_labels * n_labels {
                    return Err(Error::DimensionMismatch {
                        expected: n_labels * n_labels,
                        found: t.len(),
                    });
                }
                let mut values = Vec::with_capacity(w.len() + t.len());
                values.extend_from_slice(w);
                values.extend_from_slice(t);
                Self::from_flat(n_labels, dim, values)
            }

            pub fn from_flat(n_labels: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
                let expected = n_labels * dim + n_labels * n_labels;
                if values.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: values.len(),
                    });
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("weight value {v}")));
                }
                Ok(Self {
                    n_labels,
                    dim,
                    values,
                })
            }

            pub fn n_labels(&self) -> usize {
                self.n_labels
            }

            pub fn dim(&self) -> usize {
                self.dim
            }

            /// Total number of scalar parameters, `C*d + C*C`.
            pub fn n_params(&self) -> usize {
                self.values.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.values
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.values
            }

            /// Emission block, row-major `C x d`.
            pub fn w(&self) -> &[f64] {
                &self.values[..self.n_labels * self.dim]
            }

            pub fn w_mut(&mut self) -> &mut [f64] {
                let n = self.n_labels * self.dim;
                &mut self.values[..n]
            }

            pub fn w_row(&self, c: usize) -> &[f64] {
                &self.values[c * self.dim..(c + 1) * self.dim]
            }

            /// Transition block, row-major `C x C` (row = previous label).
            pub fn t(&self) -> &[f64] {
                &self.values[self.n_labels * self.dim..]
            }

            pub fn t_mut(&mut self) -> &mut [f64] {
                let n = self.n_labels * self.dim;
                &mut self.values[n..]
            }

            pub fn same_shape(&self, other_labels: usize, other_dim: usize) -> Result<()> {
                if self.n_labels != other_labels {
                    return Err(Error::DimensionMismatch {
                        expected: self.n_labels,
                        found: other_labels,
                    });
                }
                if self.dim != other_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: other_dim,
                    });
                }
                Ok(())
            }

            pub fn dot(&self, other: &Self) -> f64 {
                debug_assert_eq!(self.values.len(), other.values.len());
                self.values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a * b)
                    .sum()
            }

            pub fn norm(&self) -> f64 {
                self.dot(self).sqrt()
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn scale(&mut self, factor: f64) {
                self.values.iter_mut().for_each(|v| *v *= factor);
            }

            pub fn scaled(&self, factor: f64) -> Self {
                let mut out = self.clone();
                out.scale(factor);
                out
            }

            /// `self += factor * other`
            pub fn axpy(&mut self, factor: f64, other: &Self) {
                debug_assert_eq!(self.values.len(), other.values.len());
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += factor * b;
                }
            }
        }
    };
}

/// Emission (`W`, `C x d`) and transition (`T`, `C x C`) weights, stored
/// contiguously: `W` row-major first, then `T` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    n_labels: usize,
    dim: usize,
    values: Vec<f64>,
}

weight_layout!(CrfParams);

impl CrfParams {
    pub fn trans(&self, prev: usize, cur: usize) -> f64 {
        self.t()[prev * self.n_labels + cur]
    }

    /// Per-position emission scores `W F(x)_t`, row-major `T x C`.
    pub fn emission_scores(&self, obs: &ObservationSequence) -> Vec<f64> {
        let c = self.n_labels;
        let mut out = vec![0.0; obs.len() * c];
        for t in 0..obs.len() {
            let f = obs.feature(t);
            for (k, slot) in out[t * c..(t + 1) * c].iter_mut().enumerate() {
                *slot = dot(self.w_row(k), f);
            }
        }
        out
    }

    pub fn to_gradient_layout(&self) -> CrfGradient {
        CrfGradient {
            n_labels: self.n_labels,
            dim: self.dim,
            values: self.values.clone(),
        }
    }

    /// `self + step * direction`
    pub fn stepped(&self, step: f64, direction: &CrfGradient) -> Self {
        let mut values = self.values.clone();
        for (a, b) in values.iter_mut().zip(direction.as_slice()) {
            *a += step * b;
        }
        Self {
            n_labels: self.n_labels,
            dim: self.dim,
            values,
        }
    }

    pub(crate) fn check_obs(&self, obs: &ObservationSequence) -> Result<()> {
        if obs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: obs.dim(),
            });
        }
        Ok(())
    }
}

/// Gradient (or any direction) in parameter space, same layout as
/// [`CrfParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    n_labels: usize,
    dim: usize,
    values: Vec<f64>,
}

weight_layout!(CrfGradient);

impl CrfGradient {
    /// Adds `scale * (e ⊗ f)` to the emission block.
    pub fn add_outer_w(&mut self, scale: f64, e: &[f64], f: &[f64]) {
        let d = self.dim;
        let w = self.w_mut();
        for (c, &ec) in e.iter().enumerate() {
            let s = scale * ec;
            if s == 0.0 {
                continue;
            }
            for (slot, &fj) in w[c * d..(c + 1) * d].iter_mut().zip(f) {
                *slot += s * fj;
            }
        }
    }

    pub fn t_at_mut(&mut self, prev: usize, cur: usize) -> &mut f64 {
        let c = self.n_labels;
        &mut self.t_mut()[prev * c + cur]
    }

    pub fn into_params(self) -> CrfParams {
        CrfParams {
            n_labels: self.n_labels,
            dim: self.dim,
            values: self.values,
        }
    }
}

impl Add for &CrfGradient {
    type Output = CrfGradient;

    fn add(self, rhs: &CrfGradient) -> CrfGradient {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &CrfGradient {
    type Output = CrfGradient;

    fn sub(self, rhs: &CrfGradient) -> CrfGradient {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&CrfGradient> for CrfGradient {
    fn add_assign(&mut self, rhs: &CrfGradient) {
        self.axpy(1.0, rhs);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
