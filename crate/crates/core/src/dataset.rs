//! Featurized training data: observation/label pairs of one feature
//! dimension.

use crate::crf::{LabelSequence, ObservationSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub obs: ObservationSequence,
    pub labels: LabelSequence,
}

impl Example {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Examples sharing one label count `C` and one feature dimension `d`.
/// Mismatched examples are rejected when added.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_labels: usize,
    dim: usize,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(n_labels: usize, dim: usize) -> Self {
        Self {
            n_labels,
            dim,
            examples: Vec::new(),
        }
    }

    pub fn from_examples(n_labels: usize, dim: usize, examples: Vec<Example>) -> Result<Self> {
        let mut ds = Self::new(n_labels, dim);
        for ex in examples {
            ds.push(ex)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, example: Example) -> Result<()> {
        let index = self.examples.len();
        if example.obs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: example.obs.dim(),
            }
            .at_example(index));
        }
        example
            .labels
            .check(example.obs.len(), self.n_labels)
            .map_err(|e| e.at_example(index))?;
        self.examples.push(example);
        Ok(())
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> Result<&Example> {
        self.examples.get(index).ok_or_else(|| {
            Error::invalid(format!(
                "example index {index} out of range for dataset of {}",
                self.examples.len()
            ))
        })
    }

    pub fn total_tokens(&self) -> usize {
        self.examples.iter().map(Example::len).sum()
    }

    /// All but example `index`.
    pub fn without(&self, index: usize) -> Self {
        Self {
            n_labels: self.n_labels,
            dim: self.dim,
            examples: self
                .examples
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != index)
                .map(|(_, e)| e.clone())
                .collect(),
        }
    }
}
