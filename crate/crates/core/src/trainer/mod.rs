//! Composite CRF objectives and their minimization.
//!
//! An [`Objective`] is a weighted sum of per-example loss terms, scaled by a
//! normalizer (default `1/|D|`), plus an L2 ridge `(λ/2)‖θ‖²`. Standard
//! training is one `Joint` term of weight 1 per example. Removing the labels
//! of a segment adds a `Conditional` term of weight −1 for that segment,
//! which by `joint = marginal + conditional` leaves the marginal loss of the
//! partially labelled example in place.

pub mod lbfgs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfGradient, CrfParams, Segment};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use lbfgs::{Diagnostics, LbfgsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    Joint,
    Conditional(Segment),
    Marginal(Segment),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub example: usize,
    pub kind: TermKind,
    pub weight: f64,
}

impl LossTerm {
    pub fn joint(example: usize, weight: f64) -> Self {
        Self {
            example,
            kind: TermKind::Joint,
            weight,
        }
    }

    pub fn conditional(example: usize, seg: Segment, weight: f64) -> Self {
        Self {
            example,
            kind: TermKind::Conditional(seg),
            weight,
        }
    }

    pub fn marginal(example: usize, seg: Segment, weight: f64) -> Self {
        Self {
            example,
            kind: TermKind::Marginal(seg),
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_ridge: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub lbfgs_memory: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_ridge: 1e-3,
            max_iters: 2000,
            grad_tol: 1e-6,
            lbfgs_memory: 10,
            seed: 0,
            init: Init::Zeros,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if !(self.l2_ridge >= 0.0) || !self.l2_ridge.is_finite() {
            return Err(Error::invalid("l2_ridge must be non-negative"));
        }
        if self.max_iters == 0 || self.lbfgs_memory == 0 {
            return Err(Error::invalid(
                "max_iters and lbfgs_memory must be positive",
            ));
        }
        Ok(())
    }

    pub fn initial_params(&self, n_labels: usize, dim: usize) -> CrfParams {
        let mut params = CrfParams::zeros(n_labels, dim);
        if let Init::Uniform(s) = self.init {
            if s > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                params
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-s..s));
            }
        }
        params
    }

    fn lbfgs_options(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.lbfgs_memory,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub dataset: &'a Dataset,
    pub terms: Vec<LossTerm>,
    pub normalizer: f64,
    pub ridge: f64,
}

impl<'a> Objective<'a> {
    /// Mean joint loss over the dataset plus ridge.
    pub fn standard(dataset: &'a Dataset, ridge: f64) -> Self {
        Self {
            dataset,
            terms: (0..dataset.len())
                .map(|i| LossTerm::joint(i, 1.0))
                .collect(),
            normalizer: Self::default_normalizer(dataset),
            ridge,
        }
    }

    pub fn empty(dataset: &'a Dataset, ridge: f64) -> Self {
        Self {
            dataset,
            terms: Vec::new(),
            normalizer: Self::default_normalizer(dataset),
            ridge,
        }
    }

    fn default_normalizer(dataset: &Dataset) -> f64 {
        if dataset.is_empty() {
            1.0
        } else {
            1.0 / dataset.len() as f64
        }
    }

    pub fn with_term(mut self, term: LossTerm) -> Self {
        self.terms.push(term);
        self
    }

    /// Adds the term that removes the labels of `seg` in `example`.
    pub fn remove_segment(&mut self, example: usize, seg: Segment) {
        self.terms.push(LossTerm::conditional(example, seg, -1.0));
    }

    pub fn validate(&self) -> Result<()> {
        for term in &self.terms {
            let ex = self.dataset.get(term.example)?;
            if !term.weight.is_finite() {
                return Err(Error::NonFinite(format!("term weight {}", term.weight))
                    .at_example(term.example));
            }
            if let TermKind::Conditional(seg) | TermKind::Marginal(seg) = term.kind {
                seg.check(ex.len())
                    .map_err(|e| e.at_example(term.example))?;
            }
        }
        Ok(())
    }
}

/// Loss and gradient of one unweighted term.
pub fn term_loss_grad(
    dataset: &Dataset,
    term: &LossTerm,
    params: &CrfParams,
) -> Result<(f64, CrfGradient)> {
    let ex = dataset.get(term.example)?;
    let out = match term.kind {
        TermKind::Joint => crf::joint_loss_grad(&ex.obs, &ex.labels, params),
        TermKind::Conditional(seg) => crf::conditional_loss_grad(&ex.obs, &ex.labels, seg, params),
        TermKind::Marginal(seg) => {
            let partial = ex.labels.mask(seg)?;
            crf::marginal_loss_grad(&ex.obs, &partial, params)
        }
    };
    out.map_err(|e| e.at_example(term.example))
}

/// Objective value and exact gradient. Terms are computed in parallel and
/// reduced in term order, so the result does not depend on scheduling.
pub fn evaluate(objective: &Objective<'_>, params: &CrfParams) -> Result<(f64, CrfGradient)> {
    let ds = objective.dataset;
    params.same_shape(ds.n_labels(), ds.dim())?;
    let parts: Vec<Result<(f64, CrfGradient)>> = objective
        .terms
        .par_iter()
        .map(|term| term_loss_grad(ds, term, params))
        .collect();
    let mut loss = 0.0;
    let mut grad = CrfGradient::zeros(params.n_labels(), params.dim());
    for (term, part) in objective.terms.iter().zip(parts) {
        let (l, g) = part?;
        let w = objective.normalizer * term.weight;
        loss += w * l;
        grad.axpy(w, &g);
    }
    if objective.ridge > 0.0 {
        let theta = params.as_slice();
        loss += 0.5 * objective.ridge * theta.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.as_mut_slice().iter_mut().zip(theta) {
            *g += objective.ridge * v;
        }
    }
    Ok((loss, grad))
}

/// Minimizes `objective` from `init` with L-BFGS.
pub fn minimize(
    objective: &Objective<'_>,
    config: &TrainConfig,
    init: &CrfParams,
) -> Result<(CrfParams, Diagnostics)> {
    config.validate()?;
    objective.validate()?;
    let (c, d) = (init.n_labels(), init.dim());
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let params = CrfParams::from_flat(c, d, x.to_vec())?;
        let (loss, grad) = evaluate(objective, &params)?;
        Ok((loss, grad.into_vec()))
    };
    let (x, diag) = lbfgs::minimize(f, init.as_slice().to_vec(), &config.lbfgs_options())?;
    if !diag.converged {
        log::warn!(
            "L-BFGS stopped after {} iterations with max |grad| {:e}",
            diag.iterations,
            diag.final_grad_inf_norm
        );
    }
    Ok((CrfParams::from_flat(c, d, x)?, diag))
}

/// Standard training from the configured initialization.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(CrfParams, Diagnostics)> {
    let objective = Objective::standard(dataset, config.l2_ridge);
    let init = config.initial_params(dataset.n_labels(), dataset.dim());
    minimize(&objective, config, &init)
}
