//! Hessian-vector products over a dataset and the three ways of applying
//! the inverse Hessian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::{self, CrfGradient, CrfParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HessianMode {
    /// Replace the Hessian by the identity.
    Identity,
    /// Dense `(H + λI)` built column by column and Cholesky-factored.
    ExplicitDamped { damping: f64 },
    /// Conjugate gradient on `(H + λI) x = g` using Hessian-vector products.
    CgHvp {
        damping: f64,
        max_cg_iters: usize,
        cg_tol: f64,
    },
}

impl HessianMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HessianMode::Identity => Ok(()),
            HessianMode::ExplicitDamped { damping } | HessianMode::CgHvp { damping, .. }
                if !(damping > 0.0) || !damping.is_finite() =>
            {
                Err(Error::invalid(format!(
                    "damping must be positive, got {damping}"
                )))
            }
            HessianMode::CgHvp {
                cg_tol,
                max_cg_iters,
                ..
            } if !(cg_tol > 0.0) || max_cg_iters == 0 => {
                Err(Error::invalid("cg_tol and max_cg_iters must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HessianMode::Identity => "identity",
            HessianMode::ExplicitDamped { .. } => "explicit",
            HessianMode::CgHvp { .. } => "cg",
        }
    }
}

/// `(H + λI) v`, where `H` is the Hessian of the mean joint loss of
/// `dataset` at `params`.
pub fn hvp(
    dataset: &Dataset,
    params: &CrfParams,
    v: &CrfGradient,
    ridge: f64,
) -> Result<CrfGradient> {
    params.same_shape(dataset.n_labels(), dataset.dim())?;
    v.same_shape(dataset.n_labels(), dataset.dim())?;
    let parts: Vec<Result<CrfGradient>> = dataset
        .examples()
        .par_iter()
        .map(|ex| crf::sequence_hvp(&ex.obs, params, v))
        .collect();
    let mut out = CrfGradient::zeros(params.n_labels(), params.dim());
    let scale = if dataset.is_empty() {
        0.0
    } else {
        1.0 / dataset.len() as f64
    };
    for (i, part) in parts.into_iter().enumerate() {
        out.axpy(scale, &part.map_err(|e| e.at_example(i))?);
    }
    out.axpy(ridge, v);
    Ok(out)
}

/// Dense `H + λI`, one Hessian-vector product per column, symmetrized.
pub fn explicit_hessian(
    dataset: &Dataset,
    params: &CrfParams,
    damping: f64,
) -> Result<DMatrix<f64>> {
    let p = params.n_params();
    let (c, d) = (params.n_labels(), params.dim());
    let columns: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut e = CrfGradient::zeros(c, d);
            e.as_mut_slice()[j] = 1.0;
            hvp(dataset, params, &e, damping).map(CrfGradient::into_vec)
        })
        .collect();
    let mut h = DMatrix::zeros(p, p);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            h[(i, j)] = v;
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Applies the (possibly damped) inverse Hessian.
pub enum Solver<'a> {
    Identity,
    Explicit {
        n_labels: usize,
        dim: usize,
        cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    Cg {
        dataset: &'a Dataset,
        params: &'a CrfParams,
        damping: f64,
        max_iters: usize,
        tol: f64,
    },
}

impl<'a> Solver<'a> {
    pub fn new(dataset: &'a Dataset, params: &'a CrfParams, mode: HessianMode) -> Result<Self> {
        mode.validate()?;
        Ok(match mode {
            HessianMode::Identity => Solver::Identity,
            HessianMode::ExplicitDamped { damping } => {
                let h = explicit_hessian(dataset, params, damping)?;
                let cholesky = h.cholesky().ok_or_else(|| {
                    Error::NonFinite("damped Hessian is not positive definite".into())
                })?;
                Solver::Explicit {
                    n_labels: params.n_labels(),
                    dim: params.dim(),
                    cholesky,
                }
            }
            HessianMode::CgHvp {
                damping,
                max_cg_iters,
                cg_tol,
            } => Solver::Cg {
                dataset,
                params,
                damping,
                max_iters: max_cg_iters,
                tol: cg_tol,
            },
        })
    }

    /// `(H + λI)^{-1} g`, or `g` itself in identity mode.
    pub fn solve(&self, g: &CrfGradient) -> Result<CrfGradient> {
        match self {
            Solver::Identity => Ok(g.clone()),
            Solver::Explicit {
                n_labels,
                dim,
                cholesky,
            } => {
                let b = DVector::from_column_slice(g.as_slice());
                let x = cholesky.solve(&b);
                CrfGradient::from_flat(*n_labels, *dim, x.as_slice().to_vec())
            }
            Solver::Cg {
                dataset,
                params,
                damping,
                max_iters,
                tol,
            } => conjugate_gradient(g, *max_iters, *tol, |v| hvp(dataset, params, v, *damping)),
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` given as an
/// operator. Stops when `‖r‖ <= tol · ‖b‖`.
pub fn conjugate_gradient(
    b: &CrfGradient,
    max_iters: usize,
    tol: f64,
    apply: impl Fn(&CrfGradient) -> Result<CrfGradient>,
) -> Result<CrfGradient> {
    let b_norm = b.norm();
    let mut x = CrfGradient::zeros(b.n_labels(), b.dim());
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::NonFinite(format!(
                "operator is not positive definite along search direction (pAp = {pap})"
            )));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = r.dot(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }
    if rr.sqrt() <= tol * b_norm {
        return Ok(x);
    }
    Err(Error::CgNotConverged {
        iterations: max_iters,
        residual: rr.sqrt(),
    })
}
