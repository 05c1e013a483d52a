//! Exact Hessian-vector products of the joint loss.
//!
//! The Hessian of `-log p(y | x)` is the covariance of the feature map
//! `φ(x, y)` under the model, independent of the gold labels. For a
//! direction `v`, `H v = E[φ S] - E[φ] E[S]` with `S = φ · v`. Since `S`
//! is additive over the chain, `E[S | y_t = c]` splits into a prefix part
//! (forward recursion) and a suffix part (backward recursion).

use super::lattice::Chain;
use super::types::{dot, CrfGradient, CrfParams, ObservationSequence};
use crate::error::Result;

/// `H_x v` where `H_x` is the Hessian of the joint loss of one sequence.
pub fn sequence_hvp(
    obs: &ObservationSequence,
    params: &CrfParams,
    v: &CrfGradient,
) -> Result<CrfGradient> {
    params.check_obs(obs)?;
    v.same_shape(params.n_labels(), params.dim())?;
    let n = params.n_labels();
    let len = obs.len();
    let chain = Chain {
        n,
        len,
        emissions: params.emission_scores(obs),
        trans: params.t(),
        pinned: None,
    };
    let fb = chain.forward_backward();
    let trans = params.t();
    let vt = v.t();

    // Per-position contribution of the direction: a[t][c] = v_W[c] · F_t.
    let mut a = vec![0.0; len * n];
    for t in 0..len {
        for c in 0..n {
            a[t * n + c] = dot(v.w_row(c), obs.feature(t));
        }
    }

    // prefix[t][c] = E[S restricted to positions ≤ t | y_t = c] under the
    // forward (prefix) distribution.
    let mut prefix = vec![0.0; len * n];
    prefix[..n].copy_from_slice(&a[..n]);
    let mut w = vec![0.0; n];
    for t in 1..len {
        for c in 0..n {
            let mut acc_log = f64::NEG_INFINITY;
            for (p, slot) in w.iter_mut().enumerate() {
                *slot = fb.alpha[(t - 1) * n + p] + trans[p * n + c];
                acc_log = log_add(acc_log, *slot);
            }
            let mut r = 0.0;
            for (p, &lw) in w.iter().enumerate() {
                let weight = (lw - acc_log).exp();
                r += weight * (prefix[(t - 1) * n + p] + vt[p * n + c]);
            }
            prefix[t * n + c] = a[t * n + c] + r;
        }
    }

    // suffix[t][c] = E[S restricted to positions > t | y_t = c].
    let mut suffix = vec![0.0; len * n];
    for t in (0..len.saturating_sub(1)).rev() {
        for c in 0..n {
            let base = fb.beta[t * n + c];
            let mut q = 0.0;
            for k in 0..n {
                let lw =
                    trans[c * n + k] + chain.emissions[(t + 1) * n + k] + fb.beta[(t + 1) * n + k]
                        - base;
                q += lw.exp() * (vt[c * n + k] + a[(t + 1) * n + k] + suffix[(t + 1) * n + k]);
            }
            suffix[t * n + c] = q;
        }
    }

    let unary = fb.unary();
    let mean_s: f64 = (0..n).map(|c| unary[c] * (prefix[c] + suffix[c])).sum();

    let mut out = CrfGradient::zeros(n, params.dim());
    let mut coef = vec![0.0; n];
    for t in 0..len {
        for c in 0..n {
            let idx = t * n + c;
            coef[c] = unary[idx] * (prefix[idx] + suffix[idx] - mean_s);
        }
        out.add_outer_w(1.0, &coef, obs.feature(t));
    }
    for t in 1..len {
        let pair = fb.pairwise_at(&chain, t);
        for p in 0..n {
            for c in 0..n {
                let prob = pair[p * n + c];
                if prob == 0.0 {
                    continue;
                }
                let cond =
                    prefix[(t - 1) * n + p] + vt[p * n + c] + a[t * n + c] + suffix[t * n + c];
                *out.t_at_mut(p, c) += prob * (cond - mean_s);
            }
        }
    }
    Ok(out)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
