//! Exact inference and differentiation for a first-order linear-chain CRF.
//!
//! The score of a label sequence `y` for observations `x` is
//!
//! ```text
//! s(y, x) = Σ_t W[y_t] · F(x)_t  +  Σ_{t ≥ 2} T[y_{t-1}, y_t]
//! ```
//!
//! There are no start or end potentials. Every quantity is computed in log
//! space. Losses are negative log-probabilities and all `grad_*` functions
//! return gradients of losses.

mod hvp;
mod lattice;
mod types;

pub use hvp::sequence_hvp;
pub use lattice::logsumexp;
pub(crate) use types::dot as dot_slices;
pub use types::{
    CrfGradient, CrfParams, LabelSequence, LabelSet, ObservationSequence, PartialLabelSequence,
    Segment,
};

use crate::error::Result;
use lattice::{Chain, ForwardBackward};

fn full_chain<'a>(obs: &ObservationSequence, params: &'a CrfParams) -> Result<Chain<'a>> {
    params.check_obs(obs)?;
    Ok(Chain {
        n: params.n_labels(),
        len: obs.len(),
        emissions: params.emission_scores(obs),
        trans: params.t(),
        pinned: None,
    })
}

/// Unnormalised score `s(y, x)`.
pub fn score(obs: &ObservationSequence, labels: &LabelSequence, params: &CrfParams) -> Result<f64> {
    params.check_obs(obs)?;
    labels.check(obs.len(), params.n_labels())?;
    let y = labels.as_slice();
    let mut s = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        s += types::dot(params.w_row(yt), obs.feature(t));
        if t > 0 {
            s += params.trans(y[t - 1], yt);
        }
    }
    Ok(s)
}

/// `log Z(x)` by the forward algorithm.
pub fn log_partition(obs: &ObservationSequence, params: &CrfParams) -> Result<f64> {
    Ok(full_chain(obs, params)?.log_z())
}

/// `log p(y | x)`.
pub fn joint_log_prob(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    params: &CrfParams,
) -> Result<f64> {
    Ok(score(obs, labels, params)? - log_partition(obs, params)?)
}

/// `log p(y_{observed} | x)`, summing over every completion of the masked
/// positions.
pub fn marginal_log_prob(
    obs: &ObservationSequence,
    partial: &PartialLabelSequence,
    params: &CrfParams,
) -> Result<f64> {
    let mut chain = full_chain(obs, params)?;
    partial.check(obs.len(), params.n_labels())?;
    let log_z = chain.log_z();
    chain.pinned = Some(&partial.0);
    Ok(chain.log_z() - log_z)
}

/// The segment lattice: only positions inside the segment vary, entered
/// from the fixed label at `a-1` and left towards the fixed label at `b+1`.
fn segment_chain<'a>(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    seg: Segment,
    params: &'a CrfParams,
) -> Result<(Chain<'a>, usize, usize)> {
    params.check_obs(obs)?;
    labels.check(obs.len(), params.n_labels())?;
    seg.check(obs.len())?;
    let n = params.n_labels();
    let (s, e) = (seg.a - 1, seg.b - 1);
    let y = labels.as_slice();
    let full = params.emission_scores(obs);
    let mut emissions = full[s * n..(e + 1) * n].to_vec();
    if s > 0 {
        for c in 0..n {
            emissions[c] += params.trans(y[s - 1], c);
        }
    }
    if e + 1 < obs.len() {
        let off = (e - s) * n;
        for c in 0..n {
            emissions[off + c] += params.trans(c, y[e + 1]);
        }
    }
    Ok((
        Chain {
            n,
            len: e - s + 1,
            emissions,
            trans: params.t(),
            pinned: None,
        },
        s,
        e,
    ))
}

/// `log p(y_{[a,b]} | y_{-[a,b]}, x)` computed on the segment lattice.
pub fn conditional_segment_log_prob(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    seg: Segment,
    params: &CrfParams,
) -> Result<f64> {
    let (chain, s, e) = segment_chain(obs, labels, seg, params)?;
    let y = &labels.as_slice()[s..=e];
    let n = chain.n;
    let mut local = 0.0;
    for (k, &yk) in y.iter().enumerate() {
        local += chain.emissions[k * n + yk];
        if k > 0 {
            local += chain.trans[y[k - 1] * n + yk];
        }
    }
    let value = local - chain.log_z();
    #[cfg(debug_assertions)]
    {
        let other = joint_log_prob(obs, labels, params)?
            - marginal_log_prob(obs, &labels.mask(seg)?, params)?;
        debug_assert!(
            (value - other).abs() <= 1e-7 * (1.0 + value.abs()),
            "segment lattice {value} disagrees with joint - marginal {other}"
        );
    }
    Ok(value)
}

/// Highest-scoring label sequence and its score. Ties go to the lowest
/// label index, both for the final label and at every backpointer.
pub fn viterbi_decode(
    obs: &ObservationSequence,
    params: &CrfParams,
) -> Result<(LabelSequence, f64)> {
    params.check_obs(obs)?;
    let n = params.n_labels();
    let len = obs.len();
    let em = params.emission_scores(obs);
    let mut delta = em[..n].to_vec();
    let mut back = vec![0usize; len * n];
    for t in 1..len {
        let mut next = vec![0.0; n];
        for c in 0..n {
            let mut best = 0;
            let mut best_v = delta[0] + params.trans(0, c);
            for p in 1..n {
                let v = delta[p] + params.trans(p, c);
                if v > best_v {
                    best_v = v;
                    best = p;
                }
            }
            back[t * n + c] = best;
            next[c] = best_v + em[t * n + c];
        }
        delta = next;
    }
    let mut last = 0;
    for c in 1..n {
        if delta[c] > delta[last] {
            last = c;
        }
    }
    let best_score = delta[last];
    let mut path = vec![0usize; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * n + path[t]];
    }
    Ok((LabelSequence(path), best_score))
}

/// `p(y_t = c | x)`, one row of length `C` per position.
pub fn position_marginals(obs: &ObservationSequence, params: &CrfParams) -> Result<Vec<Vec<f64>>> {
    let chain = full_chain(obs, params)?;
    let unary = chain.forward_backward().unary();
    Ok(unary.chunks(chain.n).map(<[f64]>::to_vec).collect())
}

/// Adds `scale * E[φ]` under the chain's distribution, where the chain
/// spans positions `offset..offset + chain.len` of `obs`.
fn add_expected(
    obs: &ObservationSequence,
    chain: &Chain<'_>,
    fb: &ForwardBackward,
    offset: usize,
    scale: f64,
    grad: &mut CrfGradient,
) {
    let n = chain.n;
    let unary = fb.unary();
    for k in 0..chain.len {
        grad.add_outer_w(scale, &unary[k * n..(k + 1) * n], obs.feature(offset + k));
    }
    let pair = fb.pairwise_sum(chain);
    for (slot, p) in grad.t_mut().iter_mut().zip(&pair) {
        *slot += scale * p;
    }
}

/// Adds `scale * φ(y)` restricted to positions `range`, including the
/// transitions into and out of the range.
fn add_observed(
    obs: &ObservationSequence,
    y: &[usize],
    range: std::ops::RangeInclusive<usize>,
    scale: f64,
    grad: &mut CrfGradient,
) {
    let (s, e) = (*range.start(), *range.end());
    let d = grad.dim();
    for t in s..=e {
        let row = &mut grad.w_mut()[y[t] * d..(y[t] + 1) * d];
        for (slot, f) in row.iter_mut().zip(obs.feature(t)) {
            *slot += scale * f;
        }
    }
    for t in s.max(1)..=(e + 1).min(y.len() - 1) {
        *grad.t_at_mut(y[t - 1], y[t]) += scale;
    }
}

/// Gradient of `-log p(y | x)`.
pub fn grad_joint_loss(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    params: &CrfParams,
) -> Result<CrfGradient> {
    Ok(joint_loss_grad(obs, labels, params)?.1)
}

/// Gradient of `-log p(y_{observed} | x)`.
pub fn grad_marginal_loss(
    obs: &ObservationSequence,
    partial: &PartialLabelSequence,
    params: &CrfParams,
) -> Result<CrfGradient> {
    Ok(marginal_loss_grad(obs, partial, params)?.1)
}

/// Gradient of `-log p(y_{[a,b]} | y_{-[a,b]}, x)`, computed by
/// forward-backward on the segment lattice.
pub fn grad_conditional_loss(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    seg: Segment,
    params: &CrfParams,
) -> Result<CrfGradient> {
    Ok(conditional_loss_grad(obs, labels, seg, params)?.1)
}

/// `-log p(y | x)` and its gradient from one forward-backward pass.
pub fn joint_loss_grad(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    params: &CrfParams,
) -> Result<(f64, CrfGradient)> {
    let chain = full_chain(obs, params)?;
    labels.check(obs.len(), params.n_labels())?;
    let fb = chain.forward_backward();
    let mut grad = CrfGradient::zeros(params.n_labels(), params.dim());
    add_expected(obs, &chain, &fb, 0, 1.0, &mut grad);
    add_observed(obs, labels.as_slice(), 0..=obs.len() - 1, -1.0, &mut grad);
    let loss = fb.log_z - score(obs, labels, params)?;
    Ok((loss, grad))
}

/// Conditional segment loss and its gradient from one pass over the
/// segment lattice.
pub fn conditional_loss_grad(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    seg: Segment,
    params: &CrfParams,
) -> Result<(f64, CrfGradient)> {
    let (chain, s, e) = segment_chain(obs, labels, seg, params)?;
    let n = chain.n;
    let y = labels.as_slice();
    let fb = chain.forward_backward();
    let mut local = 0.0;
    for k in 0..chain.len {
        local += chain.emissions[k * n + y[s + k]];
        if k > 0 {
            local += chain.trans[y[s + k - 1] * n + y[s + k]];
        }
    }
    let mut grad = CrfGradient::zeros(n, params.dim());
    add_expected(obs, &chain, &fb, s, 1.0, &mut grad);
    let unary = fb.unary();
    let last = chain.len - 1;
    for c in 0..n {
        if s > 0 {
            *grad.t_at_mut(y[s - 1], c) += unary[c];
        }
        if e + 1 < obs.len() {
            *grad.t_at_mut(c, y[e + 1]) += unary[last * n + c];
        }
    }
    add_observed(obs, y, s..=e, -1.0, &mut grad);
    Ok((fb.log_z - local, grad))
}

/// Marginal loss and its gradient.
pub fn marginal_loss_grad(
    obs: &ObservationSequence,
    partial: &PartialLabelSequence,
    params: &CrfParams,
) -> Result<(f64, CrfGradient)> {
    let mut chain = full_chain(obs, params)?;
    partial.check(obs.len(), params.n_labels())?;
    let mut grad = CrfGradient::zeros(params.n_labels(), params.dim());
    let fb = chain.forward_backward();
    add_expected(obs, &chain, &fb, 0, 1.0, &mut grad);
    chain.pinned = Some(&partial.0);
    let fb_pinned = chain.forward_backward();
    add_expected(obs, &chain, &fb_pinned, 0, -1.0, &mut grad);
    Ok((fb.log_z - fb_pinned.log_z, grad))
}

/// `p(y_t = · | y_{-t}, x)` for 0-based position `t`.
pub fn token_conditional(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    t: usize,
    params: &CrfParams,
) -> Result<Vec<f64>> {
    let (chain, _, _) = segment_chain(obs, labels, Segment::token(t + 1), params)?;
    let z = logsumexp(&chain.emissions);
    Ok(chain.emissions.iter().map(|v| (v - z).exp()).collect())
}

/// Loss-gradient error vector of a single-token segment at 0-based `t`:
/// `e = p(· | y_{-t}, x) - onehot(y_t)`, so that the conditional-loss
/// gradient is `dW = e ⊗ F(x)_t` and
/// `dT = onehot(y_{t-1}) ⊗ e + e ⊗ onehot(y_{t+1})`.
pub fn token_error_vector(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    t: usize,
    params: &CrfParams,
) -> Result<Vec<f64>> {
    let mut e = token_conditional(obs, labels, t, params)?;
    e[labels.as_slice()[t]] -= 1.0;
    Ok(e)
}

/// Dense gradient from a factored single-token record.
pub fn expand_token_gradient(
    n_labels: usize,
    error: &[f64],
    feature: &[f64],
    prev: Option<usize>,
    next: Option<usize>,
) -> CrfGradient {
    let mut grad = CrfGradient::zeros(n_labels, feature.len());
    grad.add_outer_w(1.0, error, feature);
    for (c, &ec) in error.iter().enumerate() {
        if let Some(p) = prev {
            *grad.t_at_mut(p, c) += ec;
        }
        if let Some(q) = next {
            *grad.t_at_mut(c, q) += ec;
        }
    }
    grad
}
