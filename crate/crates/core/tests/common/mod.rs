//! Test-only oracles: exhaustive enumeration over label sequences and
//! central finite differences. Nothing here calls the forward-backward
//! code paths under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seginf::crf::{
    CrfGradient, CrfParams, LabelSequence, ObservationSequence, PartialLabelSequence, Segment,
};

pub struct Instance {
    pub obs: ObservationSequence,
    pub labels: LabelSequence,
    pub params: CrfParams,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(rng: &mut ChaCha8Rng, c: usize, d: usize, scale: f64) -> CrfParams {
    let w: Vec<f64> = (0..c * d).map(|_| rng.gen_range(-scale..scale)).collect();
    let t: Vec<f64> = (0..c * c).map(|_| rng.gen_range(-scale..scale)).collect();
    CrfParams::from_parts(c, d, &w, &t).unwrap()
}

pub fn random_instance(rng: &mut ChaCha8Rng, len: usize, c: usize, d: usize) -> Instance {
    let features: Vec<Vec<f64>> = (0..len)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let obs = ObservationSequence::from_features(features).unwrap();
    let labels = LabelSequence((0..len).map(|_| rng.gen_range(0..c)).collect());
    let params = random_params(rng, c, d, 1.0);
    Instance {
        obs,
        labels,
        params,
    }
}

/// Random instance with `C^T <= 4096`.
pub fn random_small_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let c = rng.gen_range(2..=5usize);
        let len = rng.gen_range(1..=8usize);
        if (c as f64).powi(len as i32) <= 4096.0 {
            let d = rng.gen_range(1..=4usize);
            return random_instance(rng, len, c, d);
        }
    }
}

pub fn random_segment(rng: &mut ChaCha8Rng, len: usize) -> Segment {
    let a = rng.gen_range(1..=len);
    let b = rng.gen_range(a..=len);
    Segment { a, b }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct score from the definition.
pub fn brute_score(obs: &ObservationSequence, y: &[usize], params: &CrfParams) -> f64 {
    let c = params.n_labels();
    let mut s = 0.0;
    for t in 0..y.len() {
        s += dot(params.w_row(y[t]), obs.feature(t));
        if t > 0 {
            s += params.t()[y[t - 1] * c + y[t]];
        }
    }
    s
}

/// Every label sequence of length `len` over `c` labels, lexicographic.
pub fn all_sequences(len: usize, c: usize) -> Vec<Vec<usize>> {
    let total = c.pow(len as u32);
    (0..total)
        .map(|mut k| {
            let mut y = vec![0; len];
            for t in (0..len).rev() {
                y[t] = k % c;
                k /= c;
            }
            y
        })
        .collect()
}

fn lse(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn brute_log_z(obs: &ObservationSequence, params: &CrfParams) -> f64 {
    lse(all_sequences(obs.len(), params.n_labels())
        .iter()
        .map(|y| brute_score(obs, y, params)))
}

pub fn brute_marginal(
    obs: &ObservationSequence,
    partial: &PartialLabelSequence,
    params: &CrfParams,
) -> f64 {
    let matching = all_sequences(obs.len(), params.n_labels())
        .into_iter()
        .filter(|y| {
            partial
                .0
                .iter()
                .zip(y)
                .all(|(p, v)| p.is_none_or(|p| p == *v))
        })
        .map(|y| brute_score(obs, &y, params));
    lse(matching) - brute_log_z(obs, params)
}

/// Conditional segment log-prob by enumerating the `C^{b-a+1}` completions
/// of the segment only.
pub fn brute_conditional(
    obs: &ObservationSequence,
    labels: &LabelSequence,
    seg: Segment,
    params: &CrfParams,
) -> f64 {
    let c = params.n_labels();
    let width = seg.b - seg.a + 1;
    let own = brute_score(obs, &labels.0, params);
    let others = all_sequences(width, c).into_iter().map(|fill| {
        let mut y = labels.0.clone();
        y[seg.a - 1..seg.b].copy_from_slice(&fill);
        brute_score(obs, &y, params)
    });
    own - lse(others)
}

pub fn brute_position_marginals(obs: &ObservationSequence, params: &CrfParams) -> Vec<Vec<f64>> {
    let c = params.n_labels();
    let lz = brute_log_z(obs, params);
    let mut out = vec![vec![0.0; c]; obs.len()];
    for y in all_sequences(obs.len(), c) {
        let p = (brute_score(obs, &y, params) - lz).exp();
        for (t, &yt) in y.iter().enumerate() {
            out[t][yt] += p;
        }
    }
    out
}

/// Maximum score, and the lexicographically smallest maximiser.
pub fn brute_argmax(obs: &ObservationSequence, params: &CrfParams) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for y in all_sequences(obs.len(), params.n_labels()) {
        let s = brute_score(obs, &y, params);
        if s > best.1 {
            best = (y, s);
        }
    }
    best
}

/// Central finite-difference gradient of `f` at `params`.
pub fn fd_gradient(params: &CrfParams, step: f64, f: impl Fn(&CrfParams) -> f64) -> CrfGradient {
    let mut g = CrfGradient::zeros(params.n_labels(), params.dim());
    for i in 0..params.n_params() {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += step;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= step;
        g.as_mut_slice()[i] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    g
}

/// `‖a - b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &CrfGradient, b: &CrfGradient, floor: f64) -> f64 {
    let diff: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / b.norm().max(floor)
}
