//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `max |g_i| <= grad_tol`.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 1000,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub final_loss: f64,
    pub final_grad_inf_norm: f64,
    pub converged: bool,
    /// Loss after every accepted step, starting with the initial loss.
    pub loss_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Two-loop recursion: returns `-H_k g`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f`, which returns the loss and its gradient. Trial points
/// with a non-finite loss are treated as line-search failures. A finite
/// loss with a non-finite gradient aborts with [`Error::NonFinite`].
pub fn minimize(
    f: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
) -> Result<(Vec<f64>, Diagnostics)> {
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "objective at the initial point ({fx})"
        )));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut loss_history = vec![fx];
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.grad_tol;

    while !converged && iterations < opts.max_iters {
        let mut d = direction(&g, &history);
        let mut slope = dot(&g, &d);
        if history.is_empty() || slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            evaluations += 1;
            if ft.is_finite() && ft <= fx + opts.armijo_c1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                log::debug!("line search failed at iteration {iterations}; stopping");
                break;
            }
            history.clear();
            continue;
        };
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient at iteration {iterations}; last finite loss {fx}"
            )));
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        loss_history.push(fx);
        converged = inf_norm(&g) <= opts.grad_tol;
    }

    Ok((
        x,
        Diagnostics {
            iterations,
            evaluations,
            final_loss: fx,
            final_grad_inf_norm: inf_norm(&g),
            converged,
            loss_history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = Σ i (x_i - i)^2 / 2
        let f = |x: &[f64]| {
            let mut loss = 0.0;
            let g: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let w = (i + 1) as f64;
                    loss += 0.5 * w * (v - i as f64).powi(2);
                    w * (v - i as f64)
                })
                .collect();
            Ok((loss, g))
        };
        let (x, diag) = minimize(f, vec![5.0; 6], &LbfgsOptions::default()).unwrap();
        assert!(diag.converged);
        for (i, v) in x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
        assert!(diag.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let loss = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((loss, g))
        };
        let opts = LbfgsOptions {
            max_iters: 5000,
            ..Default::default()
        };
        let (x, diag) = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert!(diag.converged, "{diag:?}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(matches!(
            minimize(f, vec![0.0], &LbfgsOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }
}
