//! Log-space forward-backward over a linear chain whose positions may be
//! pinned to a single label.

/// Numerically stable `log Σ exp(x)`. Returns `-inf` for an empty or
/// all-`-inf` input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A chain of `len` positions with `n` labels. `emissions` is row-major
/// `len x n`; `trans` is row-major `n x n`.
pub(crate) struct Chain<'a> {
    pub n: usize,
    pub len: usize,
    pub emissions: Vec<f64>,
    pub trans: &'a [f64],
    /// `Some(c)` pins position `t` to label `c`.
    pub pinned: Option<&'a [Option<usize>]>,
}

pub(crate) struct ForwardBackward {
    pub log_z: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn allowed(&self, t: usize, c: usize) -> bool {
        match self.pinned {
            Some(p) => p[t].is_none_or(|y| y == c),
            None => true,
        }
    }

    pub fn forward(&self) -> Vec<f64> {
        let n = self.n;
        let mut alpha = vec![f64::NEG_INFINITY; self.len * n];
        for c in 0..n {
            if self.allowed(0, c) {
                alpha[c] = self.emissions[c];
            }
        }
        let mut buf = vec![0.0; n];
        for t in 1..self.len {
            for c in 0..n {
                if !self.allowed(t, c) {
                    continue;
                }
                for (p, slot) in buf.iter_mut().enumerate() {
                    *slot = alpha[(t - 1) * n + p] + self.trans[p * n + c];
                }
                alpha[t * n + c] = self.emissions[t * n + c] + logsumexp(&buf);
            }
        }
        alpha
    }

    pub fn backward(&self) -> Vec<f64> {
        let n = self.n;
        let mut beta = vec![f64::NEG_INFINITY; self.len * n];
        let last = self.len - 1;
        for c in 0..n {
            if self.allowed(last, c) {
                beta[last * n + c] = 0.0;
            }
        }
        let mut buf = vec![0.0; n];
        for t in (0..last).rev() {
            for c in 0..n {
                if !self.allowed(t, c) {
                    continue;
                }
                for (k, slot) in buf.iter_mut().enumerate() {
                    *slot = self.trans[c * n + k]
                        + self.emissions[(t + 1) * n + k]
                        + beta[(t + 1) * n + k];
                }
                beta[t * n + c] = logsumexp(&buf);
            }
        }
        beta
    }

    pub fn log_z(&self) -> f64 {
        let alpha = self.forward();
        logsumexp(&alpha[(self.len - 1) * self.n..])
    }

    pub fn forward_backward(&self) -> ForwardBackward {
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = logsumexp(&alpha[(self.len - 1) * self.n..]);
        ForwardBackward { log_z, alpha, beta }
    }
}

impl ForwardBackward {
    /// `p(y_t = c)`, row-major `len x n`.
    pub fn unary(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| {
                let v = a + b - self.log_z;
                if v == f64::NEG_INFINITY {
                    0.0
                } else {
                    v.exp()
                }
            })
            .collect()
    }

    /// `p(y_{t-1} = p, y_t = c)` for `t >= 1`, accumulated over `t` into a
    /// row-major `n x n` block.
    pub fn pairwise_sum(&self, chain: &Chain<'_>) -> Vec<f64> {
        let n = chain.n;
        let mut out = vec![0.0; n * n];
        for t in 1..chain.len {
            self.add_pairwise(chain, t, 1.0, &mut out);
        }
        out
    }

    pub fn pairwise_at(&self, chain: &Chain<'_>, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; chain.n * chain.n];
        self.add_pairwise(chain, t, 1.0, &mut out);
        out
    }

    fn add_pairwise(&self, chain: &Chain<'_>, t: usize, scale: f64, out: &mut [f64]) {
        let n = chain.n;
        for p in 0..n {
            let a = self.alpha[(t - 1) * n + p];
            if a == f64::NEG_INFINITY {
                continue;
            }
            for c in 0..n {
                let b = self.beta[t * n + c];
                if b == f64::NEG_INFINITY {
                    continue;
                }
                let v = a + chain.trans[p * n + c] + chain.emissions[t * n + c] + b - self.log_z;
                out[p * n + c] += scale * v.exp();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = logsumexp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let v = logsumexp(&[-1000.0, f64::NEG_INFINITY]);
        assert!((v + 1000.0).abs() < 1e-12);
    }
}
