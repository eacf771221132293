//! Gaussian-process optimizer with expected improvement.
//!
//! Squared-exponential kernel, constant mean set to the history average,
//! exact Cholesky fit. Proposals before `n_init` observations are random
//! unqueried elements; afterwards expected improvement (for minimization) is
//! scored on every unqueried element exhaustively and the argmax wins, ties
//! to the lowest index. The feasible set is small enough that exhaustive
//! scoring stays cheap.

use super::{random_unqueried, BlackBoxOptimizer, Observation};
use crate::search::FeasibleSet;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct BoConfig {
    /// Random exploration queries before the model takes over.
    pub n_init: usize,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    /// When set, the lengthscale is re-chosen each fit by leave-one-out
    /// error over this grid.
    pub lengthscale_grid: Option<Vec<f64>>,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_init: 5,
            lengthscale: 0.5,
            signal_var: 1.0,
            noise_var: 1e-6,
            lengthscale_grid: None,
        }
    }
}

pub struct BayesianOpt {
    cfg: BoConfig,
    rng: ChaCha12Rng,
}

impl BayesianOpt {
    pub fn new(cfg: BoConfig, seed: u64) -> Self {
        assert!(cfg.lengthscale > 0.0 && cfg.signal_var > 0.0 && cfg.noise_var >= 0.0);
        BayesianOpt { cfg, rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    fn choose_lengthscale(&self, history: &[Observation]) -> f64 {
        let Some(grid) = &self.cfg.lengthscale_grid else {
            return self.cfg.lengthscale;
        };
        let mut best = self.cfg.lengthscale;
        let mut best_err = f64::INFINITY;
        for &ell in grid {
            let mut err = 0.0;
            let mut ok = true;
            for leave in 0..history.len() {
                let rest: Vec<Observation> = history
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != leave)
                    .map(|(_, o)| o.clone())
                    .collect();
                match Gp::fit(&rest, ell, self.cfg.signal_var, self.cfg.noise_var) {
                    Some(gp) => {
                        let (mu, _) = gp.predict(&history[leave].point);
                        err += (mu - history[leave].loss).powi(2);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && err < best_err {
                best_err = err;
                best = ell;
            }
        }
        best
    }
}

impl BlackBoxOptimizer for BayesianOpt {
    fn name(&self) -> &'static str {
        "bo"
    }

    fn propose(&mut self, history: &[Observation], q: &FeasibleSet) -> Vec<f64> {
        let queried: HashSet<usize> = history.iter().map(|o| o.element).collect();
        let free: Vec<usize> = (0..q.len()).filter(|i| !queried.contains(i)).collect();
        if free.is_empty() || history.len() < self.cfg.n_init {
            return q.elements[random_unqueried(history, q, &mut self.rng)].clone();
        }
        if free.len() == 1 {
            return q.elements[free[0]].clone();
        }
        let ell = self.choose_lengthscale(history);
        let Some(gp) = Gp::fit(history, ell, self.cfg.signal_var, self.cfg.noise_var) else {
            return q.elements[random_unqueried(history, q, &mut self.rng)].clone();
        };
        let f_best = history.iter().map(|o| o.loss).fold(f64::INFINITY, f64::min);
        let mut best_idx = free[0];
        let mut best_ei = f64::NEG_INFINITY;
        for &i in &free {
            let (mu, var) = gp.predict(&q.elements[i]);
            let ei = expected_improvement(mu, var, f_best);
            if ei > best_ei {
                best_ei = ei;
                best_idx = i;
            }
        }
        q.elements[best_idx].clone()
    }

    fn observe(&mut self, _obs: &Observation) {}
}

/// Exact GP posterior over the observed points.
struct Gp {
    xs: Vec<Vec<f64>>,
    mean: f64,
    alpha: Vec<f64>,
    chol: Vec<Vec<f64>>,
    lengthscale: f64,
    signal_var: f64,
}

impl Gp {
    fn fit(history: &[Observation], lengthscale: f64, signal_var: f64, noise_var: f64) -> Option<Gp> {
        let n = history.len();
        if n == 0 {
            return None;
        }
        let xs: Vec<Vec<f64>> = history.iter().map(|o| o.point.clone()).collect();
        let mean = history.iter().map(|o| o.loss).sum::<f64>() / n as f64;
        let y: Vec<f64> = history.iter().map(|o| o.loss - mean).collect();
        for jitter in [0.0, 1e-8, 1e-7, 1e-6] {
            let mut k = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let v = kernel(&xs[i], &xs[j], lengthscale, signal_var);
                    k[i][j] = v;
                    k[j][i] = v;
                }
                k[i][i] += noise_var + jitter;
            }
            if let Some(chol) = cholesky(&k) {
                let alpha = chol_solve(&chol, &y);
                return Some(Gp { xs, mean, alpha, chol, lengthscale, signal_var });
            }
        }
        None
    }

    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> =
            self.xs.iter().map(|xi| kernel(xi, x, self.lengthscale, self.signal_var)).collect();
        let mu = self.mean + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = forward_solve(&self.chol, &ks);
        let var = (self.signal_var - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (mu, var)
    }
}

fn kernel(a: &[f64], b: &[f64], lengthscale: f64, signal_var: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_var * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

/// Lower-triangular factor of a symmetric positive definite matrix, or None
/// when a pivot goes non-positive.
fn cholesky(k: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = k.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[i][j];
            for (a, b) in l[i][..j].iter().zip(&l[j][..j]) {
                s -= a * b;
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i][j] * x[j];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn back_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= l[j][i] * x[j];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solves (L L^T) x = b.
fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    back_solve(l, &forward_solve(l, b))
}

/// Expected improvement below `f_best` for a posterior N(mu, var); always
/// nonnegative.
fn expected_improvement(mu: f64, var: f64, f_best: f64) -> f64 {
    let sigma = var.sqrt();
    let gap = f_best - mu;
    if sigma < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Polynomial approximation, absolute error under 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}
