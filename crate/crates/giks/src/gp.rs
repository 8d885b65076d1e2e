//! Kernel-smoothed counterfactual outcome inference: treatment-proximate
//! neighbor selection, Gaussian-process posterior mean and variance in
//! embedding space, and softmax confidence weights.

use crate::diffnet::Tensor2;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const ZERO_NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Cosine,
    DotProduct,
}

impl KernelKind {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        match self {
            KernelKind::DotProduct => dot,
            KernelKind::Cosine => {
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                // ReLU encoders can emit all-zero rows early in training.
                if na < ZERO_NORM_GUARD || nb < ZERO_NORM_GUARD {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GPConfig {
    #[serde(default)]
    pub kernel: KernelKind,
    /// Observation noise sigma^2.
    pub sigma2: f64,
    /// Treatment radius for neighbor selection.
    pub eps_gp: f64,
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: usize,
}

fn default_max_neighbors() -> usize {
    200
}

impl GPConfig {
    pub fn new(sigma2: f64, eps_gp: f64) -> Self {
        GPConfig { kernel: KernelKind::Cosine, sigma2, eps_gp, max_neighbors: default_max_neighbors() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config("sigma2 must be > 0".into()));
        }
        if !(self.eps_gp > 0.0 && self.eps_gp <= 1.0) {
            return Err(Error::Config("eps_gp must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPPosterior {
    pub mean: f64,
    pub variance: f64,
    pub neighbor_count: usize,
}

/// Indices j with |t_cf - t_j| <= eps_gp. When more than `max_neighbors`
/// qualify, the closest treatments win, ties broken by lower index; the
/// returned list is ascending by index.
pub fn select_neighbors(
    treatments: &[f64],
    t_cf: f64,
    eps_gp: f64,
    max_neighbors: usize,
) -> Vec<usize> {
    let mut picked: Vec<(f64, usize)> = treatments
        .iter()
        .enumerate()
        .filter_map(|(j, &tj)| {
            let d = (t_cf - tj).abs();
            (d <= eps_gp).then_some((d, j))
        })
        .collect();
    if picked.len() > max_neighbors {
        picked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        picked.truncate(max_neighbors);
    }
    let mut idx: Vec<usize> = picked.into_iter().map(|(_, j)| j).collect();
    idx.sort_unstable();
    idx
}

/// In-place Cholesky factorization of a symmetric matrix, lower triangle.
fn cholesky(a: &mut Tensor2) -> std::result::Result<(), ()> {
    let n = a.rows();
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= a.get(i, k) * a.get(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(());
                }
                a.set(i, j, s.sqrt());
            } else {
                a.set(i, j, s / a.get(j, j));
            }
        }
    }
    Ok(())
}

/// Solve L L^T x = b given the Cholesky factor in the lower triangle.
fn chol_solve(l: &Tensor2, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Posterior mean and variance of the outcome at the query embedding given
/// the neighbor inducing set:
///   mean = k*^T (sigma^2 I + K_NN)^-1 y_NN
///   var  = K(q,q) - k*^T (sigma^2 I + K_NN)^-1 k*
/// The SPD solve retries with diagonal jitter 1e-8, growing 10x, up to 3
/// times before reporting a numerical error.
pub fn gp_posterior(
    query_embed: &[f64],
    neighbor_embeds: &Tensor2,
    neighbor_y: &[f64],
    config: &GPConfig,
) -> Result<GPPosterior> {
    let m = neighbor_embeds.rows();
    if m == 0 {
        return Err(Error::NoNeighbors);
    }
    if neighbor_y.len() != m {
        return Err(Error::Dimension("neighbor outcome length != embedding rows".into()));
    }
    if neighbor_embeds.cols() != query_embed.len() {
        return Err(Error::Dimension("query embedding width != neighbor width".into()));
    }

    let mut gram = Tensor2::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = config.kernel.eval(neighbor_embeds.row(i), neighbor_embeds.row(j));
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let kstar: Vec<f64> =
        (0..m).map(|j| config.kernel.eval(query_embed, neighbor_embeds.row(j))).collect();
    let kqq = config.kernel.eval(query_embed, query_embed);

    let mut jitter = 0.0;
    let mut factor = None;
    for attempt in 0..4 {
        let mut v = gram.clone();
        for i in 0..m {
            let d = v.get(i, i) + config.sigma2 + jitter;
            v.set(i, i, d);
        }
        if cholesky(&mut v).is_ok() {
            factor = Some(v);
            break;
        }
        jitter = if attempt == 0 { 1e-8 } else { jitter * 10.0 };
    }
    let l = factor.ok_or_else(|| {
        Error::Numerical(format!("cholesky failed for {m}x{m} system after jitter retries"))
    })?;

    let alpha = chol_solve(&l, neighbor_y);
    let mean: f64 = kstar.iter().zip(&alpha).map(|(k, a)| k * a).sum();
    let beta = chol_solve(&l, &kstar);
    let explained: f64 = kstar.iter().zip(&beta).map(|(k, b)| k * b).sum();
    let variance = (kqq - explained).max(0.0);
    Ok(GPPosterior { mean, variance, neighbor_count: m })
}

/// Softmax of negated variances with max-subtraction; weights sum to 1.
pub fn ks_weights(variances: &[f64]) -> Vec<f64> {
    if variances.is_empty() {
        return Vec::new();
    }
    let hi = variances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = variances.iter().map(|&v| (-(v - hi)).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
