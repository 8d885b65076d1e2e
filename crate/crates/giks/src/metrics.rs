//! Evaluation quantities: factual RMSE, counterfactual error, AMSE, dosage
//! policy error, the HSIC dependence measure, and the paired one-sided
//! t-test used for significance reporting.

use crate::data::{Dataset, ResponseOracle, BEST_DOSE_GRID};
use crate::diffnet::Tensor2;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::stats::student_t_sf;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_CF_GRID: usize = 65;
pub const DEFAULT_AMSE_DRAWS: usize = 200;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub factual_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hsic_observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hsic_augmented: Option<f64>,
    /// Per-seed metric arrays, filled by sweep aggregation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_seed: BTreeMap<String, Vec<f64>>,
    /// Comparison name -> one-sided paired p-value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub p_values: BTreeMap<String, f64>,
    /// Names of metrics that could not be computed (no oracle available).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unavailable: Vec<String>,
}

/// Root mean squared error on observed treatments.
pub fn factual_rmse(model: &ModelState, test: &Dataset) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::Contract("empty test set".into()));
    }
    let pred = model.predict(&test.x, &test.t)?;
    let mse = pred
        .iter()
        .zip(&test.y)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / test.n() as f64;
    Ok(mse.sqrt())
}

/// Counterfactual error: root of the per-instance squared error integrated
/// over uniformly sampled treatments, approximated by the midpoint rule on
/// `grid_size` points.
pub fn cf_error(
    model: &ModelState,
    test: &Dataset,
    oracle: &ResponseOracle,
    grid_size: usize,
) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::Config("cf_error grid_size must be >= 2".into()));
    }
    let grid: Vec<f64> =
        (0..grid_size).map(|g| (g as f64 + 0.5) / grid_size as f64).collect();
    let pred = model.predict_grid(&test.x, &grid)?;
    let mut total = 0.0;
    for i in 0..test.n() {
        for (g, &t) in grid.iter().enumerate() {
            let diff = oracle.mu(test.x.row(i), t) - pred.get(i, g);
            total += diff * diff;
        }
    }
    Ok((total / (test.n() * grid_size) as f64).sqrt())
}

/// Mean squared error integrated over treatments drawn from the empirical
/// training-treatment distribution (no square root). One seed-controlled
/// draw set is shared by every instance, which keeps the metric invariant
/// to instance order.
pub fn amse(
    model: &ModelState,
    test: &Dataset,
    oracle: &ResponseOracle,
    train_treatments: &[f64],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if train_treatments.is_empty() || draws == 0 {
        return Err(Error::Config("amse needs training treatments and draws >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts: Vec<f64> = (0..draws)
        .map(|_| train_treatments[rng.random_range(0..train_treatments.len())])
        .collect();
    let pred = model.predict_grid(&test.x, &ts)?;
    let mut total = 0.0;
    for i in 0..test.n() {
        let mut acc = 0.0;
        for (r, &t) in ts.iter().enumerate() {
            let diff = oracle.mu(test.x.row(i), t) - pred.get(i, r);
            acc += diff * diff;
        }
        total += acc / draws as f64;
    }
    Ok(total / test.n() as f64)
}

/// Dosage policy error: mean squared gap between the oracle outcome at the
/// true best dose and at the model's recommended dose, both found on the
/// 1/1000 grid (oracle side may use its closed form).
pub fn dpe(model: &ModelState, test: &Dataset, oracle: &ResponseOracle) -> Result<f64> {
    let grid: Vec<f64> = (0..=BEST_DOSE_GRID).map(|g| g as f64 / BEST_DOSE_GRID as f64).collect();
    let pred = model.predict_grid(&test.x, &grid)?;
    let mut total = 0.0;
    for i in 0..test.n() {
        let mut best_g = 0;
        let mut best_v = f64::NEG_INFINITY;
        for g in 0..grid.len() {
            let v = pred.get(i, g);
            if v > best_v {
                best_v = v;
                best_g = g;
            }
        }
        let t_hat = grid[best_g];
        let t_star = oracle.best_dose(test.x.row(i));
        let gap = oracle.mu(test.x.row(i), t_star) - oracle.mu(test.x.row(i), t_hat);
        total += gap * gap;
    }
    Ok(total / test.n() as f64)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rbf_gram(m: &Tensor2) -> Tensor2 {
    let n = m.rows();
    let mut sq = Tensor2::zeros(n, n);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let mut d2 = 0.0;
            for k in 0..m.cols() {
                let d = m.get(i, k) - m.get(j, k);
                d2 += d * d;
            }
            sq.set(i, j, d2);
            sq.set(j, i, d2);
            dists.push(d2.sqrt());
        }
    }
    let mut bw = median(dists);
    if bw <= 0.0 {
        bw = 1.0;
    }
    let denom = 2.0 * bw * bw;
    let mut gram = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram.set(i, j, (-sq.get(i, j) / denom).exp());
        }
    }
    gram
}

fn center(gram: &Tensor2) -> Tensor2 {
    let n = gram.rows();
    let mut row_mean = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += gram.get(i, j);
        }
        row_mean[i] = s / n as f64;
        grand += s;
    }
    grand /= (n * n) as f64;
    let mut out = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, gram.get(i, j) - row_mean[i] - row_mean[j] + grand);
        }
    }
    out
}

/// Biased HSIC estimator: trace(Kc Lc) / (n-1)^2 with RBF kernels and
/// median-heuristic bandwidths (falling back to 1 when the median pairwise
/// distance is zero).
pub fn hsic(a: &Tensor2, b: &Tensor2) -> Result<f64> {
    let n = a.rows();
    if n < 4 {
        return Err(Error::Contract("hsic needs n >= 4".into()));
    }
    if b.rows() != n {
        return Err(Error::Dimension("hsic inputs must share row count".into()));
    }
    let kc = center(&rbf_gram(a));
    let lc = center(&rbf_gram(b));
    let mut trace = 0.0;
    // both centered grams are symmetric, so trace(Kc Lc) = sum_ij Kc.Lc
    for (x, y) in kc.data().iter().zip(lc.data()) {
        trace += x * y;
    }
    Ok(trace / ((n - 1) * (n - 1)) as f64)
}

/// One-sided paired t-test with alternative mean(a) > mean(b). Returns the
/// upper-tail p-value; degenerate zero-variance differences collapse to
/// {0, 0.5, 1} by sign.
pub fn paired_ttest_onesided(errors_a: &[f64], errors_b: &[f64]) -> Result<f64> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::Contract("paired t-test requires equal lengths".into()));
    }
    let n = errors_a.len();
    if n < 2 {
        return Err(Error::Contract("paired t-test requires n >= 2".into()));
    }
    let diffs: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var < 1e-24 {
        return Ok(if mean > 0.0 {
            0.0
        } else if mean < 0.0 {
            1.0
        } else {
            0.5
        });
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(student_t_sf(t, (n - 1) as f64))
}
