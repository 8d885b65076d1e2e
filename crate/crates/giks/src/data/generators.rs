use super::{Dataset, GeneratorKind, GeneratorSpec, OracleParams, ResponseOracle};
use crate::diffnet::Tensor2;
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

const MAX_ROW_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct GenStats {
    pub resampled_rows: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn beta_draw(rng: &mut ChaCha8Rng, alpha: f64, beta: f64) -> Result<f64> {
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::Numerical(format!("beta({alpha},{beta}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Generate a dataset plus its noise-free oracle from a spec.
pub fn generate(spec: &GeneratorSpec) -> Result<(Dataset, ResponseOracle, GenStats)> {
    spec.validate()?;
    match spec.kind {
        GeneratorKind::SyntheticSimple => gen_synthetic_simple(spec),
        GeneratorKind::IhdpLike => gen_ihdp_like(spec),
        GeneratorKind::NewsLike => gen_news_like(spec),
        GeneratorKind::Tcga0 | GeneratorKind::Tcga1 | GeneratorKind::Tcga2 => gen_tcga(spec),
    }
}

/// Deliberately confounded toy benchmark: treatment follows (x0+x1)/2 plus
/// noise, response mixes a sharp sinusoid in t with linear covariate terms.
fn gen_synthetic_simple(spec: &GeneratorSpec) -> Result<(Dataset, ResponseOracle, GenStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let n = spec.n;
    let mut x = Tensor2::zeros(n, 6);
    for i in 0..n {
        for j in 0..6 {
            x.set(i, j, rng.random_range(0.0..1.0));
        }
    }
    let t_noise = Normal::new(0.0, 0.05).unwrap();
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let m = (x.get(i, 0) + x.get(i, 1)) / 2.0;
            let raw = m * m + t_noise.sample(&mut rng);
            raw.clamp(0.0, 1.0)
        })
        .collect();
    let oracle = ResponseOracle { params: OracleParams::SyntheticSimple };
    let y_noise = Normal::new(0.0, 0.1).unwrap();
    let y: Vec<f64> =
        (0..n).map(|i| oracle.mu(x.row(i), t[i]) + y_noise.sample(&mut rng)).collect();
    let ds = Dataset { x, t, y, name: spec.kind.as_str().into(), seed: spec.noise_seed };
    ds.validate()?;
    Ok((ds, oracle, GenStats::default()))
}

/// Covariates mimic the IHDP layout: five continuous U(0,1) columns at the
/// original continuous indices, Bernoulli(0.5) elsewhere. Treatment and
/// response use the IHDP semi-synthetic construction, with the c1/c2
/// centering constants taken as dataset means.
fn gen_ihdp_like(spec: &GeneratorSpec) -> Result<(Dataset, ResponseOracle, GenStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let n = spec.n;
    let d = 25;
    // 1-indexed {1,2,3,5,6} continuous -> 0-indexed {0,1,2,4,5}
    let s_con = [0usize, 1, 2, 4, 5];
    let s_dis1 = [3usize, 6, 7, 8, 9, 10, 11, 12, 13, 14];
    let s_dis2 = [15usize, 16, 17, 18, 19, 20, 21, 22, 23, 24];
    let mut x = Tensor2::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let v = if s_con.contains(&j) {
                rng.random_range(0.0..1.0)
            } else if rng.random_range(0.0..1.0) < 0.5 {
                1.0
            } else {
                0.0
            };
            x.set(i, j, v);
        }
    }
    let avg = |row: &[f64], idx: &[usize]| idx.iter().map(|&j| row[j]).sum::<f64>() / idx.len() as f64;
    let c1 = (0..n).map(|i| avg(x.row(i), &s_dis1)).sum::<f64>() / n as f64;
    let c2 = (0..n).map(|i| avg(x.row(i), &s_dis2)).sum::<f64>() / n as f64;

    let noise = Normal::new(0.0, 0.25).unwrap();
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let r = x.row(i);
            let max356 = r[2].max(r[4]).max(r[5]);
            let min356 = r[2].min(r[4]).min(r[5]);
            let dis2_term = s_dis2.iter().map(|&j| r[j] - c2).sum::<f64>() / s_dis2.len() as f64;
            let raw = 2.0 * r[0] / (1.0 + r[1])
                + 2.0 * max356 / (0.2 + min356)
                + 2.0 * (5.0 * dis2_term - 4.0 + noise.sample(&mut rng)).tanh();
            sigmoid(raw)
        })
        .collect();

    let oracle = ResponseOracle { params: OracleParams::IhdpLike { c1, c2 } };
    let y: Vec<f64> = (0..n).map(|i| oracle.mu(x.row(i), t[i]) + noise.sample(&mut rng)).collect();
    let ds = Dataset { x, t, y, name: spec.kind.as_str().into(), seed: spec.noise_seed };
    ds.validate()?;
    Ok((ds, oracle, GenStats::default()))
}

/// Bag-of-words stand-in covariates: sparse positive counts scaled to unit
/// row norm. Rows whose projections degenerate are resampled.
fn gen_news_like(spec: &GeneratorSpec) -> Result<(Dataset, ResponseOracle, GenStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let n = spec.n;
    let d = spec.d;
    let v1 = unit_gaussian_direction(&mut rng, d);
    let v2 = unit_gaussian_direction(&mut rng, d);
    let v3 = unit_gaussian_direction(&mut rng, d);
    let poisson = Poisson::new(2.0).unwrap();

    let mut stats = GenStats::default();
    let mut x = Tensor2::zeros(n, d);
    let mut beta_b = vec![0.0f64; n];
    for i in 0..n {
        let mut tries = 0;
        loop {
            let mut row: Vec<f64> = (0..d)
                .map(|_| {
                    if rng.random_range(0.0..1.0) < 0.8 {
                        0.0
                    } else {
                        poisson.sample(&mut rng) + 1.0
                    }
                })
                .collect();
            let norm = dot(&row, &row).sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
                let p2 = dot(&v2, &row);
                let p3 = dot(&v3, &row);
                let b = (p3 / (2.0 * p2)).abs();
                if p2 != 0.0 && p3 != 0.0 && b.is_finite() && b > 0.0 {
                    x.data_mut()[i * d..(i + 1) * d].copy_from_slice(&row);
                    beta_b[i] = b;
                    break;
                }
            }
            stats.resampled_rows += 1;
            tries += 1;
            if tries > MAX_ROW_RESAMPLES {
                return Err(Error::Spec("news-like row resampling did not converge".into()));
            }
        }
    }

    let t: Vec<f64> =
        (0..n).map(|i| beta_draw(&mut rng, 2.0, beta_b[i])).collect::<Result<_>>()?;

    let oracle = ResponseOracle { params: OracleParams::NewsLike { v1, v2, v3 } };
    // noise enters inside the product term, so it is applied to the
    // treatment-response factor rather than added to mu
    let noise = Normal::new(0.0, 0.5).unwrap();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let (v1, v2, v3) = match &oracle.params {
                OracleParams::NewsLike { v1, v2, v3 } => (v1, v2, v3),
                _ => unreachable!(),
            };
            let r = x.row(i);
            let yc = (dot(v2, r) / dot(v3, r) - 0.3).exp().clamp(-2.0, 2.0);
            2.0 * (yc + 20.0 * dot(v1, r))
                * (4.0 * (t[i] - 0.5) * (t[i] - 0.5)
                    + (std::f64::consts::FRAC_PI_2 * t[i]).sin()
                    + noise.sample(&mut rng))
        })
        .collect();
    let ds = Dataset { x, t, y, name: spec.kind.as_str().into(), seed: spec.noise_seed };
    ds.validate()?;
    Ok((ds, oracle, stats))
}

/// Printed per-variant optimal-dosage formula; drives the Beta selection
/// bias. For variants 1 and 2 this is also the argmax of the response.
pub(crate) fn tcga_dstar(variant: u8, v2x: f64, v3x: f64) -> f64 {
    match variant {
        0 => v2x / (2.0 * v3x),
        1 => v3x / (2.0 * v2x),
        _ => {
            let r = v2x / v3x;
            if r >= 1.0 {
                0.25 * r
            } else {
                1.0
            }
        }
    }
}

pub(crate) fn tcga_t_param(phi: f64, dstar: f64) -> f64 {
    (phi - 1.0) / dstar + 2.0 - phi
}

/// Log-normal expression-like covariates, rows scaled to unit variance.
/// Dosage is Beta-biased toward the variant's optimal value.
fn gen_tcga(spec: &GeneratorSpec) -> Result<(Dataset, ResponseOracle, GenStats)> {
    let variant = spec.kind.tcga_variant().expect("tcga kind");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let n = spec.n;
    let d = spec.d;
    let phi = spec.dosage_bias;
    let v1 = unit_gaussian_direction(&mut rng, d);
    let v2 = unit_gaussian_direction(&mut rng, d);
    let v3 = unit_gaussian_direction(&mut rng, d);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();

    let mut stats = GenStats::default();
    let mut x = Tensor2::zeros(n, d);
    let mut dstar_sampling = vec![0.0f64; n];
    for i in 0..n {
        let mut tries = 0;
        loop {
            let mut row: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng).exp()).collect();
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            if var > 0.0 {
                let s = var.sqrt();
                row.iter_mut().for_each(|v| *v /= s);
            }
            let p2 = dot(&v2, &row);
            let p3 = dot(&v3, &row);
            if p2 != 0.0 && p3 != 0.0 {
                // sampling bias needs d* in (0,1]; the response itself is
                // evaluated with the unclipped formulas
                dstar_sampling[i] = tcga_dstar(variant, p2, p3).clamp(0.01, 1.0);
                x.data_mut()[i * d..(i + 1) * d].copy_from_slice(&row);
                break;
            }
            stats.resampled_rows += 1;
            tries += 1;
            if tries > MAX_ROW_RESAMPLES {
                return Err(Error::Spec("tcga row resampling did not converge".into()));
            }
        }
    }

    let t: Vec<f64> = (0..n)
        .map(|i| beta_draw(&mut rng, phi, tcga_t_param(phi, dstar_sampling[i])))
        .collect::<Result<_>>()?;

    let oracle = ResponseOracle { params: OracleParams::Tcga { variant, v1, v2, v3 } };
    let noise = Normal::new(0.0, 0.2).unwrap();
    let y: Vec<f64> = (0..n).map(|i| oracle.mu(x.row(i), t[i]) + noise.sample(&mut rng)).collect();
    let ds = Dataset { x, t, y, name: spec.kind.as_str().into(), seed: spec.noise_seed };
    ds.validate()?;
    Ok((ds, oracle, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n).sqrt();
        cov / (sa * sb)
    }

    #[test]
    fn synthetic_simple_is_confounded_and_clipped() {
        let spec = GeneratorSpec::new(GeneratorKind::SyntheticSimple, 2000, 0);
        let (ds, _, _) = generate(&spec).unwrap();
        assert!(ds.t.iter().all(|&t| (0.0..=1.0).contains(&t)));
        let x0: Vec<f64> = (0..ds.n()).map(|i| ds.x.get(i, 0)).collect();
        assert!(pearson(&ds.t, &x0) >= 0.3);
    }

    #[test]
    fn synthetic_simple_noise_has_declared_scale() {
        let spec = GeneratorSpec::new(GeneratorKind::SyntheticSimple, 2000, 3);
        let (ds, oracle, _) = generate(&spec).unwrap();
        let resid: Vec<f64> =
            (0..ds.n()).map(|i| ds.y[i] - oracle.mu(ds.x.row(i), ds.t[i])).collect();
        let (m, s) = crate::data::mean_std(&resid);
        assert!(m.abs() <= 3.0 * 0.1 / (2000f64).sqrt());
        assert!((s - 0.1).abs() < 0.02, "std {s}");
    }

    #[test]
    fn ihdp_treatments_strictly_inside_unit_interval() {
        let spec = GeneratorSpec::new(GeneratorKind::IhdpLike, 500, 1);
        let (ds, _, _) = generate(&spec).unwrap();
        assert!(ds.t.iter().all(|&t| t > 0.0 && t < 1.0));
    }

    #[test]
    fn ihdp_regeneration_is_bit_identical() {
        let spec = GeneratorSpec::new(GeneratorKind::IhdpLike, 200, 9);
        let (a, _, _) = generate(&spec).unwrap();
        let (b, _, _) = generate(&spec).unwrap();
        assert_eq!(a.x.data(), b.x.data());
        assert_eq!(a.t, b.t);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn ihdp_noise_recovery() {
        let spec = GeneratorSpec::new(GeneratorKind::IhdpLike, 2000, 5);
        let (ds, oracle, _) = generate(&spec).unwrap();
        let resid: Vec<f64> =
            (0..ds.n()).map(|i| ds.y[i] - oracle.mu(ds.x.row(i), ds.t[i])).collect();
        let (m, s) = crate::data::mean_std(&resid);
        assert!(m.abs() <= 3.0 * 0.25 / (2000f64).sqrt(), "residual mean {m}");
        assert!((s - 0.25).abs() < 0.05, "residual std {s}");
    }

    #[test]
    fn ihdp_wrong_dim_is_spec_error() {
        let mut spec = GeneratorSpec::new(GeneratorKind::IhdpLike, 100, 0);
        spec.d = 10;
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn news_clamp_is_active_for_large_responses() {
        let oracle = ResponseOracle {
            params: OracleParams::NewsLike {
                v1: vec![0.0, 1.0],
                v2: vec![1.0, 0.0],
                v3: vec![0.1, 0.0],
            },
        };
        // ratio = 10 -> exp(9.7) huge -> clamped to 2; with v1.x = 0 the
        // response factor is exactly 2*2
        let x = [1.0, 0.0];
        let t = 0.5;
        let expected = 2.0 * 2.0 * (4.0 * 0.0 + (std::f64::consts::FRAC_PI_2 * t).sin());
        assert!((oracle.mu(&x, t) - expected).abs() < 1e-12);
    }

    #[test]
    fn news_rows_are_unit_norm_and_beta_param_positive() {
        let spec = GeneratorSpec::new(GeneratorKind::NewsLike, 300, 2);
        let (ds, _, _) = generate(&spec).unwrap();
        for i in 0..ds.n() {
            let norm = dot(ds.x.row(i), ds.x.row(i)).sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
        assert!(ds.t.iter().all(|&t| (0.0..=1.0).contains(&t)));
    }

    #[test]
    fn tcga_t_param_matches_formula_at_default_bias() {
        for dstar in [0.01, 0.1, 0.5, 1.0] {
            assert!((tcga_t_param(2.0, dstar) - 1.0 / dstar).abs() < 1e-15);
        }
    }

    #[test]
    fn tcga_dosages_in_unit_interval() {
        for kind in [GeneratorKind::Tcga0, GeneratorKind::Tcga1, GeneratorKind::Tcga2] {
            let spec = GeneratorSpec::new(kind, 300, 4);
            let (ds, _, _) = generate(&spec).unwrap();
            assert!(ds.t.iter().all(|&t| (0.0..=1.0).contains(&t)));
        }
    }

    #[test]
    fn tcga1_closed_form_matches_grid_argmax() {
        let spec = GeneratorSpec::new(GeneratorKind::Tcga1, 100, 11);
        let (ds, oracle, _) = generate(&spec).unwrap();
        for i in 0..ds.n() {
            let closed = oracle.best_dose(ds.x.row(i));
            let grid = oracle.best_dose_grid(ds.x.row(i));
            assert!(
                (closed - grid).abs() <= 1.0 / 1000.0 + 1e-12,
                "row {i}: closed {closed} vs grid {grid}"
            );
        }
    }

    #[test]
    fn tcga2_closed_form_matches_grid_argmax() {
        let spec = GeneratorSpec::new(GeneratorKind::Tcga2, 100, 12);
        let (ds, oracle, _) = generate(&spec).unwrap();
        for i in 0..ds.n() {
            let closed = oracle.best_dose(ds.x.row(i));
            let grid = oracle.best_dose_grid(ds.x.row(i));
            assert!(
                (closed - grid).abs() <= 1.0 / 1000.0 + 1e-12,
                "row {i}: closed {closed} vs grid {grid}"
            );
        }
    }
}
