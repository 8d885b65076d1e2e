//! Counterfactual treatment sampling and pseudo-outcome construction: the
//! three P(T) samplers, the Taylor pseudo-target for near treatments,
//! near/far routing by delta, the batch losses, and the augmented-pairs
//! export consumed by the HSIC diagnostic.

use crate::data::Dataset;
use crate::diffnet::{forward_affine, optimizer_step, NodeId, OptimizerConfig, ParamSet, Tape, Tensor2};
use crate::error::{Error, Result};
use crate::gp::{gp_posterior, ks_weights, select_neighbors, GPConfig, GPPosterior};
use crate::model::ModelState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const PROPENSITY_BINS: usize = 10;
const PROPENSITY_CLIP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    #[default]
    Uniform,
    Marginal,
    InversePropensity,
}

pub fn treatment_bin(t: f64) -> usize {
    ((t * PROPENSITY_BINS as f64) as usize).min(PROPENSITY_BINS - 1)
}

/// One-hidden-layer softmax classifier over 10 treatment bins.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    params: ParamSet,
    input_dim: usize,
}

impl PropensityModel {
    /// Bin probabilities per row; rows sum to 1.
    pub fn predict_proba(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.input_dim {
            return Err(Error::Dimension("propensity input width mismatch".into()));
        }
        let blocks = self.params.blocks();
        let mut h = forward_affine(x, &blocks[0], &blocks[1])?;
        h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = forward_affine(&h, &blocks[2], &blocks[3])?;
        for r in 0..logits.rows() {
            let row = &mut logits.data_mut()[r * PROPENSITY_BINS..(r + 1) * PROPENSITY_BINS];
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - hi).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Ok(logits)
    }

    pub fn predict_bin(&self, x: &Tensor2) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows())
            .map(|i| {
                let row = p.row(i);
                let mut best = 0;
                for (b, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = b;
                    }
                }
                best
            })
            .collect())
    }
}

/// Fit the treatment-bin classifier: width-50 hidden layer, cross-entropy,
/// a fixed 100 epochs of full-batch updates.
pub fn fit_propensity(x: &Tensor2, treatments: &[f64], seed: u64) -> Result<PropensityModel> {
    let n = x.rows();
    if n < PROPENSITY_BINS {
        return Err(Error::Contract(format!("propensity fit needs n >= {PROPENSITY_BINS}")));
    }
    let d = x.cols();
    let hidden = 50usize;
    let labels: Vec<usize> = treatments.iter().map(|&t| treatment_bin(t)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut params = ParamSet::new();
    let bound1 = 1.0 / (d as f64).sqrt();
    let w1: Vec<f64> = (0..d * hidden).map(|_| rng.random_range(-bound1..bound1)).collect();
    let b1: Vec<f64> = (0..hidden).map(|_| rng.random_range(-bound1..bound1)).collect();
    let bound2 = 1.0 / (hidden as f64).sqrt();
    let w2: Vec<f64> =
        (0..hidden * PROPENSITY_BINS).map(|_| rng.random_range(-bound2..bound2)).collect();
    let b2: Vec<f64> = (0..PROPENSITY_BINS).map(|_| rng.random_range(-bound2..bound2)).collect();
    params.add("prop.w1", Tensor2::from_vec(d, hidden, w1)?);
    params.add("prop.b1", Tensor2::from_vec(1, hidden, b1)?);
    params.add("prop.w2", Tensor2::from_vec(hidden, PROPENSITY_BINS, w2)?);
    params.add("prop.b2", Tensor2::from_vec(1, PROPENSITY_BINS, b2)?);

    let mut opt = OptimizerConfig::new(0.01);
    opt.weight_decay = 0.0;

    for _ in 0..100 {
        // forward
        let blocks = params.blocks();
        let mut a1 = forward_affine(x, &blocks[0], &blocks[1])?;
        let pre1 = a1.clone();
        a1.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let logits = forward_affine(&a1, &blocks[2], &blocks[3])?;
        // softmax rows
        let mut probs = logits;
        for r in 0..n {
            let row = &mut probs.data_mut()[r * PROPENSITY_BINS..(r + 1) * PROPENSITY_BINS];
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - hi).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        // cross-entropy gradient wrt logits: (p - onehot)/n
        let mut dlogits = probs;
        for (r, &lab) in labels.iter().enumerate() {
            let row = &mut dlogits.data_mut()[r * PROPENSITY_BINS..(r + 1) * PROPENSITY_BINS];
            row[lab] -= 1.0;
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        // backprop by hand through the two layers
        let dw2 = a1.t_matmul(&dlogits)?;
        let mut db2 = Tensor2::zeros(1, PROPENSITY_BINS);
        for r in 0..n {
            for c in 0..PROPENSITY_BINS {
                db2.data_mut()[c] += dlogits.get(r, c);
            }
        }
        let w2v = &params.blocks()[2].value;
        let mut dh = dlogits.matmul_t(w2v)?;
        for (g, &pre) in dh.data_mut().iter_mut().zip(pre1.data()) {
            if pre <= 0.0 {
                *g = 0.0;
            }
        }
        let dw1 = x.t_matmul(&dh)?;
        let mut db1 = Tensor2::zeros(1, hidden);
        for r in 0..n {
            for c in 0..hidden {
                db1.data_mut()[c] += dh.get(r, c);
            }
        }
        params.zero_grads();
        params.blocks_mut()[0].grad.add_assign(&dw1)?;
        params.blocks_mut()[1].grad.add_assign(&db1)?;
        params.blocks_mut()[2].grad.add_assign(&dw2)?;
        params.blocks_mut()[3].grad.add_assign(&db2)?;
        optimizer_step(&mut params, &opt)?;
    }

    Ok(PropensityModel { params, input_dim: d })
}

/// Counterfactual treatment sampler; inverse-propensity fits its classifier
/// once at build time.
pub enum TreatmentSampler {
    Uniform,
    Marginal { observed: Vec<f64> },
    InversePropensity { model: PropensityModel },
}

impl TreatmentSampler {
    pub fn build(kind: SamplerKind, x: &Tensor2, treatments: &[f64], seed: u64) -> Result<Self> {
        Ok(match kind {
            SamplerKind::Uniform => TreatmentSampler::Uniform,
            SamplerKind::Marginal => TreatmentSampler::Marginal { observed: treatments.to_vec() },
            SamplerKind::InversePropensity => {
                TreatmentSampler::InversePropensity { model: fit_propensity(x, treatments, seed)? }
            }
        })
    }

    /// One counterfactual treatment per training instance.
    pub fn sample_all(&self, x: &Tensor2, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let n = x.rows();
        match self {
            TreatmentSampler::Uniform => Ok((0..n).map(|_| rng.random_range(0.0..1.0)).collect()),
            TreatmentSampler::Marginal { observed } => {
                Ok((0..n).map(|_| observed[rng.random_range(0..observed.len())]).collect())
            }
            TreatmentSampler::InversePropensity { model } => {
                let probs = model.predict_proba(x)?;
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let row = probs.row(i);
                    let weights: Vec<f64> =
                        row.iter().map(|&p| 1.0 / p.clamp(PROPENSITY_CLIP, 1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.random_range(0.0..total);
                    let mut bin = PROPENSITY_BINS - 1;
                    for (b, &w) in weights.iter().enumerate() {
                        if u < w {
                            bin = b;
                            break;
                        }
                        u -= w;
                    }
                    let lo = bin as f64 / PROPENSITY_BINS as f64;
                    let hi = (bin + 1) as f64 / PROPENSITY_BINS as f64;
                    out.push(rng.random_range(lo..hi));
                }
                Ok(out)
            }
        }
    }
}

/// One counterfactual treatment per instance, drawn from P(T).
pub fn sample_tcf(
    kind: SamplerKind,
    x: &Tensor2,
    treatments: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    TreatmentSampler::build(kind, x, treatments, 0)?.sample_all(x, rng)
}

/// First-order Taylor pseudo-outcome around the observed treatment.
pub fn gi_pseudo_outcome(y: f64, t: f64, t_cf: f64, dmu_dt: f64) -> f64 {
    y - (t - t_cf) * dmu_dt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Near,
    Far,
}

/// Near iff |t_cf - t| < delta; exact equality routes Far.
pub fn route(t: f64, t_cf: f64, delta: f64) -> Route {
    if (t_cf - t).abs() < delta {
        Route::Near
    } else {
        Route::Far
    }
}

#[derive(Debug, Clone)]
pub struct NearItem {
    pub index: usize,
    pub t_cf: f64,
    pub pseudo_y: f64,
}

#[derive(Debug, Clone)]
pub struct FarItem {
    pub index: usize,
    pub t_cf: f64,
    pub posterior: GPPosterior,
}

/// Counterfactual augmentation of one mini-batch: every index routed
/// exactly once, far members without neighbors dropped (counted).
#[derive(Debug, Clone, Default)]
pub struct AugmentBatch {
    pub near: Vec<NearItem>,
    pub far: Vec<FarItem>,
    pub dropped_far: usize,
}

/// Build the near/far pseudo-outcome sets for `batch_indices`. All GP
/// quantities are computed against a read-only snapshot of the full training
/// embeddings and standardized outcomes; nothing here participates in the
/// gradient. `need_near`/`need_far` let the caller skip the inactive route's
/// work; `train_embed` is only required when far members are materialized.
pub fn assemble_batch(
    model: &ModelState,
    train: &Dataset,
    train_embed: Option<&Tensor2>,
    batch_indices: &[usize],
    t_cf: &[f64],
    delta: f64,
    gp_cfg: &GPConfig,
    need_near: bool,
    need_far: bool,
) -> Result<AugmentBatch> {
    let mut out = AugmentBatch::default();
    let mut near_idx = Vec::new();
    let mut far_idx = Vec::new();
    for &i in batch_indices {
        match route(train.t[i], t_cf[i], delta) {
            Route::Near => near_idx.push(i),
            Route::Far => far_idx.push(i),
        }
    }

    if need_near && !near_idx.is_empty() {
        let d = train.d();
        let mut x = Tensor2::zeros(near_idx.len(), d);
        let mut ts = Vec::with_capacity(near_idx.len());
        for (r, &i) in near_idx.iter().enumerate() {
            x.data_mut()[r * d..(r + 1) * d].copy_from_slice(train.x.row(i));
            ts.push(train.t[i]);
        }
        let dts = model.predict_dt_std(&x, &ts)?;
        for (r, &i) in near_idx.iter().enumerate() {
            out.near.push(NearItem {
                index: i,
                t_cf: t_cf[i],
                pseudo_y: gi_pseudo_outcome(train.y[i], train.t[i], t_cf[i], dts[r]),
            });
        }
    }

    if need_far && !far_idx.is_empty() {
        let embed = train_embed
            .ok_or_else(|| Error::Contract("far routing requires an embedding snapshot".into()))?;
        let d_e = embed.cols();
        for &i in &far_idx {
            let nb = select_neighbors(&train.t, t_cf[i], gp_cfg.eps_gp, gp_cfg.max_neighbors);
            if nb.is_empty() {
                out.dropped_far += 1;
                continue;
            }
            let mut embeds = Tensor2::zeros(nb.len(), d_e);
            let mut ys = Vec::with_capacity(nb.len());
            for (r, &j) in nb.iter().enumerate() {
                embeds.data_mut()[r * d_e..(r + 1) * d_e].copy_from_slice(embed.row(j));
                ys.push(train.y[j]);
            }
            let post = gp_posterior(embed.row(i), &embeds, &ys, gp_cfg)?;
            out.far.push(FarItem { index: i, t_cf: t_cf[i], posterior: post });
        }
    }
    Ok(out)
}

/// Mean squared error between counterfactual predictions and frozen Taylor
/// pseudo-targets; returns None for an empty near set (zero contribution).
pub fn gi_loss(
    tape: &mut Tape,
    model: &ModelState,
    train: &Dataset,
    near: &[NearItem],
) -> Result<Option<NodeId>> {
    if near.is_empty() {
        return Ok(None);
    }
    let d = train.d();
    let mut x = Tensor2::zeros(near.len(), d);
    let mut ts = Vec::with_capacity(near.len());
    let mut targets = Vec::with_capacity(near.len());
    for (r, item) in near.iter().enumerate() {
        x.data_mut()[r * d..(r + 1) * d].copy_from_slice(train.x.row(item.index));
        ts.push(item.t_cf);
        targets.push(item.pseudo_y);
    }
    let pred = model.forward_on_tape(tape, &x, &ts)?;
    let diff = tape.sub_const(pred, &Tensor2::column(&targets))?;
    let sq = tape.square(diff);
    Ok(Some(tape.mean(sq)))
}

/// Variance-weighted squared error against frozen GP posterior means; the
/// softmax confidence weights are normalized over the surviving far members
/// of the batch. Returns None when no members survived.
pub fn ks_loss(
    tape: &mut Tape,
    model: &ModelState,
    train: &Dataset,
    far: &[FarItem],
) -> Result<Option<NodeId>> {
    if far.is_empty() {
        return Ok(None);
    }
    let d = train.d();
    let mut x = Tensor2::zeros(far.len(), d);
    let mut ts = Vec::with_capacity(far.len());
    let mut means = Vec::with_capacity(far.len());
    let variances: Vec<f64> = far.iter().map(|f| f.posterior.variance).collect();
    for (r, item) in far.iter().enumerate() {
        x.data_mut()[r * d..(r + 1) * d].copy_from_slice(train.x.row(item.index));
        ts.push(item.t_cf);
        means.push(item.posterior.mean);
    }
    let weights = ks_weights(&variances);
    let pred = model.forward_on_tape(tape, &x, &ts)?;
    let diff = tape.sub_const(pred, &Tensor2::column(&means))?;
    let sq = tape.square(diff);
    let weighted = tape.mul_const(sq, &Tensor2::column(&weights))?;
    Ok(Some(tape.sum(weighted)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    Observed,
    Gi,
    Ks,
}

impl PairSource {
    fn as_str(&self) -> &'static str {
        match self {
            PairSource::Observed => "observed",
            PairSource::Gi => "gi",
            PairSource::Ks => "ks",
        }
    }
}

/// One row of the augmented-pairs export.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub instance_index: usize,
    pub source: PairSource,
    pub t_value: f64,
    pub pseudo_y: f64,
    pub variance: Option<f64>,
}

pub fn pairs_to_csv(pairs: &[AugmentedPair]) -> String {
    let mut out = String::from("instance_index,t_source,t_value,pseudo_y,variance\n");
    for p in pairs {
        let var = p.variance.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.16e},{:.16e},{}",
            p.instance_index,
            p.source.as_str(),
            p.t_value,
            p.pseudo_y,
            var
        );
    }
    out
}

/// Parse the augmented-pairs CSV; errors carry 1-based line numbers and the
/// parser never panics on malformed input.
pub fn parse_pairs_csv(text: &str) -> Result<Vec<AugmentedPair>> {
    let mut lines = text.lines().enumerate();
    let (_, header) =
        lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    if header.trim() != "instance_index,t_source,t_value,pseudo_y,variance" {
        return Err(Error::Parse { line: 1, message: "unexpected header".into() });
    }
    let mut pairs = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse { line, message: format!("expected 5 fields, found {}", fields.len()) });
        }
        let instance_index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, message: "bad instance_index".into() })?;
        let source = match fields[1].trim() {
            "observed" => PairSource::Observed,
            "gi" => PairSource::Gi,
            "ks" => PairSource::Ks,
            other => {
                return Err(Error::Parse { line, message: format!("bad t_source `{other}`") })
            }
        };
        let t_value: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, message: "bad t_value".into() })?;
        if !(0.0..=1.0).contains(&t_value) {
            return Err(Error::Parse { line, message: "t_value outside [0,1]".into() });
        }
        let pseudo_y: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, message: "bad pseudo_y".into() })?;
        if !pseudo_y.is_finite() {
            return Err(Error::Parse { line, message: "pseudo_y not finite".into() });
        }
        let variance = match fields[4].trim() {
            "" => None,
            v => Some(
                v.parse::<f64>()
                    .map_err(|_| Error::Parse { line, message: "bad variance".into() })?,
            ),
        };
        pairs.push(AugmentedPair { instance_index, source, t_value, pseudo_y, variance });
    }
    Ok(pairs)
}

/// Observed rows plus one augmentation pass over the full training set with
/// the supplied model: near treatments get Taylor pseudo-outcomes, far ones
/// get GP posteriors, far members without neighbors are dropped. Outputs
/// are on the original outcome scale. `index_map`, when given, translates
/// local row numbers to the exported instance indices (e.g. back into the
/// unsplit dataset).
pub fn export_pairs(
    model: &ModelState,
    train: &Dataset,
    t_cf: &[f64],
    delta: f64,
    gp_cfg: &GPConfig,
    index_map: Option<&[usize]>,
) -> Result<(Vec<AugmentedPair>, usize)> {
    if let Some(map) = index_map {
        if map.len() != train.n() {
            return Err(Error::Contract("index map length != rows".into()));
        }
    }
    let to_public = |i: usize| index_map.map_or(i, |m| m[i]);
    let mut std_train = train.clone();
    for y in std_train.y.iter_mut() {
        *y = (*y - model.y_mean) / model.y_std;
    }
    let embed = model.encode(&train.x)?;
    let all: Vec<usize> = (0..train.n()).collect();
    let batch =
        assemble_batch(model, &std_train, Some(&embed), &all, t_cf, delta, gp_cfg, true, true)?;
    let mut pairs: Vec<AugmentedPair> = (0..train.n())
        .map(|i| AugmentedPair {
            instance_index: to_public(i),
            source: PairSource::Observed,
            t_value: train.t[i],
            pseudo_y: train.y[i],
            variance: None,
        })
        .collect();
    for item in &batch.near {
        pairs.push(AugmentedPair {
            instance_index: to_public(item.index),
            source: PairSource::Gi,
            t_value: item.t_cf,
            pseudo_y: model.y_mean + model.y_std * item.pseudo_y,
            variance: None,
        });
    }
    for item in &batch.far {
        pairs.push(AugmentedPair {
            instance_index: to_public(item.index),
            source: PairSource::Ks,
            t_value: item.t_cf,
            pseudo_y: model.y_mean + model.y_std * item.posterior.mean,
            variance: Some(model.y_std * model.y_std * item.posterior.variance),
        });
    }
    Ok((pairs, batch.dropped_far))
}
