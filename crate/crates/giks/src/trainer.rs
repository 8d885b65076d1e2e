//! End-to-end training: factual pretraining, validation-based fixing of the
//! (delta, sigma^2, eps_gp) smoothing parameters, the combined objective
//! with early stopping on validation factual error, and checkpointing.

use crate::augment::{assemble_batch, gi_loss, ks_loss, SamplerKind, TreatmentSampler};
use crate::data::{mean_std, split, Dataset};
use crate::diffnet::{optimizer_step, OptimizerConfig, Tensor2};
use crate::error::{Error, Result};
use crate::gp::{gp_posterior, select_neighbors, GPConfig, KernelKind};
use crate::metrics::factual_rmse;
use crate::model::{ModelConfig, ModelState};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const VAL_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GiksConfig {
    pub learning_rate: f64,
    pub lambda_gi: f64,
    pub lambda_ks: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub epoch_gi_start: usize,
    #[serde(default)]
    pub epoch_gp_start: usize,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    #[serde(default = "default_sigma2_grid")]
    pub sigma2_grid: Vec<f64>,
    #[serde(default = "default_eps_gp_grid")]
    pub eps_gp_grid: Vec<f64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: usize,
}

fn default_batch_size() -> usize {
    128
}
fn default_pretrain_epochs() -> usize {
    100
}
fn default_epochs() -> usize {
    400
}
fn default_delta_grid() -> Vec<f64> {
    vec![0.025, 0.05, 0.075, 0.1]
}
fn default_sigma2_grid() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}
fn default_eps_gp_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_patience() -> usize {
    30
}
fn default_max_neighbors() -> usize {
    200
}

impl GiksConfig {
    /// Per-benchmark default learning rate and loss weights, fixed by
    /// validation exploration per dataset family.
    pub fn for_dataset(kind: crate::data::GeneratorKind, seed: u64) -> Self {
        use crate::data::GeneratorKind::*;
        let (lr, lambda_gi, lambda_ks) = match kind {
            Tcga0 | Tcga1 | Tcga2 => (1e-4, 1e-1, 1e-2),
            IhdpLike => (1e-2, 1e-4, 1e-1),
            NewsLike => (1e-3, 1e-2, 1e-4),
            SyntheticSimple => (1e-3, 1e-1, 2e-1),
        };
        GiksConfig::new(lr, lambda_gi, lambda_ks, seed)
    }

    pub fn new(learning_rate: f64, lambda_gi: f64, lambda_ks: f64, seed: u64) -> Self {
        GiksConfig {
            learning_rate,
            lambda_gi,
            lambda_ks,
            batch_size: default_batch_size(),
            pretrain_epochs: default_pretrain_epochs(),
            epochs: default_epochs(),
            epoch_gi_start: 0,
            epoch_gp_start: 0,
            sampler: SamplerKind::Uniform,
            delta_grid: default_delta_grid(),
            sigma2_grid: default_sigma2_grid(),
            eps_gp_grid: default_eps_gp_grid(),
            patience: default_patience(),
            seed,
            kernel: KernelKind::Cosine,
            max_neighbors: default_max_neighbors(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.lambda_gi < 0.0 || self.lambda_ks < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.delta_grid.is_empty() || self.sigma2_grid.is_empty() || self.eps_gp_grid.is_empty()
        {
            return Err(Error::Config("parameter grids must be non-empty".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        Ok(())
    }

    /// Arm label derived from the active loss weights.
    pub fn label(&self) -> &'static str {
        match (self.lambda_gi > 0.0, self.lambda_ks > 0.0) {
            (false, false) => "factual",
            (true, false) => "gi",
            (false, true) => "ks",
            (true, true) => "giks",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub label: String,
    pub seed: u64,
    pub chosen_delta: f64,
    pub chosen_sigma2: f64,
    pub chosen_eps_gp: f64,
    pub pretrain_loss: Vec<f64>,
    pub factual_loss: Vec<f64>,
    pub gi_loss: Vec<f64>,
    pub ks_loss: Vec<f64>,
    pub total_loss: Vec<f64>,
    pub val_rmse: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub epochs_run: usize,
    pub dropped_far_total: u64,
    pub empty_augment_epochs: u64,
    pub wall_clock_seconds: f64,
}

pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The seed feeding the 30% validation split for a training run.
pub fn split_seed(config_seed: u64) -> u64 {
    derive_seed(config_seed, 505)
}

fn standardized(ds: &Dataset, mean: f64, std: f64) -> Dataset {
    let mut out = ds.clone();
    for y in out.y.iter_mut() {
        *y = (*y - mean) / std;
    }
    out
}

/// Early-stopping tracker: strict improvement resets patience; `observe`
/// returns false once patience is exhausted.
#[derive(Debug)]
pub struct EarlyStopper {
    pub best: f64,
    pub best_epoch: usize,
    patience: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(baseline: f64, patience: usize) -> Self {
        EarlyStopper { best: baseline, best_epoch: 0, patience, since_best: 0 }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best < self.patience
    }
}

/// Mini-batch factual pretraining; returns per-epoch mean losses on the
/// standardized scale.
pub fn pretrain_factual(
    model: &mut ModelState,
    train_std: &Dataset,
    config: &GiksConfig,
) -> Result<Vec<f64>> {
    let opt = OptimizerConfig::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 101));
    let mut losses = Vec::with_capacity(config.pretrain_epochs);
    let mut indices: Vec<usize> = (0..train_std.n()).collect();
    for epoch in 0..config.pretrain_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let batch = train_std.subset(chunk);
            let mut tape = crate::diffnet::Tape::new();
            let pred = model.forward_on_tape(&mut tape, &batch.x, &batch.t)?;
            let diff = tape.sub_const(pred, &Tensor2::column(&batch.y))?;
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            let loss_val = tape.scalar(loss)?;
            if !loss_val.is_finite() {
                return Err(Error::Training {
                    block: "pretrain".into(),
                    message: format!("non-finite loss at pretrain epoch {}", epoch + 1),
                });
            }
            model.params.zero_grads();
            tape.backward(loss, &mut model.params)?;
            optimizer_step(&mut model.params, &opt)?;
            epoch_loss += loss_val;
            batches += 1.0;
        }
        losses.push(epoch_loss / batches);
    }
    Ok(losses)
}

/// Grid scores for the smoothing parameters; +inf marks cells where every
/// validation sample lacked neighbors.
fn score_gp_cell(
    kernel: KernelKind,
    sigma2: f64,
    eps_gp: f64,
    max_neighbors: usize,
    train_std: &Dataset,
    train_embed: &Tensor2,
    val_std: &Dataset,
    val_embed: &Tensor2,
) -> Result<f64> {
    let cfg = GPConfig { kernel, sigma2, eps_gp, max_neighbors };
    let d_e = train_embed.cols();
    let mut weight_sum = 0.0;
    let mut weighted_err = 0.0;
    let mut survivors = 0usize;
    for i in 0..val_std.n() {
        let nb = select_neighbors(&train_std.t, val_std.t[i], eps_gp, max_neighbors);
        if nb.is_empty() {
            continue;
        }
        let mut embeds = Tensor2::zeros(nb.len(), d_e);
        let mut ys = Vec::with_capacity(nb.len());
        for (r, &j) in nb.iter().enumerate() {
            embeds.data_mut()[r * d_e..(r + 1) * d_e].copy_from_slice(train_embed.row(j));
            ys.push(train_std.y[j]);
        }
        let post = gp_posterior(val_embed.row(i), &embeds, &ys, &cfg)?;
        let w = (-post.variance).exp();
        let err = val_std.y[i] - post.mean;
        weighted_err += w * err * err;
        weight_sum += w;
        survivors += 1;
    }
    if survivors == 0 || weight_sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(weighted_err / weight_sum)
}

/// Fix (delta, sigma^2, eps_gp) on the validation split without any
/// training. The (sigma^2, eps_gp) pair minimizes the variance-weighted
/// validation loss of GP posteriors at observed treatments; delta minimizes
/// the error of nearest-embedding Taylor transfer. Ties break toward the
/// smaller parameter values.
pub fn fix_gigp_params(
    model: &ModelState,
    train_std: &Dataset,
    val_std: &Dataset,
    config: &GiksConfig,
) -> Result<(f64, f64, f64)> {
    if val_std.n() == 0 {
        return Err(Error::Config("validation split is empty".into()));
    }
    let train_embed = model.encode(&train_std.x)?;
    let val_embed = model.encode(&val_std.x)?;

    let mut best_pair = None;
    let mut best_score = f64::INFINITY;
    for &sigma2 in &config.sigma2_grid {
        for &eps_gp in &config.eps_gp_grid {
            let score = score_gp_cell(
                config.kernel,
                sigma2,
                eps_gp,
                config.max_neighbors,
                train_std,
                &train_embed,
                val_std,
                &val_embed,
            )?;
            if score < best_score {
                best_score = score;
                best_pair = Some((sigma2, eps_gp));
            }
        }
    }
    let (sigma2, eps_gp) = best_pair.ok_or_else(|| {
        Error::Config("no (sigma2, eps_gp) grid cell had validation neighbors".into())
    })?;

    // Taylor transfer per observed train derivative, computed once.
    let train_dt = model.predict_dt_std(&train_std.x, &train_std.t)?;
    let d_e = train_embed.cols();
    let mut best_delta = None;
    let mut best_dscore = f64::INFINITY;
    for &delta in &config.delta_grid {
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..val_std.n() {
            let mut nearest: Option<(f64, usize)> = None;
            for j in 0..train_std.n() {
                if (train_std.t[j] - val_std.t[i]).abs() > delta {
                    continue;
                }
                let mut dist = 0.0;
                for k in 0..d_e {
                    let diff = val_embed.get(i, k) - train_embed.get(j, k);
                    dist += diff * diff;
                }
                match nearest {
                    Some((best, _)) if dist >= best => {}
                    _ => nearest = Some((dist, j)),
                }
            }
            if let Some((_, j)) = nearest {
                let pseudo = train_std.y[j] - (train_std.t[j] - val_std.t[i]) * train_dt[j];
                let err = pseudo - val_std.y[i];
                total += err * err;
                count += 1;
            }
        }
        let score = if count == 0 { f64::INFINITY } else { total / count as f64 };
        if score < best_dscore {
            best_dscore = score;
            best_delta = Some(delta);
        }
    }
    let delta = best_delta
        .ok_or_else(|| Error::Config("no delta grid cell had validation neighbors".into()))?;
    Ok((delta, sigma2, eps_gp))
}

/// Full training per the staged objective: pretrain on factual loss, fix
/// the smoothing parameters once, then per epoch draw one counterfactual
/// treatment per instance and minimize
/// `L_factual + lambda_gi * L_GI + lambda_ks * L_KS`
/// with early stopping on validation factual RMSE and best-checkpoint
/// restoration.
pub fn train_giks(
    train: &Dataset,
    val: &Dataset,
    config: &GiksConfig,
) -> Result<(ModelState, TrainReport)> {
    let model = ModelState::init(ModelConfig::new(train.d()), config.seed)?;
    train_giks_from(model, train, val, config)
}

pub fn train_giks_from(
    mut model: ModelState,
    train: &Dataset,
    val: &Dataset,
    config: &GiksConfig,
) -> Result<(ModelState, TrainReport)> {
    config.validate()?;
    train.validate()?;
    val.validate()?;
    let started = Instant::now();

    let (y_mean, y_std) = mean_std(&train.y);
    model.set_output_transform(y_mean, y_std);
    let train_std = standardized(train, y_mean, y_std);
    let val_std = standardized(val, y_mean, y_std);

    let pretrain_loss = pretrain_factual(&mut model, &train_std, config)?;
    let (delta, sigma2, eps_gp) = fix_gigp_params(&model, &train_std, &val_std, config)?;
    let gp_cfg = GPConfig {
        kernel: config.kernel,
        sigma2,
        eps_gp,
        max_neighbors: config.max_neighbors,
    };

    let sampler = TreatmentSampler::build(
        config.sampler,
        &train.x,
        &train.t,
        derive_seed(config.seed, 202),
    )?;
    let mut tcf_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 303));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 404));
    let opt = OptimizerConfig::new(config.learning_rate);

    let baseline_val = factual_rmse(&model, val)?;
    let mut stopper = EarlyStopper::new(baseline_val, config.patience);
    let mut best_snapshot = model.params.clone();

    let mut report = TrainReport {
        label: config.label().to_string(),
        seed: config.seed,
        chosen_delta: delta,
        chosen_sigma2: sigma2,
        chosen_eps_gp: eps_gp,
        pretrain_loss,
        factual_loss: Vec::new(),
        gi_loss: Vec::new(),
        ks_loss: Vec::new(),
        total_loss: Vec::new(),
        val_rmse: Vec::new(),
        best_epoch: 0,
        best_val_rmse: baseline_val,
        epochs_run: 0,
        dropped_far_total: 0,
        empty_augment_epochs: 0,
        wall_clock_seconds: 0.0,
    };

    let mut indices: Vec<usize> = (0..train.n()).collect();
    for epoch in 1..=config.epochs {
        let t_cf = sampler.sample_all(&train.x, &mut tcf_rng)?;
        indices.shuffle(&mut shuffle_rng);
        let use_gi = config.lambda_gi > 0.0 && epoch >= config.epoch_gi_start.max(1);
        let use_ks = config.lambda_ks > 0.0 && epoch >= config.epoch_gp_start.max(1);

        let mut sums = [0.0f64; 4]; // factual, gi, ks, total
        let mut batches = 0.0;
        let mut epoch_augmented = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let batch = train_std.subset(chunk);
            let mut tape = crate::diffnet::Tape::new();
            let pred = model.forward_on_tape(&mut tape, &batch.x, &batch.t)?;
            let diff = tape.sub_const(pred, &Tensor2::column(&batch.y))?;
            let sq = tape.square(diff);
            let factual = tape.mean(sq);
            let mut total = factual;
            let mut gi_val = 0.0;
            let mut ks_val = 0.0;

            if use_gi || use_ks {
                // GP queries run against embeddings from the current encoder,
                // refreshed each batch, outside the gradient.
                let embed_snapshot =
                    if use_ks { Some(model.encode(&train_std.x)?) } else { None };
                let aug = assemble_batch(
                    &model,
                    &train_std,
                    embed_snapshot.as_ref(),
                    chunk,
                    &t_cf,
                    delta,
                    &gp_cfg,
                    use_gi,
                    use_ks,
                )?;
                report.dropped_far_total += aug.dropped_far as u64;
                epoch_augmented += aug.near.len() + aug.far.len();
                if use_gi {
                    if let Some(node) = gi_loss(&mut tape, &model, &train_std, &aug.near)? {
                        gi_val = tape.scalar(node)?;
                        let scaled = tape.scale(node, config.lambda_gi);
                        total = tape.add(total, scaled)?;
                    }
                }
                if use_ks {
                    if let Some(node) = ks_loss(&mut tape, &model, &train_std, &aug.far)? {
                        ks_val = tape.scalar(node)?;
                        let scaled = tape.scale(node, config.lambda_ks);
                        total = tape.add(total, scaled)?;
                    }
                }
            }

            let factual_val = tape.scalar(factual)?;
            let total_val = tape.scalar(total)?;
            if !total_val.is_finite() {
                return Err(Error::Training {
                    block: "epoch".into(),
                    message: format!("non-finite loss at epoch {epoch}"),
                });
            }
            model.params.zero_grads();
            tape.backward(total, &mut model.params)?;
            optimizer_step(&mut model.params, &opt)?;

            sums[0] += factual_val;
            sums[1] += gi_val;
            sums[2] += ks_val;
            sums[3] += total_val;
            batches += 1.0;
        }

        if (use_gi || use_ks) && epoch_augmented == 0 {
            report.empty_augment_epochs += 1;
        }
        report.factual_loss.push(sums[0] / batches);
        report.gi_loss.push(sums[1] / batches);
        report.ks_loss.push(sums[2] / batches);
        report.total_loss.push(sums[3] / batches);

        let val_now = factual_rmse(&model, val)?;
        report.val_rmse.push(val_now);
        report.epochs_run = epoch;
        let improved_to = val_now < stopper.best;
        let keep_going = stopper.observe(epoch, val_now);
        if improved_to {
            best_snapshot = model.params.clone();
        }
        if !keep_going {
            break;
        }
    }

    model.params = best_snapshot;
    report.best_epoch = stopper.best_epoch;
    report.best_val_rmse = stopper.best;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Convenience: 30% validation split then train.
pub fn train_with_split(
    dataset: &Dataset,
    config: &GiksConfig,
) -> Result<(ModelState, TrainReport, Dataset, Dataset)> {
    let (train, val) = split(dataset, VAL_FRACTION, split_seed(config.seed))?;
    let (model, report) = train_giks(&train, &val, config)?;
    Ok((model, report, train, val))
}
