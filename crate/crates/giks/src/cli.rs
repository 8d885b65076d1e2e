//! Experiment orchestration: dataset generation, training runs, metric
//! evaluation, multi-seed sweeps with the staged-loss ablation, and the
//! treatment-confounding HSIC diagnostic.
//!
//! Exit codes: 0 success, 2 usage/validation, 3 training abort, 4 artifact
//! corruption.

use crate::augment::{export_pairs, parse_pairs_csv, pairs_to_csv, PairSource, TreatmentSampler};
use crate::data::{
    generate, load_dir, save_dir, split_indices, Dataset, GeneratorKind, GeneratorSpec,
    ResponseOracle,
};
use crate::diffnet::Tensor2;
use crate::error::{Error, Result};
use crate::gp::GPConfig;
use crate::metrics::{
    amse, cf_error, dpe, factual_rmse, hsic, paired_ttest_onesided, MetricsReport,
    DEFAULT_AMSE_DRAWS, DEFAULT_CF_GRID,
};
use crate::model::ModelState;
use crate::trainer::{
    derive_seed, split_seed, train_giks, GiksConfig, TrainReport, VAL_FRACTION,
};
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// JSON experiment configuration; flags override scalar fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory (or bare CSV) consumed by `train`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Generator used by `sweep` to regenerate per-seed datasets.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    /// Omitted: learning rate and loss weights default per dataset kind.
    #[serde(default)]
    pub train: Option<GiksConfig>,
    #[serde(default)]
    pub metrics: MetricsOptions,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        if let Some(t) = &cfg.train {
            t.validate()?;
        }
        if let Some(g) = &cfg.generator {
            g.validate()?;
        }
        cfg.metrics.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The explicit training config, or the per-dataset-kind defaults.
    pub fn resolve_train(&self, kind: Option<GeneratorKind>) -> Result<GiksConfig> {
        match (&self.train, kind) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(kind)) => Ok(GiksConfig::for_dataset(kind, 0)),
            (None, None) => Err(Error::Config(
                "no `train` section and the dataset kind is unknown (no metadata)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsOptions {
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_amse_draws")]
    pub amse_draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_size() -> usize {
    DEFAULT_CF_GRID
}
fn default_amse_draws() -> usize {
    DEFAULT_AMSE_DRAWS
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions { grid_size: DEFAULT_CF_GRID, amse_draws: DEFAULT_AMSE_DRAWS, seed: 0 }
    }
}

impl MetricsOptions {
    fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config("metrics.grid_size must be >= 2".into()));
        }
        if self.amse_draws == 0 {
            return Err(Error::Config("metrics.amse_draws must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "giks", version, about = "Continuous treatment effect estimation with counterfactual augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic benchmark dataset (data.csv + meta.json).
    Gen(GenArgs),
    /// Train a model from a JSON config; writes model.json and report.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset; writes metrics.json.
    Eval(EvalArgs),
    /// Multi-seed factual-vs-augmented sweep with paired t-tests.
    Sweep(SweepArgs),
    /// Treatment-confounding diagnostic on a completed run directory.
    Hsic(HsicArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// synthetic-simple | ihdp-like | news-like | tcga
    #[arg(long)]
    kind: String,
    /// TCGA response variant (0, 1 or 2).
    #[arg(long)]
    variant: Option<u8>,
    #[arg(long)]
    n: usize,
    /// Covariate dimension; defaults to the kind's natural size.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TCGA dosage selection bias.
    #[arg(long)]
    dosage_bias: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory override.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory override (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_gi: Option<f64>,
    #[arg(long)]
    lambda_ks: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics output path (defaults to metrics.json beside the model).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate on the full dataset or on the run's train/val side.
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long, default_value_t = DEFAULT_CF_GRID)]
    grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_AMSE_DRAWS)]
    amse_draws: usize,
    /// Also write per-instance dose-response curves on the grid.
    #[arg(long)]
    adrf_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seed list override.
    #[arg(long)]
    seeds: Option<String>,
    /// Also run the gi-only and ks-only single-loss arms.
    #[arg(long, default_value_t = false)]
    ablate_losses: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HsicArgs {
    /// Run directory holding data.csv and augmented.csv.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Training { .. } | Error::Numerical(_) => 3,
        Error::Integrity(_) | Error::Parse { .. } => 4,
        _ => 2,
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Hsic(a) => cmd_hsic(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn parse_kind(kind: &str, variant: Option<u8>) -> Result<GeneratorKind> {
    match (kind, variant) {
        ("synthetic-simple", None) => Ok(GeneratorKind::SyntheticSimple),
        ("ihdp-like", None) => Ok(GeneratorKind::IhdpLike),
        ("news-like", None) => Ok(GeneratorKind::NewsLike),
        ("tcga", v) => match v.unwrap_or(0) {
            0 => Ok(GeneratorKind::Tcga0),
            1 => Ok(GeneratorKind::Tcga1),
            2 => Ok(GeneratorKind::Tcga2),
            other => Err(Error::Config(format!("tcga variant must be 0..=2, got {other}"))),
        },
        (k, Some(_)) => Err(Error::Config(format!("--variant only applies to tcga, not {k}"))),
        (k, None) => Err(Error::Config(format!("unknown generator kind `{k}`"))),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let kind = parse_kind(&args.kind, args.variant)?;
    let mut spec = GeneratorSpec::new(kind, args.n, args.seed);
    if let Some(d) = args.d {
        spec.d = d;
    }
    if let Some(b) = args.dosage_bias {
        if kind.tcga_variant().is_none() {
            return Err(Error::Config("--dosage-bias only applies to tcga".into()));
        }
        spec.dosage_bias = b;
    }
    let (ds, oracle, stats) = generate(&spec)?;
    save_dir(&args.out, &ds, &spec, &oracle, &stats)?;
    println!(
        "generated {} n={} d={} seed={} -> {}",
        kind.as_str(),
        ds.n(),
        ds.d(),
        args.seed,
        args.out.display()
    );
    Ok(())
}

/// Everything one training run produces on disk.
struct RunArtifacts {
    report: TrainReport,
    metrics: MetricsReport,
}

fn evaluate_model(
    model: &ModelState,
    eval_set: &Dataset,
    oracle: Option<&ResponseOracle>,
    train_treatments: &[f64],
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        factual_rmse: factual_rmse(model, eval_set)?,
        ..Default::default()
    };
    match oracle {
        Some(oracle) => {
            report.cf_error = Some(cf_error(model, eval_set, oracle, opts.grid_size)?);
            report.amse = Some(amse(
                model,
                eval_set,
                oracle,
                train_treatments,
                opts.amse_draws,
                derive_seed(opts.seed, 707),
            )?);
            report.dpe = Some(dpe(model, eval_set, oracle)?);
        }
        None => {
            report.unavailable =
                vec!["cf_error".into(), "amse".into(), "dpe".into()];
        }
    }
    Ok(report)
}

/// Train on a 30% validation split, write the fixed run-directory layout
/// (model.json, report.json, metrics.json, augmented.csv), and evaluate
/// oracle metrics on the validation side.
fn run_training(
    dataset: &Dataset,
    oracle: Option<&ResponseOracle>,
    cfg: &GiksConfig,
    opts: &MetricsOptions,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let (train_idx, val_idx) = split_indices(dataset.n(), VAL_FRACTION, split_seed(cfg.seed))?;
    let train = dataset.subset(&train_idx);
    let val = dataset.subset(&val_idx);

    let trained = train_giks(&train, &val, cfg);
    let (model, report) = match trained {
        Ok(ok) => ok,
        Err(e) => {
            // leave diagnostics behind for exit-code-3 aborts
            let diag = serde_json::json!({
                "error": e.to_string(),
                "label": cfg.label(),
                "seed": cfg.seed,
            });
            let _ = std::fs::write(out_dir.join("report.json"), diag.to_string());
            return Err(e);
        }
    };

    model.save(&out_dir.join("model.json"))?;
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;

    // one augmentation pass with the final model, indices mapped back into
    // the unsplit dataset
    let gp_cfg = GPConfig {
        kernel: cfg.kernel,
        sigma2: report.chosen_sigma2,
        eps_gp: report.chosen_eps_gp,
        max_neighbors: cfg.max_neighbors,
    };
    let sampler = TreatmentSampler::build(cfg.sampler, &train.x, &train.t, derive_seed(cfg.seed, 202))?;
    let mut export_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 606));
    let t_cf = sampler.sample_all(&train.x, &mut export_rng)?;
    let (pairs, _dropped) =
        export_pairs(&model, &train, &t_cf, report.chosen_delta, &gp_cfg, Some(&train_idx))?;
    std::fs::write(out_dir.join("augmented.csv"), pairs_to_csv(&pairs))?;

    let metrics = evaluate_model(&model, &val, oracle, &train.t, opts)?;
    std::fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    Ok(RunArtifacts { report, metrics })
}

fn copy_dataset_files(from: &Path, to: &Path) -> Result<()> {
    if from == to {
        return Ok(());
    }
    let src_csv = if from.is_dir() { from.join("data.csv") } else { from.to_path_buf() };
    std::fs::copy(&src_csv, to.join("data.csv"))?;
    let src_meta = if from.is_dir() { from.join("meta.json") } else { PathBuf::new() };
    if src_meta.exists() {
        std::fs::copy(&src_meta, to.join("meta.json"))?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let data_path = args
        .data
        .or(cfg.data.clone())
        .ok_or_else(|| Error::Config("no dataset path (config `data` or --data)".into()))?;
    let loaded = load_dir(&data_path)?;
    let mut train_cfg = cfg.resolve_train(loaded.meta.as_ref().map(|m| m.generator.kind))?;
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    if let Some(l) = args.lambda_gi {
        train_cfg.lambda_gi = l;
    }
    if let Some(l) = args.lambda_ks {
        train_cfg.lambda_ks = l;
    }
    train_cfg.validate()?;
    let out_dir = args.out.or(cfg.out_dir).unwrap_or_else(|| data_path.clone());
    std::fs::create_dir_all(&out_dir)?;
    copy_dataset_files(&data_path, &out_dir)?;
    let arts =
        run_training(&loaded.dataset, loaded.oracle.as_ref(), &train_cfg, &cfg.metrics, &out_dir)?;
    println!(
        "trained label={} best_epoch={} best_val_rmse={:.6} -> {}",
        arts.report.label,
        arts.report.best_epoch,
        arts.report.best_val_rmse,
        out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = ModelState::load(&args.model)?;
    let loaded = load_dir(&args.data)?;
    let (train_idx, val_idx) =
        split_indices(loaded.dataset.n(), VAL_FRACTION, split_seed(model.rng_seed))?;
    let (eval_set, train_like) = match args.split.as_str() {
        "all" => (loaded.dataset.clone(), loaded.dataset.clone()),
        "val" => (loaded.dataset.subset(&val_idx), loaded.dataset.subset(&train_idx)),
        "train" => (loaded.dataset.subset(&train_idx), loaded.dataset.subset(&train_idx)),
        other => return Err(Error::Config(format!("--split must be all|train|val, got {other}"))),
    };
    let opts = MetricsOptions { grid_size: args.grid_size, amse_draws: args.amse_draws, seed: 0 };
    opts.validate()?;
    let report =
        evaluate_model(&model, &eval_set, loaded.oracle.as_ref(), &train_like.t, &opts)?;
    let out = args
        .out
        .unwrap_or_else(|| args.model.parent().unwrap_or(Path::new(".")).join("metrics.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;

    if let Some(adrf_path) = args.adrf_out {
        let grid: Vec<f64> =
            (0..args.grid_size).map(|g| (g as f64 + 0.5) / args.grid_size as f64).collect();
        let curves = model.predict_grid(&eval_set.x, &grid)?;
        let mut csv = String::from("instance_index,t,y_pred\n");
        for i in 0..eval_set.n() {
            for (g, &t) in grid.iter().enumerate() {
                let _ = writeln!(csv, "{i},{t:.16e},{:.16e}", curves.get(i, g));
            }
        }
        std::fs::write(&adrf_path, csv)?;
    }
    println!("metrics -> {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ArmSummary {
    arm: String,
    seeds: Vec<u64>,
    cf_errors: Vec<f64>,
    factual_rmse: Vec<f64>,
    mean_cf_error: f64,
    std_cf_error: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    arms: Vec<ArmSummary>,
    p_values: BTreeMap<String, f64>,
    partial: bool,
    failures: Vec<String>,
}

fn sweep_arms(base: &GiksConfig, ablate: bool) -> Vec<(String, GiksConfig)> {
    let mut arms = Vec::new();
    let mut factual = base.clone();
    factual.lambda_gi = 0.0;
    factual.lambda_ks = 0.0;
    arms.push(("factual".to_string(), factual));
    if ablate {
        let mut gi = base.clone();
        gi.lambda_ks = 0.0;
        arms.push(("gi".to_string(), gi));
        let mut ks = base.clone();
        ks.lambda_gi = 0.0;
        arms.push(("ks".to_string(), ks));
    }
    arms.push(("giks".to_string(), base.clone()));
    arms
}

fn sweep_threads(n_seeds: usize) -> usize {
    let cap = std::env::var("GIKS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let hw = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1);
    cap.unwrap_or(hw).min(n_seeds.max(1))
}

struct SeedOutcome {
    seed: u64,
    results: Vec<(String, Result<RunArtifacts>)>,
}

fn run_sweep_seed(
    seed: u64,
    generator: &GeneratorSpec,
    arms: &[(String, GiksConfig)],
    opts: &MetricsOptions,
    out_root: &Path,
) -> Result<SeedOutcome> {
    let mut spec = generator.clone();
    spec.noise_seed = seed;
    let (dataset, oracle, stats) = generate(&spec)?;
    let seed_dir = out_root.join(format!("seed{seed}"));
    std::fs::create_dir_all(&seed_dir)?;
    let mut results = Vec::new();
    for (name, arm_cfg) in arms {
        let mut cfg = arm_cfg.clone();
        cfg.seed = seed;
        let arm_dir = seed_dir.join(name);
        let outcome = std::fs::create_dir_all(&arm_dir)
            .map_err(Error::from)
            .and_then(|_| save_dir(&arm_dir, &dataset, &spec, &oracle, &stats))
            .and_then(|_| run_training(&dataset, Some(&oracle), &cfg, opts, &arm_dir));
        results.push((name.clone(), outcome));
    }
    Ok(SeedOutcome { seed, results })
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let generator = cfg
        .generator
        .clone()
        .ok_or_else(|| Error::Config("sweep requires a `generator` in the config".into()))?;
    let seeds: Vec<u64> = match &args.seeds {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad seed `{s}` in --seeds")))
            })
            .collect::<Result<_>>()?,
        None => cfg.seeds.clone(),
    };
    if seeds.len() < 2 {
        return Err(Error::Config("sweep needs at least 2 seeds".into()));
    }
    let out_root = args
        .out
        .or(cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("sweep requires an output directory".into()))?;
    std::fs::create_dir_all(&out_root)?;
    let base_train = cfg.resolve_train(Some(generator.kind))?;
    let arms = sweep_arms(&base_train, args.ablate_losses);

    let threads = sweep_threads(seeds.len());
    let mut outcomes: Vec<Option<SeedOutcome>> = Vec::new();
    outcomes.resize_with(seeds.len(), || None);
    for wave in seeds.chunks(threads) {
        let wave_out: Vec<(usize, Result<SeedOutcome>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&seed| {
                    let pos = seeds.iter().position(|&s| s == seed).unwrap();
                    let arms = &arms;
                    let generator = &generator;
                    let opts = &cfg.metrics;
                    let out_root = out_root.as_path();
                    scope.spawn(move || {
                        (pos, run_sweep_seed(seed, generator, arms, opts, out_root))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for (pos, res) in wave_out {
            outcomes[pos] = Some(res?);
        }
    }

    let mut failures = Vec::new();
    let mut per_arm: BTreeMap<String, Vec<(u64, f64, f64)>> = BTreeMap::new();
    for outcome in outcomes.into_iter().flatten() {
        for (arm, res) in outcome.results {
            match res {
                Ok(arts) => {
                    let cf = arts.metrics.cf_error.unwrap_or(f64::NAN);
                    per_arm.entry(arm).or_default().push((
                        outcome.seed,
                        cf,
                        arts.metrics.factual_rmse,
                    ));
                }
                Err(e) => failures.push(format!("seed {} arm {}: {e}", outcome.seed, arm)),
            }
        }
    }

    let mut summaries = Vec::new();
    for (name, _) in &arms {
        let rows = per_arm.get(name).cloned().unwrap_or_default();
        let cf: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let n = cf.len().max(1) as f64;
        let mean = cf.iter().sum::<f64>() / n;
        let var = cf.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        summaries.push(ArmSummary {
            arm: name.clone(),
            seeds: rows.iter().map(|r| r.0).collect(),
            cf_errors: cf,
            factual_rmse: rows.iter().map(|r| r.2).collect(),
            mean_cf_error: mean,
            std_cf_error: var.sqrt(),
        });
    }

    // one-sided paired t-tests with the full method as the base
    let mut p_values = BTreeMap::new();
    let giks = summaries.iter().find(|s| s.arm == "giks").cloned();
    if let Some(giks) = giks {
        for s in &summaries {
            if s.arm == "giks" || s.cf_errors.len() != giks.cf_errors.len() {
                continue;
            }
            let p = paired_ttest_onesided(&s.cf_errors, &giks.cf_errors)?;
            p_values.insert(format!("{}_vs_giks", s.arm), p);
        }
    }

    let summary = SweepSummary { arms: summaries, p_values, partial: !failures.is_empty(), failures };
    std::fs::write(out_root.join("sweep.json"), serde_json::to_string_pretty(&summary)?)?;

    let mut csv = String::from("arm,seed,cf_error,cf_error_std,factual_rmse\n");
    for s in &summary.arms {
        for ((seed, cf), f) in s.seeds.iter().zip(&s.cf_errors).zip(&s.factual_rmse) {
            let _ = writeln!(csv, "{},{seed},{cf:.9e},,{f:.9e}", s.arm);
        }
        let mean_f = s.factual_rmse.iter().sum::<f64>() / s.factual_rmse.len().max(1) as f64;
        let _ = writeln!(
            csv,
            "{},aggregate,{:.9e},{:.9e},{mean_f:.9e}",
            s.arm, s.mean_cf_error, s.std_cf_error
        );
    }
    std::fs::write(out_root.join("sweep.csv"), csv)?;

    for s in &summary.arms {
        println!(
            "{}: cf_error {:.4} +- {:.4} over {} seeds",
            s.arm,
            s.mean_cf_error,
            s.std_cf_error,
            s.cf_errors.len()
        );
    }
    for (name, p) in &summary.p_values {
        println!("paired one-sided p [{name}]: {p:.4}");
    }
    if summary.partial {
        println!("warning: sweep partial, {} failures", summary.failures.len());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct HsicReport {
    hsic_observed: f64,
    hsic_augmented: f64,
    reduction_ratio: f64,
    n_observed: usize,
    n_augmented: usize,
}

fn cmd_hsic(args: HsicArgs) -> Result<()> {
    let aug_path = args.run.join("augmented.csv");
    if !aug_path.exists() {
        return Err(Error::Config(format!("{} has no augmented.csv", args.run.display())));
    }
    let loaded = load_dir(&args.run)?;
    let pairs = parse_pairs_csv(&std::fs::read_to_string(&aug_path)?)?;
    let d = loaded.dataset.d();
    let n = loaded.dataset.n();

    let observed: Vec<&_> =
        pairs.iter().filter(|p| p.source == PairSource::Observed).collect();
    if observed.is_empty() {
        return Err(Error::Integrity("augmented.csv holds no observed rows".into()));
    }
    let build = |subset: &[&crate::augment::AugmentedPair]| -> Result<(Tensor2, Tensor2)> {
        let mut x = Tensor2::zeros(subset.len(), d);
        let mut t = Tensor2::zeros(subset.len(), 1);
        for (r, p) in subset.iter().enumerate() {
            if p.instance_index >= n {
                return Err(Error::Integrity(format!(
                    "augmented pair references row {} of a {}-row dataset",
                    p.instance_index, n
                )));
            }
            x.data_mut()[r * d..(r + 1) * d]
                .copy_from_slice(loaded.dataset.x.row(p.instance_index));
            t.set(r, 0, p.t_value);
        }
        Ok((x, t))
    };
    let (xo, to) = build(&observed)?;
    let all: Vec<&_> = pairs.iter().collect();
    let (xa, ta) = build(&all)?;

    let hsic_observed = hsic(&xo, &to)?;
    let hsic_augmented = hsic(&xa, &ta)?;
    let report = HsicReport {
        hsic_observed,
        hsic_augmented,
        reduction_ratio: hsic_augmented / hsic_observed,
        n_observed: observed.len(),
        n_augmented: all.len(),
    };
    let out = args.out.unwrap_or_else(|| args.run.join("hsic.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "hsic observed {:.6} -> augmented {:.6} (ratio {:.3})",
        report.hsic_observed, report.hsic_augmented, report.reduction_ratio
    );
    Ok(())
}
