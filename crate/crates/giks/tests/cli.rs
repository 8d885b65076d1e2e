//! End-to-end command surface tests: files written, exit codes, determinism,
//! and degraded modes.

use std::path::{Path, PathBuf};
use std::time::Instant;

fn run(args: &[&str]) -> i32 {
    giks::cli::run(args.iter().map(|s| s.to_string()))
}

fn gen_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let data = dir.join(format!("data{seed}"));
    let code = run(&[
        "giks",
        "gen",
        "--kind",
        "synthetic-simple",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    data
}

fn small_config(dir: &Path, data: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "data": data,
        "train": {
            "learning_rate": 1e-2,
            "lambda_gi": 0.05,
            "lambda_ks": 0.1,
            "batch_size": 64,
            "pretrain_epochs": 10,
            "epochs": 5,
            "patience": 3,
            "seed": 0
        },
        "metrics": { "grid_size": 33, "amse_draws": 50 }
    });
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn gen_writes_deterministic_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_dataset(dir.path(), 50, 3);
    let csv1 = std::fs::read(a.join("data.csv")).unwrap();
    let meta1 = std::fs::read(a.join("meta.json")).unwrap();
    assert!(!csv1.is_empty() && !meta1.is_empty());
    // rerun with the same flags overwrites with identical bytes
    let code = run(&[
        "giks", "gen", "--kind", "synthetic-simple", "--n", "50", "--seed", "3", "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(a.join("data.csv")).unwrap(), csv1);
    assert_eq!(std::fs::read(a.join("meta.json")).unwrap(), meta1);
}

#[test]
fn gen_rejects_bad_variants_and_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let code = run(&[
        "giks", "gen", "--kind", "tcga", "--variant", "3", "--n", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let code = run(&[
        "giks", "gen", "--kind", "nope", "--n", "10", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    // clap-level usage error
    assert_eq!(run(&["giks", "gen", "--unknown-flag"]), 2);
}

#[test]
fn train_writes_run_layout_and_labels_factual() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 120, 0);
    let cfg = small_config(dir.path(), &data);
    let out = dir.path().join("run");
    let code = run(&[
        "giks",
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--lambda-gi",
        "0",
        "--lambda-ks",
        "0",
    ]);
    assert_eq!(code, 0);
    for f in ["data.csv", "meta.json", "model.json", "report.json", "metrics.json", "augmented.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["label"], "factual");
}

#[test]
fn train_without_dataset_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &dir.path().join("missing"));
    let code = run(&["giks", "train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn eval_reproduces_recorded_validation_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 120, 1);
    let cfg = small_config(dir.path(), &data);
    let out = dir.path().join("run");
    assert_eq!(
        run(&["giks", "train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let recorded = report["best_val_rmse"].as_f64().unwrap();

    let metrics_path = dir.path().join("metrics_val.json");
    let code = run(&[
        "giks",
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        out.to_str().unwrap(),
        "--split",
        "val",
        "--out",
        metrics_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    let evaluated = metrics["factual_rmse"].as_f64().unwrap();
    assert!(
        (evaluated - recorded).abs() < 1e-9,
        "eval {evaluated} vs recorded {recorded}"
    );
    assert!(metrics["cf_error"].as_f64().is_some());
}

#[test]
fn eval_without_oracle_flags_unavailable_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 120, 2);
    let cfg = small_config(dir.path(), &data);
    let out = dir.path().join("run");
    assert_eq!(
        run(&["giks", "train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    // bare csv without meta sidecar: factual only, oracle metrics flagged
    let bare = dir.path().join("bare.csv");
    std::fs::copy(out.join("data.csv"), &bare).unwrap();
    let metrics_path = dir.path().join("metrics_bare.json");
    let code = run(&[
        "giks",
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        bare.to_str().unwrap(),
        "--out",
        metrics_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert!(metrics["factual_rmse"].as_f64().is_some());
    assert!(metrics.get("cf_error").is_none());
    let unavailable: Vec<String> =
        serde_json::from_value(metrics["unavailable"].clone()).unwrap();
    assert!(unavailable.contains(&"cf_error".to_string()));
}

#[test]
fn eval_writes_adrf_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 80, 3);
    let cfg = small_config(dir.path(), &data);
    let out = dir.path().join("run");
    assert_eq!(
        run(&["giks", "train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let adrf = dir.path().join("adrf.csv");
    let code = run(&[
        "giks",
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        out.to_str().unwrap(),
        "--grid-size",
        "17",
        "--adrf-out",
        adrf.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&adrf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "instance_index,t,y_pred");
    assert_eq!(text.lines().count(), 1 + 80 * 17);
}

#[test]
fn eval_corrupt_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 80, 4);
    let bad_model = dir.path().join("model.json");
    std::fs::write(&bad_model, "{\"format\": \"giks-model-v1\"").unwrap();
    let code = run(&[
        "giks",
        "eval",
        "--model",
        bad_model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 4);
}

#[test]
fn sweep_outputs_rows_per_arm_and_ttest_convention() {
    let dir = tempfile::tempdir().unwrap();
    // identical arms: lambda 0 makes giks and factual the same configuration
    let cfg = serde_json::json!({
        "generator": { "kind": "synthetic-simple", "n": 90, "d": 6, "noise_seed": 0 },
        "train": {
            "learning_rate": 1e-2,
            "lambda_gi": 0.0,
            "lambda_ks": 0.0,
            "batch_size": 64,
            "pretrain_epochs": 6,
            "epochs": 3,
            "patience": 2,
            "seed": 0
        },
        "metrics": { "grid_size": 17, "amse_draws": 20 },
        "seeds": [0, 1, 2]
    });
    let cfg_path = dir.path().join("sweep.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.path().join("sweep_out");
    let code = run(&[
        "giks", "sweep", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["arms"].as_array().unwrap().len(), 2);
    // duplicated configurations give identical per-seed errors -> p = 0.5
    assert_eq!(summary["p_values"]["factual_vs_giks"].as_f64().unwrap(), 0.5);
    assert_eq!(summary["partial"], false);

    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    // header + (3 seed rows + 1 aggregate) per arm
    assert_eq!(csv.lines().count(), 1 + 2 * ( 3 + 1));
    // per-seed run directories hold the fixed layout
    for seed in [0, 1, 2] {
        for arm in ["factual", "giks"] {
            let d = out.join(format!("seed{seed}")).join(arm);
            for f in ["data.csv", "model.json", "report.json", "metrics.json", "augmented.csv"] {
                assert!(d.join(f).exists(), "seed{seed}/{arm}/{f} missing");
            }
        }
    }
}

#[test]
fn sweep_with_ablation_produces_four_arms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "generator": { "kind": "synthetic-simple", "n": 90, "d": 6, "noise_seed": 0 },
        "train": {
            "learning_rate": 1e-2,
            "lambda_gi": 0.05,
            "lambda_ks": 0.1,
            "batch_size": 64,
            "pretrain_epochs": 5,
            "epochs": 2,
            "patience": 2,
            "seed": 0
        },
        "metrics": { "grid_size": 9, "amse_draws": 10 },
        "seeds": [0, 1]
    });
    let cfg_path = dir.path().join("sweep.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    // also exercises the thread cap
    std::env::set_var("GIKS_THREADS", "1");
    let code = run(&[
        "giks",
        "sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--ablate-losses",
        "--out",
        out.to_str().unwrap(),
    ]);
    std::env::remove_var("GIKS_THREADS");
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let arms: Vec<String> = summary["arms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["arm"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(arms, vec!["factual", "gi", "ks", "giks"]);
}

#[test]
fn hsic_command_reports_both_values_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 150, 5);
    let cfg = small_config(dir.path(), &data);
    let out = dir.path().join("run");
    assert_eq!(
        run(&["giks", "train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let code = run(&["giks", "hsic", "--run", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("hsic.json")).unwrap()).unwrap();
    assert!(report["hsic_observed"].as_f64().unwrap() > 0.0);
    assert!(report["hsic_augmented"].as_f64().is_some());
    assert!(report["n_observed"].as_u64().unwrap() > 0);
    assert!(report["n_augmented"].as_u64().unwrap() > report["n_observed"].as_u64().unwrap());
}

#[test]
fn hsic_without_export_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 50, 6);
    assert_eq!(run(&["giks", "hsic", "--run", data.to_str().unwrap()]), 2);
}

#[test]
fn run_config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "train": { "learning_rate": 1e-2, "lambda_gi": 0.0, "lambda_ks": 0.0 },
        "bogus_key": 1
    });
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    assert_eq!(run(&["giks", "train", "--config", cfg_path.to_str().unwrap()]), 2);
}

#[test]
fn divergent_training_aborts_with_exit_3_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 100, 7);
    let cfg = serde_json::json!({
        "data": data,
        "train": {
            "learning_rate": 1e12,
            "lambda_gi": 0.0,
            "lambda_ks": 0.0,
            "batch_size": 32,
            "pretrain_epochs": 50,
            "epochs": 2,
            "patience": 2,
            "seed": 0
        }
    });
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.path().join("run");
    let code = run(&[
        "giks", "train", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["error"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn missing_train_section_defaults_by_dataset_kind() {
    let cfg = giks::cli::RunConfig::from_json_str(
        "{\"generator\": {\"kind\": \"ihdp-like\", \"n\": 100, \"d\": 25, \"noise_seed\": 0}}",
    )
    .unwrap();
    let train = cfg.resolve_train(Some(giks::data::GeneratorKind::IhdpLike)).unwrap();
    assert_eq!(
        (train.learning_rate, train.lambda_gi, train.lambda_ks),
        (1e-2, 1e-4, 1e-1)
    );
    assert!(cfg.resolve_train(None).is_err());
}

#[test]
fn observed_pairs_are_measurably_confounded() {
    // the generator's selection bias must be visible to the diagnostic:
    // observed-pair HSIC above the 95th percentile of permuted treatments
    use giks::diffnet::Tensor2;
    use giks::metrics::hsic;
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 300, 8);
    let loaded = giks::data::load_dir(&data).unwrap();
    let ds = loaded.dataset;
    let t_col = Tensor2::column(&ds.t);
    let observed = hsic(&ds.x, &t_col).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut null = Vec::new();
    let mut perm: Vec<usize> = (0..ds.n()).collect();
    for _ in 0..100 {
        perm.shuffle(&mut rng);
        let shuffled: Vec<f64> = perm.iter().map(|&i| ds.t[i]).collect();
        null.push(hsic(&ds.x, &Tensor2::column(&shuffled)).unwrap());
    }
    null.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = null[95];
    assert!(observed > p95, "observed {observed} <= permutation 95th pct {p95}");
}

#[test]
fn desk_scale_training_completes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(dir.path(), 700, 0);
    let cfg = serde_json::json!({
        "data": data,
        "train": {
            "learning_rate": 1e-3,
            "lambda_gi": 0.05,
            "lambda_ks": 0.2,
            "pretrain_epochs": 100,
            "epochs": 150,
            "patience": 15,
            "sigma2_grid": [0.05, 0.1, 0.5],
            "delta_grid": [0.025],
            "seed": 0
        }
    });
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.path().join("run");
    let started = Instant::now();
    let code = run(&[
        "giks", "train", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(code, 0);
    assert!(secs < 300.0, "700-point training took {secs:.0}s, budget 5 minutes");
}
