use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use acdnet_cli::main_with_args;
use acdnet_core::acd::AcdModelFile;
use acdnet_core::eval::EvalReport;
use acdnet_core::nets::{ModelKind, TrainedModel};
use acdnet_core::rng::SeededRng;

fn code(args: &[&str]) -> i32 {
    let mut full = vec!["acdnet"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, n: usize, features: bool) -> PathBuf {
    let n = n.to_string();
    let mut args = vec!["simulate", "--omega", "0.1", "--alpha", "0.2", "--beta", "0.7", "--n", &n, "--seed", "3"];
    args.extend(["--output-dir", s(dir)]);
    if features {
        args.push("--features");
    }
    assert_eq!(code(&args), 0);
    dir.join("series.csv")
}

/// Ticks from 09:29:00 with gaps of 1-2000 ms, some sharing timestamps.
fn write_ticks(path: &Path, n: usize) {
    let mut rng = SeededRng::new(5);
    let mut t: u64 = 9 * 3_600_000 + 29 * 60_000;
    let mut out = String::from("timestamp,price,volume,side\n");
    for _ in 0..n {
        if !rng.coin() || rng.coin() {
            t += 1 + rng.index(2000) as u64;
        }
        let side = if rng.coin() { "B" } else { "S" };
        let _ = writeln!(out, "{t},10.0,{},{side}", 100 * (1 + rng.index(20)));
    }
    fs::write(path, out).unwrap();
}

#[test]
fn simulate_is_deterministic_and_counts_rows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = simulate(a.path(), 500, false);
    let fb = simulate(b.path(), 500, false);
    let text = fs::read_to_string(&fa).unwrap();
    assert_eq!(text.lines().count(), 501);
    assert!(text.starts_with("index,duration,mu\n"));
    assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap());
}

#[test]
fn usage_errors_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&["simulate", "--alpha", "0.2", "--beta", "0.7", "--n", "10", "--output-dir", s(&out)]), 1);
    assert_eq!(code(&["simulate", "--omega", "0.1", "--alpha", "0.5", "--beta", "0.6", "--n", "10", "--output-dir", s(&out)]), 1);
    assert_eq!(code(&["fit", "--model", "garch", "--input", "x.csv", "--output-dir", s(&out)]), 1);
    assert_eq!(code(&["fit", "--input", "x.csv", "--output-dir", s(&out)]), 1);
    assert_eq!(code(&["stats", "--input", "x.csv", "--max-duration", "0", "--output-dir", s(&out)]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert!(!out.exists());
}

#[test]
fn unknown_model_lists_valid_names() {
    let err = acdnet_cli::run(["acdnet", "fit", "--model", "garch"]).unwrap_err();
    let msg = err.to_string();
    assert_eq!(err.exit_code(), 1);
    for k in ModelKind::ALL {
        assert!(msg.contains(k.name()), "{msg}");
    }
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&["stats", "--input", s(&missing), "--output-dir", s(dir.path())]), 2);
}

#[test]
fn acd_fit_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), 6000, false);
    let out = s(dir.path());
    assert_eq!(code(&["fit", "--model", "acd", "--input", s(&series), "--output-dir", out]), 0);
    let file = AcdModelFile::load(&dir.path().join("models/acd/acd.toml")).unwrap();
    assert!((file.alpha[0] - 0.2).abs() < 0.1 && (file.beta[0] - 0.7).abs() < 0.15, "{file:?}");
    assert_eq!(code(&["evaluate", "--input", s(&series), "--output-dir", out]), 0);
    let report = EvalReport::load(&dir.path().join("reports/acd.toml")).unwrap();
    assert_eq!(report.n, 1800);
    assert_eq!(report.test_range(), 4200..6000);
    for a in [0.1, 0.05, 0.01] {
        assert!(report.ql(a).unwrap() >= 0.0);
        let c = report.coverage(a).unwrap();
        assert!((c - a).abs() < 0.03, "coverage {c} at {a}");
    }
    let preds = fs::read_to_string(dir.path().join("predictions/acd.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1801);
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), 300, false);
    let out = s(dir.path());
    assert_eq!(code(&["evaluate", "--model", "lstm_acd", "--input", s(&series), "--output-dir", out]), 2);
    assert_eq!(code(&["evaluate", "--input", s(&series), "--output-dir", out]), 2);
    assert!(!dir.path().join("reports").exists());
}

#[test]
fn multivariate_attention_model_from_ticks() {
    let dir = tempfile::tempdir().unwrap();
    let ticks = dir.path().join("ticks.csv");
    write_ticks(&ticks, 1500);
    let out = s(dir.path());
    let fit = [
        "fit", "--model", "attn_lstm_acd_m", "--input", s(&ticks), "--output-dir", out, "--session-open", "09:30",
        "--max-steps", "20", "--eval-every", "10", "--batch-size", "16",
    ];
    assert_eq!(code(&fit), 0);
    let model = TrainedModel::load(&dir.path().join("models/attn_lstm_acd_m")).unwrap();
    assert_eq!(model.params.lstm.input_size(), 4);
    assert_eq!(model.params.attn.as_ref().unwrap().size(), 2);
    assert_eq!(model.spec.timesteps, 50);
    let history = fs::read_to_string(dir.path().join("models/attn_lstm_acd_m/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let att = ["attention", "--model", "attn_lstm_acd_m", "--input", s(&ticks), "--output-dir", out, "--session-open", "09:30"];
    assert_eq!(code(&att), 0);
    let profile = fs::read_to_string(dir.path().join("attention/attn_lstm_acd_m.csv")).unwrap();
    let weights: Vec<f64> = profile.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(weights.len(), 50);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);

    // univariate series cannot feed an (M) model
    let series = simulate(&dir.path().join("sim"), 400, false);
    assert_eq!(code(&["fit", "--model", "lstm_acd_m", "--input", s(&series), "--output-dir", out]), 2);
}

#[test]
fn attention_requires_attention_model() {
    assert_eq!(code(&["attention", "--model", "lstm_acd", "--input", "x.csv"]), 1);
}

#[test]
fn parallel_jobs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), 800, true);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let args = [
            "fit", "--model", "acd,lstm_acd_m,attn_lstm_acd", "--input", s(&series), "--output-dir", s(&out),
            "--max-steps", "30", "--eval-every", "10", "--batch-size", "40", "--jobs", jobs,
        ];
        assert_eq!(code(&args), 0);
        let files: Vec<Vec<u8>> = ["acd/acd.toml", "lstm_acd_m/weights.json", "attn_lstm_acd/model.toml"]
            .iter()
            .map(|f| fs::read(out.join("models").join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn compare_two_models() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), 1200, false);
    let out = s(dir.path());
    let fit = ["fit", "--model", "acd,lstm_acd", "--input", s(&series), "--output-dir", out, "--max-steps", "20", "--eval-every", "10"];
    assert_eq!(code(&fit), 0);
    assert_eq!(code(&["evaluate", "--input", s(&series), "--output-dir", out, "--alpha-levels", "0.1,0.05"]), 0);
    assert_eq!(code(&["compare", "--output-dir", out]), 0);
    let table = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "instrument,model,mae,mae_lagged,difference,ql@0.1,ql@0.05");
    assert!(lines.next().unwrap().starts_with("series,acd,"));
    assert!(lines.next().unwrap().starts_with("series,lstm_acd,"));
    let tallies = fs::read_to_string(dir.path().join("tallies.csv")).unwrap();
    assert_eq!(tallies.lines().count(), 1 + 2 * 3);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("from_config");
    fs::write(
        &cfg,
        format!(
            "seed = 9\noutput_dir = {:?}\n[simulate]\nomega = 0.1\nalpha = [0.2]\nbeta = [0.7]\nn = 200\n",
            s(&out)
        ),
    )
    .unwrap();
    assert_eq!(code(&["simulate", "--config", s(&cfg)]), 0);
    assert_eq!(fs::read_to_string(out.join("series.csv")).unwrap().lines().count(), 201);
    assert_eq!(code(&["simulate", "--config", s(&cfg), "--n", "50"]), 0);
    assert_eq!(fs::read_to_string(out.join("series.csv")).unwrap().lines().count(), 51);

    fs::write(&cfg, "sede = 9\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&cfg)]), 1);
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), 400, false);
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[train.schedule]\nstart_lr = 1e6\nclip_norm = 1e12\n").unwrap();
    let args = [
        "fit", "--config", s(&cfg), "--model", "lstm_acd", "--input", s(&series), "--output-dir", s(dir.path()),
        "--max-steps", "50", "--eval-every", "10", "--batch-size", "20",
    ];
    assert_eq!(code(&args), 3);
    assert!(dir.path().join("models/lstm_acd/weights.json").exists());
}

#[test]
fn stats_from_ticks() {
    let dir = tempfile::tempdir().unwrap();
    let ticks = dir.path().join("ticks.csv");
    write_ticks(&ticks, 400);
    let out = s(dir.path());
    assert_eq!(code(&["stats", "--input", s(&ticks), "--output-dir", out, "--session-open", "09:30", "--max-lag", "10"]), 0);
    let acf = fs::read_to_string(dir.path().join("stats/ticks_acf.csv")).unwrap();
    assert_eq!(acf.lines().count(), 11);
    let summary = fs::read_to_string(dir.path().join("stats/ticks_summary.toml")).unwrap();
    assert!(summary.contains("dropped_premarket = "));
    assert!(!summary.contains("dropped_premarket = 0\n"));
}
