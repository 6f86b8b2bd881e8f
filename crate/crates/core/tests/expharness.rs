mod common;

use std::path::Path;
use std::process::Command;

use kbl_core::expharness::cartography::fit_cartography;
use kbl_core::expharness::config::{parse_config, CovarianceSource, FitConfig, FitModel, Source};
use kbl_core::expharness::fit::{run_fit, run_sweep, training_table};
use kbl_core::expharness::generators::{gen_rf_field, sample_shadowing, seeded};
use kbl_core::expharness::io::{format_matrix_csv, parse_matrix_csv, read_matrix_csv, write_matrix_csv};
use kbl_core::expharness::matrix::fit_completion;
use kbl_core::expharness::traffic::fit_traffic;
use kbl_core::expharness::{
    load_config, metric_recovery_db, run_completion_experiment, run_traffic_experiment, CartographyConfig,
    CompletionExperimentConfig, ExperimentReport, Output, OutputFormat, TrafficExperimentConfig,
};
use kbl_core::kernels::KernelSpec;
use kbl_core::KblError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_completion() -> CompletionExperimentConfig {
    CompletionExperimentConfig {
        m: 40,
        n: 10,
        rank: 3,
        budget: 10,
        missing_rows: 8,
        clusters: 4,
        aux_rows: 200,
        mu_points: 8,
        ..Default::default()
    }
}

fn small_cartography() -> CartographyConfig {
    CartographyConfig { radios: 25, frequencies: 16, grid_side: 8, mu_points: 8, ..Default::default() }
}

fn small_traffic() -> TrafficExperimentConfig {
    TrafficExperimentConfig { slots_per_day: 48, mu_rel: vec![0.01, 0.1, 1.0], rank: 4, ..Default::default() }
}

// ---------------------------------------------------------------- I/O

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let m = common::randn(&mut rng, rows, cols).map(|v| v * 10f64.powi((v * 7.0) as i32));
        let back = parse_matrix_csv(&format_matrix_csv(&m)).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn recovery_db_falls_as_estimate_approaches_truth(seed in any::<u64>(), steps in 3usize..12) {
        let mut rng = common::rng(seed);
        let z = common::randn(&mut rng, 5, 4);
        let mask = DMatrix::from_fn(5, 4, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let mut last = f64::INFINITY;
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            let db = metric_recovery_db(&(&z * t), &z, &mask).unwrap().value();
            prop_assert!(db < last, "t = {}: {} !< {}", t, db, last);
            last = db;
        }
    }
}

#[test]
fn csv_errors_report_the_offending_line() {
    let err = parse_matrix_csv("1,2\n\n3,x\n").unwrap_err();
    match err {
        KblError::Csv { line, ref message } => {
            assert_eq!(line, 3, "{message}");
            assert!(message.contains("column 2"), "{message}");
        }
        other => panic!("expected a CSV error, got {other}"),
    }
    match parse_matrix_csv("1,2\n3\n").unwrap_err() {
        KblError::Csv { line, .. } => assert_eq!(line, 2),
        other => panic!("expected a CSV error, got {other}"),
    }
}

#[test]
fn csv_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 3.0, 1e300, 0.0, -0.0]);
    let path = dir.path().join("m.csv");
    write_matrix_csv(&path, &m).unwrap();
    assert_eq!(read_matrix_csv(&path).unwrap(), m);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let err = load_config(Path::new("/nonexistent/kbl.toml")).unwrap_err();
    assert!(matches!(err, KblError::Config(_)), "{err}");
}

#[test]
fn report_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = Output::new(dir.path(), OutputFormat::Json).unwrap();
    let report = run_completion_experiment(&small_completion(), Some(&out)).unwrap();
    let path = dir.path().join("report.json");
    report.write(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back = ExperimentReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap() + "\n", text);
    for a in &report.artifacts {
        assert!(a.ends_with(".json"), "{a}");
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(a)).unwrap()).unwrap();
        assert!(v.is_array());
    }
}

// ---------------------------------------------------------------- generators

#[test]
fn shadowing_covariance_matches_the_exponential_model() {
    // 500 draws on a line of points 5 m apart; pairs at each probe lag are
    // pooled within a draw. The field is zero-mean by construction, so no
    // sample mean is removed. Probes stay within one decorrelation distance;
    // beyond it 500 draws cannot resolve the covariance to 15%.
    let var = 25.0;
    let delta = 25.0;
    let spacing = 5.0;
    let points: Vec<[f64; 2]> = (0..41).map(|i| [spacing * i as f64, 0.0]).collect();
    let lags = [0usize, 1, 2, 3, 5];
    let mut rng = seeded(2024);
    let mut acc = vec![0.0; lags.len()];
    let mut counts = vec![0usize; lags.len()];
    for _ in 0..500 {
        let x = sample_shadowing(&points, var, delta, &mut rng).unwrap();
        for (k, &lag) in lags.iter().enumerate() {
            for i in 0..points.len() - lag {
                acc[k] += x[i] * x[i + lag];
                counts[k] += 1;
            }
        }
    }
    for (k, &lag) in lags.iter().enumerate() {
        let d = spacing * lag as f64;
        let expected = var * (-d / delta).exp();
        let got = acc[k] / counts[k] as f64;
        let rel = (got - expected).abs() / expected;
        assert!(rel < 0.15, "d = {d}: sample {got:.3} vs model {expected:.3} ({:.1}% off)", 100.0 * rel);
    }
}

#[test]
fn zero_sources_give_noise_and_empty_maps() {
    let cfg = CartographyConfig { sources: Vec::new(), ..small_cartography() };
    let field = gen_rf_field(&cfg).unwrap();
    assert!(field.truth.iter().all(|m| m.iter().all(|&v| v == 0.0)));
    assert!(field.clean.iter().all(|&v| v == 0.0));
    let z = field.data.targets();
    let var = z.norm_squared() / z.len() as f64;
    assert!((var / cfg.noise_var() - 1.0).abs() < 0.2, "noise variance {var}");
}

// ---------------------------------------------------------------- experiments

#[test]
fn noise_free_single_source_band_is_selected() {
    let cfg = CartographyConfig {
        sources: vec![Source { position: [40.0, 60.0], band: 6, power_db: 10.0 }],
        noise_var_db: f64::NEG_INFINITY,
        shadowing_var_db: 0.0,
        ..small_cartography()
    };
    let run = fit_cartography(&cfg).unwrap();
    assert!(run.path.iter().any(|p| p.support.contains(&6)), "{:?}", run.path.iter().map(|p| &p.support).collect::<Vec<_>>());
}

#[test]
fn fully_observed_completion_interpolates() {
    // The sample row covariance has rank at most replicates·n < m, so white
    // noise outside its span cannot be fitted; identity priors can.
    let cfg = CompletionExperimentConfig {
        missing_fraction: 0.0,
        missing_rows: 0,
        covariance: CovarianceSource::Identity,
        ..small_completion()
    };
    let run = fit_completion(&cfg).unwrap();
    assert!(run.evaluated_on_all_entries);
    let best = run.kmc_curve[run.kmc_best].missing_db.value();
    assert!(best <= -40.0, "best {best} dB");
}

#[test]
fn identity_row_prior_leaves_missing_rows_at_zero() {
    let cfg = CompletionExperimentConfig { covariance: CovarianceSource::Identity, ..small_completion() };
    let run = fit_completion(&cfg).unwrap();
    for &r in &run.data.missing_rows {
        assert!(run.kmc_fit.zhat.row(r).iter().all(|&v| v == 0.0), "row {r}");
    }
    for p in &run.kmc_curve {
        assert_eq!(p.rows_db.unwrap().value(), 0.0);
    }
}

#[test]
fn rank_one_traffic_is_predicted_almost_exactly() {
    let cfg = TrafficExperimentConfig { ar_std: 0.0, noise_std: 0.0, phase_spread: 0.0, ..small_traffic() };
    let run = fit_traffic(&cfg).unwrap();
    let ep = run.curve[run.kmc_best].1.value();
    assert!(ep <= 0.05, "e_p = {ep}");
}

#[test]
fn all_zero_traffic_is_flagged_degenerate() {
    let cfg = TrafficExperimentConfig { flow_scale: 0.0, noise_std: 0.0, ..small_traffic() };
    let report = run_traffic_experiment(&cfg, None).unwrap();
    assert_eq!(report.flags["degenerate"], true);
    assert_eq!(report.get("kmc_ep"), Some(0.0));
}

#[test]
fn experiments_are_deterministic() {
    let a = run_completion_experiment(&small_completion(), None).unwrap();
    let b = run_completion_experiment(&small_completion(), None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    let a = run_traffic_experiment(&small_traffic(), None).unwrap();
    let b = run_traffic_experiment(&small_traffic(), None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    let c = run_traffic_experiment(&TrafficExperimentConfig { seed: 2, ..small_traffic() }, None).unwrap();
    assert_ne!(a.metrics, c.metrics);
}

// ---------------------------------------------------------------- fit / sweep

fn write_additive_data(dir: &Path) {
    let mut rng = common::rng(4);
    let inputs: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| common::uniform(&mut rng, -1.0, 1.0)).collect()).collect();
    let z = DVector::from_iterator(inputs.len(), inputs.iter().map(|x| (3.0 * x[0]).sin()));
    write_matrix_csv(&dir.join("train.csv"), &training_table(&inputs, None, &z)).unwrap();
}

fn spam_config() -> FitConfig {
    FitConfig {
        model: FitModel::Spam,
        training: Some("train.csv".into()),
        kernels: vec![KernelSpec::GaussianRbf { width: 0.5 }],
        mu: 0.5,
        ..Default::default()
    }
}

#[test]
fn spam_fit_selects_the_active_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    write_additive_data(dir.path());
    let out = Output::new(dir.path().join("out"), OutputFormat::Csv).unwrap();
    let report = run_fit(&spam_config(), dir.path(), Some(&out)).unwrap();
    assert_eq!(report.flags["converged"], true);
    assert_eq!(report.get("support_size"), Some(1.0));
    let blocks = std::fs::read_to_string(out.path("blocks.csv")).unwrap();
    let norms: Vec<f64> = blocks.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(norms[0] > 0.0 && norms[1] == 0.0 && norms[2] == 0.0, "{norms:?}");
}

#[test]
fn spam_sweep_support_grows_as_mu_falls() {
    let dir = tempfile::tempdir().unwrap();
    write_additive_data(dir.path());
    let out = Output::new(dir.path(), OutputFormat::Csv).unwrap();
    let report = run_sweep(&spam_config(), dir.path(), Some(&out)).unwrap();
    assert_eq!(report.flags["converged"], true);
    let path = read_matrix_csv(&dir.path().join("path.csv"));
    // The header row is not numeric.
    assert!(matches!(path, Err(KblError::Csv { line: 1, .. })));
    let text = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let sizes: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(sizes.len(), 20);
    assert_eq!(*sizes.last().unwrap(), 0.0);
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
}

#[test]
fn kmc_fit_reads_masked_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let z = DMatrix::from_fn(6, 5, |i, j| ((i + 1) * (j + 1)) as f64 / 10.0);
    let w = DMatrix::from_fn(6, 5, |i, j| if (i + 2 * j) % 5 == 0 { 0.0 } else { 1.0 });
    write_matrix_csv(&dir.path().join("z.csv"), &z).unwrap();
    write_matrix_csv(&dir.path().join("w.csv"), &w).unwrap();
    let cfg = FitConfig {
        model: FitModel::Kmc,
        values: Some("z.csv".into()),
        mask: Some("w.csv".into()),
        mu: 1e-2,
        rank: 1,
        ..Default::default()
    };
    let out = Output::new(dir.path().join("o"), OutputFormat::Csv).unwrap();
    let report = run_fit(&cfg, dir.path(), Some(&out)).unwrap();
    assert_eq!(report.flags["converged"], true);
    let zhat = read_matrix_csv(&out.path("zhat.csv")).unwrap();
    // The observed entries pin down the rank-one pattern.
    let err = metric_recovery_db(&zhat, &z, &w.map(|v| 1.0 - v)).unwrap().value();
    assert!(err < -20.0, "{err} dB");
}

#[test]
fn fit_config_requires_its_inputs() {
    let c = parse_config("[fit]\nmodel = \"spam\"\n").unwrap();
    assert!(matches!(run_fit(&c.fit, Path::new("."), None), Err(KblError::Config(_))));
    let c = parse_config("[fit]\nmodel = \"kmc\"\nvalues = \"nope.csv\"\n").unwrap();
    assert!(run_fit(&c.fit, Path::new("/nonexistent"), None).is_err());
}

// ---------------------------------------------------------------- CLI

fn kbl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kbl"))
}

const DEMO: &str = "[completion]\nm = 40\nn = 10\nrank = 3\nbudget = 10\nmissing_rows = 8\nclusters = 4\naux_rows = 200\nmu_points = 6\n";

#[test]
fn cli_complete_writes_report_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("demo.toml");
    std::fs::write(&cfg, DEMO).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = kbl().args(["complete", "--seed", "7", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert_eq!(status.code(), Some(0));
        out
    };
    let a = run("a");
    let b = run("b");
    let report = ExperimentReport::from_json(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    assert!(report.artifacts.iter().any(|f| f == "zhat.csv"));
    for f in report.artifacts.iter().map(String::as_str).chain(["report.json"]) {
        let x = std::fs::read_to_string(a.join(f)).unwrap();
        let y = std::fs::read_to_string(b.join(f)).unwrap();
        if f == "report.json" {
            let strip = |s: &str| s.lines().filter(|l| !l.contains("elapsed_ms")).collect::<Vec<_>>().join("\n");
            assert_eq!(strip(&x), strip(&y));
        } else {
            assert_eq!(x, y, "{f} differs between runs");
        }
    }
}

#[test]
fn cli_prints_the_report_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("demo.toml");
    std::fs::write(&cfg, DEMO).unwrap();
    let output = kbl().arg("complete").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report = ExperimentReport::from_json(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert_eq!(report.experiment, "completion");
    assert!(report.artifacts.is_empty());
}

#[test]
fn cli_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let status = kbl().args(["complete", "--config"]).arg(dir.path().join("missing.toml")).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[completion]\nm = \"many\"\n").unwrap();
    let output = kbl().args(["complete", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));

    assert_eq!(kbl().arg("fit").status().unwrap().code(), Some(2));

    std::fs::write(dir.path().join("z.csv"), "1,2\n3,oops\n").unwrap();
    let cfg = dir.path().join("fit.toml");
    std::fs::write(&cfg, "[fit]\nmodel = \"kmc\"\nvalues = \"z.csv\"\n").unwrap();
    let output = kbl().args(["fit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));
}

#[test]
fn cli_non_convergence_exits_with_three_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let z = DMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    write_matrix_csv(&dir.path().join("z.csv"), &z).unwrap();
    let cfg = dir.path().join("fit.toml");
    std::fs::write(&cfg, "[fit]\nmodel = \"kmc\"\nvalues = \"z.csv\"\nrank = 3\nmu = 0.01\nmax_sweeps = 1\n").unwrap();
    let out = dir.path().join("out");
    let status = kbl().args(["fit", "--format", "json", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(3));
    let report = ExperimentReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.flags["converged"], false);
    assert!(out.join("zhat.json").exists());
}
