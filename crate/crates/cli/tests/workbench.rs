//! The command-line workbench end to end: train a library, solve, optimize,
//! extract, and sweep, all through the public subcommand drivers, plus the
//! binary's failure diagnostics.

use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

use trellis_cli::config::{ProblemKind, RunConfig};
use trellis_cli::run::{self, CliArgs, RESULTS_HEADER};

/// Small cantilever configuration that optimizes in well under a second.
fn desk_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.problem = ProblemKind::Cantilever;
    cfg.cantilever_scale_x = 4;
    cfg.cantilever_scale_y = 2;
    cfg.n_agg = 4;
    cfg.ks_p = 12.0;
    cfg.training_snapshots = 40;
    cfg.output_dir = out.display().to_string();
    cfg
}

fn write_config(dir: &Path, cfg: &RunConfig) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, cfg.canonical_toml()).unwrap();
    path
}

fn args(config: &Path, out: &Path, library: Option<&Path>) -> CliArgs {
    CliArgs {
        config: Some(config.to_path_buf()),
        library: library.map(Path::to_path_buf),
        out: Some(out.to_path_buf()),
        ..CliArgs::default()
    }
}

/// Strips the timing column so result files can be compared across runs.
fn stable_csv(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let mut kept = cols.clone();
            kept.remove(4);
            kept.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn train_solve_optimize_postprocess_pipeline() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = desk_config(&out);
    let cfg_path = write_config(tmp.path(), &cfg);

    run::cmd_train(&args(&cfg_path, &out, None)).unwrap();
    let lib = out.join("library.prsc");
    assert!(lib.exists());
    assert!(out.join("train_report.txt").exists());

    run::cmd_solve(&args(&cfg_path, &out, Some(&lib))).unwrap();
    let report = fs::read_to_string(out.join("error_report.txt")).unwrap();
    assert!(report.contains("\"e_u\""));
    assert!(out.join("solution.vtk").exists());
    assert!(out.join("timing.txt").exists());

    run::cmd_optimize(&args(&cfg_path, &out, Some(&lib))).unwrap();
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with(RESULTS_HEADER));
    assert_eq!(csv.trim().lines().count(), 2);
    for artifact in [
        "density.csv",
        "density.vtk",
        "postprocessed.vtk",
        "postprocessed_layout.txt",
        "summary.txt",
        "provenance.txt",
        "resolved_config.toml",
    ] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("converged = true"));

    // standalone extraction from the emitted density field reproduces the
    // optimize run's design
    let layout_before = fs::read_to_string(out.join("postprocessed_layout.txt")).unwrap();
    run::cmd_postprocess(&args(&cfg_path, &out, None)).unwrap();
    let layout_after = fs::read_to_string(out.join("postprocessed_layout.txt")).unwrap();
    assert_eq!(layout_before, layout_after);
    assert!(out.join("postprocess_report.txt").exists());
}

#[test]
fn untruncated_solve_reports_machine_precision_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = desk_config(&out);
    let cfg_path = write_config(tmp.path(), &cfg);
    // no library: the forward model is the untruncated condensation itself
    run::cmd_solve(&args(&cfg_path, &out, None)).unwrap();
    let report = fs::read_to_string(out.join("error_report.txt")).unwrap();
    let e_u: f64 = report
        .lines()
        .find(|l| l.contains("\"e_u\""))
        .and_then(|l| l.split(':').nth(1))
        .map(|v| v.trim().trim_end_matches(',').parse().unwrap())
        .unwrap();
    assert!(e_u < 1e-6, "untruncated solve drifted: e_u = {e_u}");
}

#[test]
fn sweep_grid_emits_one_row_per_combination() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = desk_config(&out);
    let cfg_path = write_config(tmp.path(), &cfg);
    run::cmd_train(&args(&cfg_path, &out, None)).unwrap();
    let lib = out.join("library.prsc");

    let sweep_out = tmp.path().join("sweep");
    let mut sweep_args = args(&cfg_path, &sweep_out, Some(&lib));
    sweep_args.out = Some(sweep_out.clone());
    run::cmd_sweep(&sweep_args, &["p=10,15".into(), "n_agg=1,5".into()]).unwrap();
    let csv = fs::read_to_string(sweep_out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines.len(), 5, "header plus four rows:\n{csv}");
    assert_eq!(lines[0], RESULTS_HEADER);
    // grid order is fixed regardless of worker scheduling
    let combos: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].to_string(), c[1].to_string())
        })
        .collect();
    assert_eq!(
        combos,
        vec![
            ("1".into(), "10".into()),
            ("5".into(), "10".into()),
            ("1".into(), "15".into()),
            ("5".into(), "15".into()),
        ]
    );
    assert!(sweep_out.join("p10_nagg1/density.csv").exists());

    assert!(run::cmd_sweep(&sweep_args, &["p=10".into()]).is_err());
    assert!(run::cmd_sweep(&sweep_args, &["weird=1".into(), "p=10".into(), "n_agg=1".into()]).is_err());
}

#[test]
fn identical_runs_reproduce_results_except_timing() {
    let tmp = TempDir::new().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let cfg = desk_config(&out_a);
    let cfg_path = write_config(tmp.path(), &cfg);
    run::cmd_train(&args(&cfg_path, &out_a, None)).unwrap();
    let lib = out_a.join("library.prsc");

    run::cmd_optimize(&args(&cfg_path, &out_a, Some(&lib))).unwrap();
    run::cmd_optimize(&args(&cfg_path, &out_b, Some(&lib))).unwrap();
    assert_eq!(
        stable_csv(&out_a.join("results.csv")),
        stable_csv(&out_b.join("results.csv"))
    );
    assert_eq!(
        fs::read_to_string(out_a.join("density.csv")).unwrap(),
        fs::read_to_string(out_b.join("density.csv")).unwrap()
    );
    // a different seed changes the aggregation regions and hence the path
    let mut seeded = args(&cfg_path, &tmp.path().join("c"), Some(&lib));
    seeded.seed = Some(7);
    run::cmd_optimize(&seeded).unwrap();
    assert_ne!(
        stable_csv(&out_a.join("results.csv")),
        stable_csv(&tmp.path().join("c").join("results.csv"))
    );
}

#[test]
fn binary_rejects_broken_invocations_with_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_trellis");

    let out = Command::new(bin)
        .args(["optimize", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--library"));

    let out = Command::new(bin)
        .args(["solve", "--library", "/nonexistent/library.prsc", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("library"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "sigma_max_mpa = -880.0\n").unwrap();
    let out = Command::new(bin)
        .args(["solve", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma_max_mpa"));
}
