use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aschwarz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aschwarz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_matrix(path: &Path, entries: &[(usize, usize, f64)], n: usize) {
    let mut text = format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {}\n", entries.len());
    for (i, j, v) in entries {
        text += &format!("{} {} {v}\n", i + 1, j + 1);
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn help_lists_every_config_key() {
    let out = aschwarz(&["solve", "--help"]);
    let help = stdout(&out);
    for key in aschwarz::driver::CONFIG_KEYS {
        assert!(help.contains(&format!("--{key}")), "--{key} missing from help");
    }
    assert!(help.contains("--config"));
}

#[test]
fn identity_solves_in_one_iteration_without_coarse_space() {
    let out = aschwarz(&["solve", "--gen", "identity:64", "--subdomains", "4", "--tau", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["iterations"], 1);
    assert_eq!(report["converged"], true);
    assert_eq!(report["level_sizes"], serde_json::json!([64]));
    assert_eq!(report["grid_complexity"], 1.0);
}

#[test]
fn tridiagonal_two_level_deflated_converges() {
    let out = aschwarz(&["solve", "--gen", "laplace1d:1024", "--subdomains", "16", "--tau", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["iterations"].as_u64().unwrap() <= 100);
    assert!(report["final_relative_residual"].as_f64().unwrap() <= 1e-8);
    let sizes = report["level_sizes"].as_array().unwrap();
    assert_eq!(sizes.len(), 2);
    assert!(sizes[1].as_u64().unwrap() > 0);
}

#[test]
fn report_and_timings_written_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out.json");
    let history = dir.path().join("history.csv");
    let out = aschwarz(&[
        "solve",
        "--gen",
        "laplace2d:24x24",
        "--subdomains",
        "4",
        "--kappa",
        "dense",
        "--report",
        report.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["n", "nnz", "hierarchy", "level_sizes", "grid_complexity", "iterations", "converged", "kappa"] {
        assert!(json.get(key).is_some(), "{key} missing");
    }
    assert!(json["kappa"]["kappa"].as_f64().unwrap() >= 1.0);
    let timings = dir.path().join("out.timings.json");
    assert!(timings.is_file());
    let rows = std::fs::read_to_string(&history).unwrap().lines().count();
    assert!(rows >= 2);
}

#[test]
fn not_converging_exits_one() {
    let out = aschwarz(&["solve", "--gen", "laplace2d:32x32", "--variant", "ras", "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(aschwarz(&["solve", "--gen", "identity:8", "--variant", "bogus"]).status.code(), Some(2));
    assert_eq!(aschwarz(&["solve", "--matrix", "/nonexistent.mtx"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.mtx");
    write_matrix(&path, &[(0, 0, 2.0), (1, 1, -1.0), (2, 2, 2.0), (1, 0, 0.5)], 3);
    let out = aschwarz(&["solve", "--matrix", path.to_str().unwrap(), "--subdomains", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_on_laplacian_and_reports_precheck_failure() {
    let out = aschwarz(&["verify", "--gen", "laplace2d:32x32", "--subdomains", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert!(text.contains("tau-monotone"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.mtx");
    write_matrix(&path, &[(0, 0, 2.0), (1, 1, -1.0), (2, 2, 2.0)], 3);
    let out = aschwarz(&["verify", "--matrix", path.to_str().unwrap(), "--subdomains", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("FAIL spd-precheck"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# sweep\ngen = laplace1d:200\nsubdomains = 4\nmax-iter = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(aschwarz(&["solve", "--config", c]).status.code(), Some(1));
    let out = aschwarz(&["solve", "--config", c, "--max-iter", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 200);
}

#[test]
fn compare_blanks_one_level_on_heterogeneous_problem() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    let out = aschwarz(&[
        "compare",
        "--gen",
        "laplace2d:64x64:jump=1e6",
        "--subdomains",
        "16",
        "--variants",
        "ras,two-deflated",
        "--taus",
        "2,100",
        "--report",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "ras");
    assert_eq!(rows[0][3], "");
    let (low, high) = (&rows[1], &rows[2]);
    let iters = |r: &Vec<&str>| r[3].parse::<usize>().unwrap();
    let n_c = |r: &Vec<&str>| r[2].parse::<usize>().unwrap();
    assert!(iters(high) <= iters(low));
    assert!(n_c(high) >= n_c(low));
    assert!(stdout(&out).starts_with("| variant |"));
}

#[test]
fn spectrum_marks_selected_eigenvalues() {
    let out = aschwarz(&["spectrum", "--gen", "laplace1d:128", "--subdomains", "4", "--tau", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut selected = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let lambda: f64 = f[2].parse().unwrap();
        if f[3] == "1" {
            selected += 1;
            assert!(lambda > 0.1);
        }
    }
    assert!(selected > 0);
}
