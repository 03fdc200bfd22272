use std::path::{Path, PathBuf};
use std::process::Command;

use hopf_hj::batch::{reference_cost, reference_problem, reference_slopes, ReferenceCost};
use hopf_hj::hopf_solver::{solve, AdmmConfig};
use hopf_hj_cli::{grid_file_name, main_with_args, parse_config, CliError};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hopf-hj"))
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn problem(n: usize, kind: ReferenceCost) -> Value {
    let (a, b) = reference_slopes(n);
    json!({ "a": a, "b": b, "cost": reference_cost(n, kind).unwrap() })
}

fn exit_code(args: &[&str]) -> i32 {
    let mut argv = vec!["hopf-hj"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

#[test]
fn single_point_prints_value_and_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let x = vec![0.5, -1.0, 2.0, 0.0];
    let cfg = json!({ "problem": problem(4, ReferenceCost::Quadratic), "query": { "type": "single_point", "x": x, "t": 0.3 } });
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = bin().arg("--config").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let want = solve(&x, 0.3, &reference_problem(4, ReferenceCost::Quadratic).unwrap(), &AdmmConfig::default()).unwrap();
    assert_eq!(report["value"].as_f64().unwrap(), want.value);
    assert_eq!(report["p_star"].as_array().unwrap().len(), 4);
    assert!(report["iterations"].as_u64().is_some());
}

#[test]
fn grid_writes_one_file_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("out/surface.csv");
    let cfg = json!({
        "problem": problem(10, ReferenceCost::Quadratic),
        "query": { "type": "grid", "axes": [0, 1], "ranges": [[-4.0, 4.0], [-4.0, 4.0]], "times": [0.0, 0.125, 0.25, 0.5] },
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    let code = exit_code(&["--config", path.to_str().unwrap(), "--out", base.to_str().unwrap(), "--quiet"]);
    assert_eq!(code, 0);
    for k in 0..4 {
        let file = grid_file_name(&base, k);
        assert!(file.ends_with(format!("surface_t{k}.csv")));
        let text = std::fs::read_to_string(&file).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,t,value"));
        assert_eq!(lines.count(), 101 * 101);
    }
}

#[test]
fn minplus_grid_has_a_branch_column() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("mp.csv");
    let cfg = json!({
        "problem": problem(10, ReferenceCost::MinOfQuadratics),
        "query": { "type": "grid", "axes": [0, 1], "ranges": [[-4.0, 4.0], [-4.0, 4.0]], "counts": [5, 7], "times": [0.1] },
        "output_path": base,
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(exit_code(&["--config", path.to_str().unwrap(), "--quiet"]), 0);
    let text = std::fs::read_to_string(dir.path().join("mp_t0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,t,value,branch"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 35);
    assert!(rows.iter().all(|r| matches!(r.rsplit(',').next(), Some("0" | "1" | "2"))));
}

#[test]
fn grid_output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "problem": problem(10, ReferenceCost::EllipsoidNorm),
        "query": { "type": "grid", "axes": [0, 2], "ranges": [[-4.0, 4.0], [-2.0, 3.0]], "counts": [21, 17], "times": [0.25] },
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "3", "1"].iter().enumerate() {
        let base = dir.path().join(format!("run{k}.csv"));
        let code =
            exit_code(&["--config", path.to_str().unwrap(), "--out", base.to_str().unwrap(), "--threads", threads, "--quiet"]);
        assert_eq!(code, 0);
        outputs.push(std::fs::read(grid_file_name(&base, 0)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn trajectory_csv_ends_at_the_query_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let x = [1.5, -2.0, 0.25];
    let cfg = json!({
        "problem": problem(3, ReferenceCost::ShiftedL1Squared),
        "query": { "type": "trajectory", "x": x, "t": 0.5, "samples": 11 },
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    assert_eq!(exit_code(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]), 0);
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,gamma1,gamma2,gamma3");
    assert_eq!(lines.len(), 12);
    let last: Vec<f64> = lines[11].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 0.5);
    for (got, want) in last[1..].iter().zip(x) {
        assert!((got - want).abs() <= 1e-12);
    }
}

#[test]
fn benchmark_prints_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "query": { "type": "benchmark", "dims": [2, 4, 8], "points": 200, "mode": "fixed_iteration" }, "seed": 3 });
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = bin().arg("--config").arg(&path).arg("--quiet").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,points,mean_ns,median_ns");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("8,200,"));
}

#[test]
fn verify_core1d_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &json!({ "query": { "type": "verify", "suite": "core1d" } }));
    let out = bin().arg("--config").arg(&path).arg("--seed").arg("17").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("PASS core1d.")));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    assert_eq!(exit_code(&["--config", broken.to_str().unwrap()]), 1);

    let unknown = write_config(dir.path(), "u.json", &json!({ "query": { "type": "verify", "suite": "all" }, "sede": 1 }));
    assert_eq!(exit_code(&["--config", unknown.to_str().unwrap()]), 1);

    let no_problem = write_config(dir.path(), "p.json", &json!({ "query": { "type": "single_point", "x": [0.0], "t": 1.0 } }));
    assert_eq!(exit_code(&["--config", no_problem.to_str().unwrap()]), 1);

    let bad_counts = write_config(
        dir.path(),
        "g.json",
        &json!({
            "problem": problem(2, ReferenceCost::Quadratic),
            "query": { "type": "grid", "axes": [0, 1], "ranges": [[0.0, 1.0], [0.0, 1.0]], "counts": [1, 5], "times": [0.1] },
            "output_path": dir.path().join("g.csv"),
        }),
    );
    assert_eq!(exit_code(&["--config", bad_counts.to_str().unwrap()]), 1);

    let ok = write_config(dir.path(), "v.json", &json!({ "query": { "type": "verify", "suite": "prox1d" } }));
    assert_eq!(exit_code(&["--config", ok.to_str().unwrap(), "--threads", "0"]), 1);
    assert_eq!(exit_code(&["--bogus"]), 1);
    assert_eq!(exit_code(&["--help"]), 0);
}

#[test]
fn nonconvergence_fails_unless_downgraded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json!({
        "problem": problem(4, ReferenceCost::EllipsoidNorm),
        "query": { "type": "single_point", "x": [1.0, -2.0, 0.5, 3.0], "t": 0.4 },
        "admm": { "lambda": 1.0, "eps": 1e-14, "max_iter": 2 },
    });
    let strict = write_config(dir.path(), "s.json", &cfg);
    let out = bin().arg("--config").arg(&strict).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    cfg["on_nonconvergence"] = json!("warn");
    let lenient = write_config(dir.path(), "w.json", &cfg);
    let out = bin().arg("--config").arg(&lenient).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn io_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&["--config", dir.path().join("missing.json").to_str().unwrap()]), 3);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let path = write_config(dir.path(), "c.json", &json!({ "query": { "type": "verify", "suite": "core1d" } }));
    let out = blocker.join("nested/out.txt");
    assert_eq!(exit_code(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]), 3);
}

#[test]
fn error_kinds_map_to_exit_codes() {
    assert_eq!(CliError::Config(String::new()).exit_code(), 1);
    assert_eq!(CliError::NotConverged(String::new()).exit_code(), 2);
    assert_eq!(CliError::Verification(String::new()).exit_code(), 2);
    let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
    assert_eq!(CliError::Io { path: "x".into(), source: io }.exit_code(), 3);
}

#[test]
fn config_round_trips_and_applies_defaults() {
    let cfg = parse_config(r#"{ "query": { "type": "benchmark", "dims": [4] } }"#).unwrap();
    let back = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, back);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.admm.max_iter, 10_000);
    let json = serde_json::to_value(&cfg).unwrap();
    assert_eq!(json["query"]["points"], 102_400);
    assert_eq!(json["query"]["mode"], "tolerance");
}
