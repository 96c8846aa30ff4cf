use std::process::{Command, Output};

use serde_json::Value;

fn gpstrat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpstrat"))
        .args(args)
        .env_remove("GPSTRAT_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_stdout(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

fn json_stderr(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("bad json ({e}): {:?}", o.stderr))
}

#[test]
fn no_arguments_prints_usage() {
    let o = gpstrat(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = gpstrat(&["simulate", "--process", "fbm", "--H", "1/6", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gpstrat(&["simulate", "--process", "fbm", "--H", "1/6", "--bogus", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_stderr(&o)["code"], 2);
}

#[test]
fn constants_c1() {
    let o = gpstrat(&["constants", "--process", "bbm", "--K", "1", "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_stdout(&o);
    assert_eq!(v["schema"], 1);
    let c = v["constants"][0]["value"].as_f64().unwrap();
    assert!((c - 0.8985273947044760).abs() < 1e-9, "{c}");
    assert!(v["constants"][0]["tail_bound"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn constants_sfbm_reports_c_h() {
    let o = gpstrat(&["constants", "--process", "sfbm", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "constant,K,value,truncation_m,tail_bound");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "C_h");
    assert!((row[2].parse::<f64>().unwrap() - 0.8985273947044760).abs() < 1e-9);
}

#[test]
fn limitlaw_rejects_supercritical_kernel() {
    let o = gpstrat(&["limitlaw", "--process", "bbm", "--H", "0.9", "--K", "0.9", "--format", "json"]);
    assert_eq!(o.status.code(), Some(3));
    let e = json_stderr(&o);
    assert_eq!(e["code"], 3);
    assert!(e["error"].as_str().unwrap().contains("unsupported regime"));
    assert!(o.stdout.is_empty());
}

#[test]
fn invalid_hurst_is_a_domain_error() {
    let o = gpstrat(&["simulate", "--process", "fbm", "--H", "1.5", "--format", "json"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json_stderr(&o)["code"], 3);
}

#[test]
fn missing_process_is_a_usage_error() {
    let o = gpstrat(&["simulate", "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_stderr(&o)["code"], 2);
}

#[test]
fn simulate_small_grid() {
    let o = gpstrat(&["simulate", "--process", "fbm", "--H", "0.16667", "--n", "8", "--T", "1", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x");
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[1], "0,0");
    let last: Vec<f64> = lines[9].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
}

#[test]
fn csv_floats_round_trip_json_values() {
    let args = ["simulate", "--process", "sfbm", "--h", "1/3", "--n", "16", "--seed", "4"];
    let csv_text = stdout(&gpstrat(&args));
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let v = json_stdout(&gpstrat(&json_args));
    let xs: Vec<f64> = v["x"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let from_csv: Vec<f64> = csv_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(xs, from_csv);
}

#[test]
fn every_subcommand_emits_valid_json() {
    let cases: &[&[&str]] = &[
        &["constants", "--tol", "1e-8"],
        &["audit", "--process", "bbm", "--H", "1/3", "--K", "1/2", "--all", "--res", "16"],
        &["audit", "--process", "fbm", "--H", "1/6", "--condition", "vi", "--n-list", "16,32"],
        &["functionals", "--process", "fbm", "--H", "1/6", "--n", "32", "--paths", "50"],
        &["limitlaw", "--process", "sfbm", "--h", "1/3", "--n", "32", "--paths", "20"],
        &["experiment", "--experiment", "eta_convergence", "--process", "fbm", "--H", "1/6", "--n-list", "16,32"],
        &["simulate", "--process", "ext_bbm", "--H", "1/9", "--K", "1.5", "--n", "16"],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.extend(["--format", "json"]);
        let o = gpstrat(&a);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v = json_stdout(&o);
        assert_eq!(v["schema"], 1, "{args:?}");
        assert_eq!(v["command"], args[0], "{args:?}");
    }
}

#[test]
fn seeded_runs_are_reproducible() {
    let cases: &[&[&str]] = &[
        &["simulate", "--process", "fbm", "--H", "1/6", "--n", "64", "--seed", "9"],
        &["functionals", "--process", "bbm", "--H", "1/3", "--K", "1/2", "--n", "32", "--paths", "40", "--seed", "9"],
        &["limitlaw", "--process", "fbm", "--H", "1/6", "--n", "32", "--paths", "40", "--seed", "9"],
        &[
            "experiment", "--experiment", "vanishing", "--process", "fbm", "--H", "1/4", "--n-list", "8,16",
            "--paths", "1000", "--seed", "9",
        ],
    ];
    for args in cases {
        let a = gpstrat(args);
        let b = gpstrat(args);
        assert!(!a.stdout.is_empty(), "{args:?}");
        assert_eq!(a.status.code(), b.status.code(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let one = gpstrat(&["simulate", "--process", "fbm", "--H", "1/6", "--n", "64", "--seed", "1"]);
    let two = gpstrat(&["simulate", "--process", "fbm", "--H", "1/6", "--n", "64", "--seed", "2"]);
    assert_ne!(one.stdout, two.stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let base = ["limitlaw", "--process", "fbm", "--H", "1/6", "--n", "32", "--paths", "64", "--seed", "3"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut four = base.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(gpstrat(&one).stdout, gpstrat(&four).stdout);
}

#[test]
fn audit_failure_exits_one() {
    let o = gpstrat(&["audit", "--process", "fbm", "--H", "1/6", "--condition", "v", "--gamma", "3", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn experiment_from_config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "experiment = \"weak_limit\"\nprocess = \"fbm\"\nH = \"1/6\"\nf = \"x3\"\nn_list = [8, 16]\npaths = 1000\nseed = 5\n",
    )
    .unwrap();
    let plot = dir.path().join("plot.csv");
    let o = gpstrat(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--n-list",
        "16,32",
        "--plot",
        plot.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    let v = json_stdout(&o);
    assert_eq!(v["config"]["n_list"], serde_json::json!([16, 32]));
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["pass"].as_bool().unwrap(), o.status.code() == Some(0));
    let plot_text = std::fs::read_to_string(&plot).unwrap();
    let lines: Vec<&str> = plot_text.lines().collect();
    assert_eq!(lines[0], "n,ks_d@t=1");
    assert_eq!(lines.len(), 3);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "experiment = \"weak_limit\"\nnot_a_key = 1\n").unwrap();
    let o = gpstrat(&["experiment", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_stderr(&o)["code"], 2);
}

#[test]
fn experiment_long_csv_layout() {
    let o = gpstrat(&[
        "experiment", "--experiment", "scaling", "--process", "fbm", "--H", "1/6", "--f", "x5", "--n-list", "16,32,64",
        "--paths", "1000", "--format", "csv",
    ]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "experiment,n,t,statistic,value");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5));
    assert!(rows.iter().any(|r| r[1] == "64" && r[3] == "fifth_order_ms"));
    assert!(rows.iter().any(|r| r[3] == "verdict.fifth_order_ms_slope.pass"));
}

#[test]
fn factor_cache_directory_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--process", "fbm", "--H", "1/6", "--n", "16", "--seed", "2"];
    let mut cached = args.to_vec();
    let d = dir.path().to_str().unwrap();
    cached.extend(["--cache-dir", d]);
    let first = gpstrat(&cached);
    assert!(std::fs::read_dir(dir.path()).unwrap().count() > 0);
    let second = gpstrat(&cached);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, gpstrat(&args).stdout);
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = gpstrat(&["constants", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["command"], "constants");
}
