use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn armagm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armagm")).args(args).output().expect("failed to spawn armagm")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "simulate": { "recipe": { "m": 4, "n": 2, "edges": [[1, 2], [3, 4]], "seed": 5 }, "n_obs": 400 },
  "identify": { "gml": { "grid_points": 256 } },
  "montecarlo": {
    "recipe": { "m": 3, "n": 2, "edge_density": 0.34 },
    "n_obs": 300, "trials": 2, "record_runtime": false,
    "gml": { "grid_points": 256 }
  },
  "levelsets": { "study": { "range": { "resolution": 21 }, "gml": { "grid_points": 256 } } }
}"#;

#[test]
fn dump_config_round_trips() {
    let o = armagm(&["--dump-config", "--seed", "9", "--grid", "1024"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["identify"]["gml"]["grid_points"], 1024);
    assert_eq!(v["levelsets"]["study"]["range"]["resolution"], 100);
    // the dump is itself a valid config
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &String::from_utf8(o.stdout).unwrap());
    assert!(armagm(&["--config", &cfg, "--dump-config"]).status.success());
}

#[test]
fn unknown_keys_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"simulate": {"n_ob": 10}}"#);
    let o = armagm(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_ob"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), r#"{"simulate": {"recipe": {"edge_density": 0.0}}}"#);
    assert_eq!(armagm(&["simulate", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(armagm(&["identify", "--method", "lasso"]).status.code(), Some(2));
    assert_eq!(armagm(&["identify", "--jobs", "0"]).status.code(), Some(2));
    assert_eq!(armagm(&[]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = armagm(&["simulate", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = fs::read_to_string(a.join("series.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "ch1,ch2,ch3,ch4");
    assert_eq!(csv.lines().count(), 401);
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 4));
    assert_eq!(csv, fs::read_to_string(b.join("series.csv")).unwrap());
    assert_eq!(fs::read(a.join("model.json")).unwrap(), fs::read(b.join("model.json")).unwrap());
}

#[test]
fn identify_writes_model_report_and_edges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    assert!(armagm(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]).status.success());
    let series = sim.join("series.csv");
    for method in ["me", "gml", "gml-ar"] {
        let out = dir.path().join(method);
        let o = armagm(&[
            "identify",
            series.to_str().unwrap(),
            "--config",
            &cfg,
            "--method",
            method,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
        let outer = report["outer_iterations"].as_u64().unwrap();
        assert_eq!(outer == 0, method == "me");
        assert!(report["initial"]["cov_residuals"].is_array());
        let model: serde_json::Value = serde_json::from_slice(&fs::read(out.join("model.json")).unwrap()).unwrap();
        assert!(model.is_object());
        let edges = fs::read_to_string(out.join("edges.csv")).unwrap();
        assert_eq!(edges.lines().next(), Some("j,h"));
    }
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "ch1,ch2\n0.1,0.2\n0.3,abc\n0.5,0.6\n").unwrap();
    let o = armagm(&["identify", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = armagm(&["identify", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = armagm(&["identify"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn montecarlo_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("mc");
    let o = armagm(&["montecarlo", "--config", &cfg, "--jobs", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "trial,estimator,e_sp,err,runtime,converged");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("0,me,"));
    assert!(!out.join("results.csv.partial").exists());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["complete"], true);
    assert_eq!(summary["estimators"].as_array().unwrap().len(), 3);

    // one thread, same seed: same bytes
    let again = dir.path().join("mc2");
    assert!(armagm(&["montecarlo", "--config", &cfg, "--jobs", "1", "--out", again.to_str().unwrap()])
        .status
        .success());
    assert_eq!(csv, fs::read_to_string(again.join("results.csv")).unwrap());
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["montecarlo_m15.json", "levelsets.json"] {
        let path = root.join(name);
        let o = armagm(&["--config", path.to_str().unwrap(), "--dump-config"]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    let o = armagm(&["--config", root.join("montecarlo_m15.json").to_str().unwrap(), "--dump-config"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mc = &v["montecarlo"];
    assert_eq!(mc["recipe"]["m"], 15);
    assert_eq!(mc["recipe"]["n"], 2);
    assert_eq!(mc["recipe"]["edge_density"], 0.17);
    assert_eq!(mc["n_obs"], 500);
    assert_eq!(mc["trials"], 100);
}

#[test]
fn levelsets_write_two_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("ls");
    let o = armagm(&["levelsets", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let shape = |name: &str| {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let rows: Vec<Vec<String>> = text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect();
        assert!(rows.iter().all(|r| r.len() == rows[0].len()));
        // corners of the rectangle lie outside the cone
        assert!(rows[1][1].is_empty());
        (rows.len(), rows[0].len())
    };
    assert_eq!(shape("levelset_tilde.csv"), (22, 22));
    assert_eq!(shape("levelset_check.csv"), (22, 22));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("levelsets.json")).unwrap()).unwrap();
    assert!(!summary["tilde_minima"].as_array().unwrap().is_empty());
}

#[test]
fn interrupted_montecarlo_leaves_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"montecarlo": {"recipe": {"m": 3, "edge_density": 0.34}, "n_obs": 300, "trials": 100000,
            "gml": {"grid_points": 256}}}"#,
    );
    let out = dir.path().join("mc");
    let mut child = Command::new(env!("CARGO_BIN_EXE_armagm"))
        .args(["montecarlo", "--config", &cfg, "--jobs", "1", "--out", out.to_str().unwrap()])
        .spawn()
        .unwrap();
    let partial = out.join("results.csv.partial");
    let started = std::time::Instant::now();
    while fs::read_to_string(&partial).map(|t| t.lines().count() < 4).unwrap_or(true) {
        assert!(started.elapsed().as_secs() < 60, "no rows written");
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(!out.join("results.csv").exists());
    assert!(!out.join("summary.json").exists());
    let text = fs::read_to_string(&partial).unwrap();
    assert!(text.starts_with("trial,estimator,e_sp,err,runtime,converged\n"));
}
