use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn preacq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_preacq"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "grid": {"dim": 1, "n_points": 32, "length": 6.283185307179586, "dt_frame": 0.05, "n_frames": 9},
  "pool_size": 10,
  "test_size": 3,
  "initial_size": 2,
  "batch_size": 2,
  "rounds": 2,
  "seeds": [0, 1, 2]
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = preacq(&["run", "--config", &cfg, "--policy", "random", "--seed", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "seed,round,n_train,rmse,policy,wall_seconds");
    assert_eq!(lines.len(), 1 + 3);
    assert!(lines[1..].iter().all(|l| l.starts_with("0,") && l.contains(",random,")));
    assert!(out.join("learning_curve.csv").exists());
    assert!(out.join("config.json").exists());
    assert!(stdout(&o).starts_with("policy,n_train,mean_rmse"));

    let again = preacq(&["run", "--config", &cfg, "--seed", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));

    let forced = preacq(&["run", "--config", &cfg, "--seed", "0", "--force", "--out", out.to_str().unwrap()]);
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert!(out.join("scores").join("seed_0_round_1.csv").exists());
}

#[test]
fn resume_completes_an_interrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let whole = preacq(&["run", "--config", &cfg, "--policy", "sbal", "--out", a.to_str().unwrap()]);
    assert!(whole.status.success(), "{}", stderr(&whole));
    let part = preacq(&["run", "--config", &cfg, "--policy", "sbal", "--stop-after", "1", "--out", b.to_str().unwrap()]);
    assert!(part.status.success(), "{}", stderr(&part));
    let rest = preacq(&["run", "--config", &cfg, "--policy", "sbal", "--resume", "--out", b.to_str().unwrap()]);
    assert!(rest.status.success(), "{}", stderr(&rest));
    assert_eq!(stdout(&whole), stdout(&rest));
}

#[test]
fn inverted_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"delta_ranges": {"nu": [1.0, 0.1]}}"#);
    let o = preacq(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_ranges.nu"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = preacq(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn metrics_file(dir: &Path, name: &str, rows: &[(u64, usize, usize, f64, &str)]) -> String {
    let mut text = String::from("seed,round,n_train,rmse,policy,wall_seconds\n");
    for (seed, round, n, rmse, policy) in rows {
        text.push_str(&format!("{seed},{round},{n},{rmse},{policy},0.5\n"));
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn curve_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn report_averages_across_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = metrics_file(dir.path(), "a.csv", &[(0, 0, 8, 1.0, "top_k"), (0, 1, 16, 0.5, "top_k")]);
    let b = metrics_file(dir.path(), "b.csv", &[(1, 0, 8, 3.0, "top_k"), (1, 1, 16, 0.5, "top_k")]);
    let o = preacq(&["report", &a, &b]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = curve_rows(&o);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "top_k");
    assert_eq!(rows[0][1], "8");
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 2.0);
    // sample sd sqrt(2), stderr 1, half width 1.96
    let lo: f64 = rows[0][3].parse().unwrap();
    let hi: f64 = rows[0][4].parse().unwrap();
    assert!((hi - lo - 3.92).abs() < 1e-12, "{lo} {hi}");
    assert_eq!(rows[0][5], "2");
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.5);
    assert_eq!(rows[1][3], rows[1][4]);

    let single = preacq(&["report", &a]);
    for r in curve_rows(&single) {
        assert_eq!(r[3], r[4]);
        assert_eq!(r[2].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap());
        assert_eq!(r[5], "1");
    }
}

#[test]
fn report_keeps_policies_apart() {
    let dir = tempfile::tempdir().unwrap();
    let a = metrics_file(dir.path(), "a.csv", &[(0, 0, 8, 1.0, "top_k"), (0, 0, 8, 2.0, "random")]);
    let out = dir.path().join("curve.csv");
    let o = preacq(&["report", &a, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let body: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(body.len(), 2);
    assert!(body.iter().any(|l| l.starts_with("random,8,2")));
    assert!(body.iter().any(|l| l.starts_with("top_k,8,1")));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "seed,rmse\n0,1\n").unwrap();
    assert_eq!(preacq(&["report", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn verify_and_its_negative_control() {
    let ok = preacq(&["verify"]);
    assert!(ok.status.success(), "{}{}", stdout(&ok), stderr(&ok));
    assert!(stdout(&ok).lines().all(|l| l.starts_with("PASS")));
    let bad = preacq(&["verify", "--perturb-stencil", "1e-3"]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn defaults_round_trip_through_run_config() {
    let o = preacq(&["defaults", "--family", "ns2d"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"eta\""));
    assert_eq!(preacq(&["defaults", "--family", "heat"]).status.code(), Some(2));
}
