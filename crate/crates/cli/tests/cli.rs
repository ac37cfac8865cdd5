use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_collapse");

fn collapse(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn collapse")
}

fn preset(name: &str) -> Value {
    let out = collapse(&["presets", name]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    collapse(&args)
}

fn small_qubit(dir: &Path) -> PathBuf {
    let mut cfg = preset("qubit-equal");
    cfg["t_end"] = json!(2.0);
    cfg["trajectories"] = json!(60);
    write_config(dir, "qubit.json", &cfg)
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn negative_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("qubit-equal");
    cfg["process"]["beta"] = json!(-1.0);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = run(&path, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beta must be > 0"), "{err}");
    assert!(!dir.path().join("out").join("summary.json").exists());
}

#[test]
fn unknown_keys_and_missing_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("qubit-equal");
    cfg["betta"] = json!(1.0);
    let path = write_config(dir.path(), "typo.json", &cfg);
    let out = run(&path, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("betta"));

    let out = collapse(&["run", "no-such-preset-or-file"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_qubit(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir, &["--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let traj = fs::read_to_string(out_dir.join("trajectories.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "engine,trajectory,time,event_flag,w_0,w_1,exp_0");
    // two engines, 60 trajectories, samples at 0, 0.5, ..., 2
    assert_eq!(lines.count(), 2 * 60 * 5);

    let events = fs::read_to_string(out_dir.join("events.csv")).unwrap();
    assert!(events.starts_with("trajectory,channel,time,a_0\n"));
    assert!(events.lines().count() > 100);

    let summary = read_json(&out_dir.join("summary.json"));
    let v = schema("summary.schema.json");
    assert!(v.is_valid(&summary), "{:?}", v.iter_errors(&summary).map(|e| e.to_string()).collect::<Vec<_>>());
    assert_eq!(summary["engines"].as_array().unwrap().len(), 2);

    let compare = read_json(&out_dir.join("compare.json"));
    let v = schema("compare.schema.json");
    assert!(v.is_valid(&compare), "{:?}", v.iter_errors(&compare).map(|e| e.to_string()).collect::<Vec<_>>());
}

#[test]
fn single_engine_run_has_no_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("qubit-equal");
    cfg["engine"] = json!("hitting");
    cfg["t_end"] = json!(1.0);
    cfg["trajectories"] = json!(20);
    let path = write_config(dir.path(), "h.json", &cfg);
    let out_dir = dir.path().join("out");
    assert!(run(&path, &out_dir, &[]).status.success());
    assert!(out_dir.join("summary.json").exists());
    assert!(!out_dir.join("compare.json").exists());
}

#[test]
fn outputs_do_not_depend_on_workers_or_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_qubit(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(run(&cfg, &b, &["--workers", "4"]).status.success());
    assert!(run(&cfg, &c, &["--workers", "4"]).status.success());
    for file in ["trajectories.csv", "events.csv", "summary.json", "compare.json"] {
        let x = fs::read(a.join(file)).unwrap();
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file} differs between worker counts");
        assert_eq!(x, fs::read(c.join(file)).unwrap(), "{file} differs between runs");
    }
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_qubit(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, &["--seed", "1"]).status.success());
    assert!(run(&cfg, &b, &["--seed", "2"]).status.success());
    assert_ne!(fs::read(a.join("events.csv")).unwrap(), fs::read(b.join("events.csv")).unwrap());
}

fn read_sweep(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["input_order", "mu", "beta", "deterministic_distance", "monte_carlo_distance", "monte_carlo_error"]);
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn sweep_sorts_and_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("qubit-equal");
    cfg["hamiltonian"] = json!({"kind": "preset", "name": "sigma-x", "scale": 1.0});
    cfg["t_end"] = json!(1.0);
    cfg["trajectories"] = json!(40);
    let path = write_config(dir.path(), "sweep.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = collapse(&[
        "sweep",
        path.to_str().unwrap(),
        "--param",
        "mu",
        "--values",
        "1000,10,100",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_sweep(&out_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    let mus: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(mus, [10.0, 100.0, 1000.0]);
    let order: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(order, ["1", "2", "0"]);
    let det: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(det[0] > det[1] && det[1] > det[2], "{det:?}");
    for r in &rows {
        let beta: f64 = r[2].parse().unwrap();
        let mu: f64 = r[1].parse().unwrap();
        assert!((beta * mu / 2.0 - 0.5).abs() < 1e-12);
        assert!(!r[4].is_empty() && !r[5].is_empty());
    }
}

#[test]
fn sweep_with_one_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("qubit-equal");
    cfg["t_end"] = json!(1.0);
    cfg["trajectories"] = json!(10);
    let path = write_config(dir.path(), "one.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = collapse(&["sweep", path.to_str().unwrap(), "--param", "mu", "--values", "50", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_sweep(&out_dir.join("sweep.csv")).len(), 1);
}

#[test]
fn every_preset_runs() {
    let listing = collapse(&["presets"]);
    assert!(listing.status.success());
    let names: Vec<String> = String::from_utf8_lossy(&listing.stdout).lines().map(|l| l.trim().to_string()).collect();
    assert!(names.len() >= 4, "{names:?}");
    let dir = tempfile::tempdir().unwrap();
    for name in &names {
        let mut cfg = preset(name);
        cfg["trajectories"] = json!(8);
        cfg["t_end"] = cfg["record_interval"].clone();
        let path = write_config(dir.path(), &format!("{name}.json"), &cfg);
        let out_dir = dir.path().join(name);
        let out = run(&path, &out_dir, &[]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let summary = read_json(&out_dir.join("summary.json"));
        assert!(schema("summary.schema.json").is_valid(&summary), "{name}");
    }
}

#[test]
fn distinguishable_particles_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "name": "two-particles",
        "kind": "distinguishable-particles",
        "engine": "both",
        "process": {"beta": 1.0, "mu": 1.0, "dt": 0.002},
        "sites": 3,
        "dx": 1.0,
        "alpha": 2.0,
        "particles": [{"name": "a", "lambda": 20.0}, {"name": "b", "lambda": 5.0}],
        "hamiltonian": {"kind": "none"},
        "initial_state": [{"sites": [0, 2], "re": 1.0}, {"sites": [2, 0], "re": 1.0}],
        "t_end": 1.0,
        "record_interval": 0.5,
        "trajectories": 20,
        "seed": 3
    });
    let path = write_config(dir.path(), "dp.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = run(&path, &out_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let events = fs::read_to_string(out_dir.join("events.csv")).unwrap();
    let mut lines = events.lines();
    assert_eq!(lines.next().unwrap(), "trajectory,channel,time,a_0,a_1");
    // each channel localizes one particle, so one cell per row stays empty
    for line in lines.take(50) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[3..].iter().filter(|c| c.is_empty()).count(), 1, "{line}");
    }
    assert!(schema("compare.schema.json").is_valid(&read_json(&out_dir.join("compare.json"))));
}

#[test]
fn fuzz_seeds_run_through_their_parsers() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for (target, parse) in [
        ("parse_matrix", (|t: &str| collapse_cli::parse_matrix(t).is_ok()) as fn(&str) -> bool),
        ("parse_quantity_set", |t| collapse_cli::parse_quantity_set(t).is_ok()),
        ("parse_scenario", |t| collapse_cli::parse_scenario(t).is_ok()),
    ] {
        for entry in fs::read_dir(root.join(target)).unwrap() {
            let text = fs::read_to_string(entry.unwrap().path()).unwrap();
            parse(&text);
            // truncations must fail cleanly
            for cut in (0..text.len()).step_by(7) {
                if text.is_char_boundary(cut) {
                    parse(&text[..cut]);
                }
            }
            seen += 1;
        }
    }
    assert!(seen >= 9);
}
