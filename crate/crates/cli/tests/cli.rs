use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn dglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dglab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String) {
    let out = dglab(args);
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (code(&out), text)
}

fn certify(grid_cells: usize, c: f64) -> Value {
    json!({
        "name": "unit",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [{ "lower": 0.0, "upper": 1.0, "cells": grid_cells }] },
            "coefficients": { "family": "constant", "a": 1.0, "c": c },
            "x": { "boxes": [{ "lo": [0.0], "hi": [0.25] }] },
            "y": { "boxes": [{ "lo": [0.5], "hi": [1.0] }] },
            "times": [0.02],
            "norms": ["2"],
            "solver": { "steps": 40 }
        }
    })
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn heat_example_passes_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let (status, text) = run(&["run", "--config", "example:heat", "--out", out.to_str().unwrap()]);
    assert_eq!(status, 0, "{text}");

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_pass"], true);
    assert!(!report["certificates"].as_array().unwrap().is_empty());

    let (header, rows) = csv_rows(&out.join("bounds.csv"));
    assert_eq!(
        header,
        [
            "scenario",
            "p",
            "d",
            "t",
            "alpha",
            "beta",
            "k",
            "validity",
            "predicted",
            "measured",
            "pass"
        ]
    );
    let scenario = column(&header, "scenario");
    assert!(rows.iter().any(|r| r[scenario] == "heat"));
    assert!(rows.iter().any(|r| r[scenario] == "heat:analytic"));
    assert!(fs::read_dir(&out)
        .unwrap()
        .any(|e| e.unwrap().file_name().to_string_lossy().starts_with("profile_")));
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"name\": \"broken\", ").unwrap();
    let out = dir.path().join("out");
    let (status, text) = run(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(status, 2, "{text}");

    let mut unknown = certify(64, 0.0);
    unknown["scenario"]["colour"] = json!("blue");
    let path = write_config(dir.path(), "unknown.json", &unknown);
    let (status, text) = run(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status, 2, "{text}");

    let (status, _) = run(&[
        "run",
        "--config",
        "/nonexistent/cfg.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status, 2);
    let (status, _) = run(&["run", "--config", "example:nope", "--out", out.to_str().unwrap()]);
    assert_eq!(status, 2);
}

#[test]
fn positive_reaction_exits_3_with_assumption_report() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "c.json", &certify(64, 1.0));
    let out = dir.path().join("out");
    let (status, text) = run(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status, 3, "{text}");
    assert!(text.contains("assumption violated"), "{text}");

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_pass"], false);
    let a = &report["assumptions"];
    assert_eq!(a["c_nonpositive_ok"]["ok"], false, "{a}");

    let (status, text) = run(&[
        "validate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status, 3, "{text}");
    let (status, text) = run(&["validate", "--config", "example:heat", "--out", out.to_str().unwrap()]);
    assert_eq!(status, 0, "{text}");
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "name": "seeded",
        "scenario": {
            "kind": "porous_medium",
            "n": 1,
            "m": 2.0,
            "q": { "kind": "random", "amplitude": 0.01, "modes": 4 },
            "grid": { "axes": [{ "lower": -3.0, "upper": 3.0, "cells": 512 }] },
            "t_final": 0.5,
            "solver": { "dt": 0.01, "epsilon": 1e-6 }
        }
    });
    let path = write_config(dir.path(), "seeded.json", &cfg);
    let report = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let (status, text) = run(&[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(status == 0 || status == 3, "{text}");
        fs::read(out.join("report.json")).unwrap()
    };
    let a = report("7", "a");
    let b = report("7", "b");
    let c = report("8", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_t_gives_monotone_predicted_bound() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    // The heat example's validity interval is about 8.7e-4.
    let values: Vec<String> = (1..=10).map(|i| format!("{:e}", 8e-5 * i as f64)).collect();
    let values = values.join(",");
    let (status, text) = run(&[
        "sweep",
        "--config",
        "example:heat",
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "t",
        "--values",
        &values,
    ]);
    assert_eq!(status, 0, "{text}");

    let (header, rows) = csv_rows(&out.join("sweep.csv"));
    let (scenario, p, validity, predicted) = (
        column(&header, "scenario"),
        column(&header, "p"),
        column(&header, "validity"),
        column(&header, "predicted"),
    );
    let bounds: Vec<f64> = rows
        .iter()
        .filter(|r| !r[scenario].ends_with(":analytic") && r[p] == "2")
        .inspect(|r| assert_eq!(r[validity], "true"))
        .map(|r| r[predicted].parse().unwrap())
        .collect();
    assert_eq!(bounds.len(), 10);
    assert!(bounds.windows(2).all(|w| w[1] > w[0]), "{bounds:?}");

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 10);
}

#[test]
fn sweep_n_converges() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "conv.json", &certify(128, 0.0));
    let out = dir.path().join("out");
    let (status, text) = run(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "n",
        "--values",
        "128,256,512",
    ]);
    assert_eq!(status, 0, "{text}");

    let (header, rows) = csv_rows(&out.join("sweep.csv"));
    let (scenario, measured) = (column(&header, "scenario"), column(&header, "measured"));
    let m: Vec<f64> = rows
        .iter()
        .filter(|r| !r[scenario].ends_with(":analytic"))
        .map(|r| r[measured].parse().unwrap())
        .collect();
    assert_eq!(m.len(), 3);
    let (d1, d2) = ((m[1] - m[0]).abs(), (m[2] - m[1]).abs());
    assert!(d1 >= 1.5 * d2, "differences {d1:e}, {d2:e}");
}

#[test]
fn sweep_rejects_empty_values_and_unknown_axes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let (status, text) = run(&[
        "sweep",
        "--config",
        "example:heat",
        "--out",
        o,
        "--axis",
        "t",
        "--values",
        "",
    ]);
    assert_eq!(status, 2, "{text}");
    let (status, text) = run(&["sweep", "--config", "example:heat", "--out", o, "--axis", "t"]);
    assert_eq!(status, 2, "{text}");
    let (status, text) = run(&[
        "sweep",
        "--config",
        "example:heat",
        "--out",
        o,
        "--axis",
        "gamma",
        "--values",
        "1",
    ]);
    assert_eq!(status, 2, "{text}");
}

#[test]
fn bad_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();
    assert_eq!(
        run(&["run", "--config", "example:heat", "--out", o, "--slack", "-1"]).0,
        2
    );
    assert_eq!(
        run(&["run", "--config", "example:heat", "--out", o, "--seed", "x"]).0,
        2
    );
    assert_eq!(run(&["frobnicate"]).0, 2);
}

#[test]
fn examples_lists_and_writes_runnable_configs() {
    let dir = TempDir::new().unwrap();
    let configs = dir.path().join("configs");
    let (status, text) = run(&["examples", "--out", configs.to_str().unwrap()]);
    assert_eq!(status, 0, "{text}");
    assert!(text.contains("heat") && text.contains("mckean_vlasov"), "{text}");
    let heat = configs.join("heat.json");
    assert!(heat.exists());
    let out = dir.path().join("out");
    let (status, text) = run(&[
        "run",
        "--config",
        heat.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status, 0, "{text}");
}
