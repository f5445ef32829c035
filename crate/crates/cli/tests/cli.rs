use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn ifuc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifuc"))
        .args(args)
        .env_remove("IFUC_SOLVER")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn solve_dispatch_simulate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("small/small_b.json");
    let sol = dir.path().join("ruc.json");
    let out = ifuc(&["--solver", "bundled", "solve-ruc", "--model", s(&model), "--multiplier", "0.2", "--out", s(&sol)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&sol);
    assert_eq!(report["outcome"], "optimal");
    assert!(report["solution"]["total_cost"].as_f64().unwrap() > 0.0);

    let disp = dir.path().join("ed.json");
    let out = ifuc(&[
        "--solver", "bundled", "ed", "--model", s(&model), "--commitment", s(&sol), "--scenario", "high",
        "--multiplier", "0.2", "--out", s(&disp),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ed = json(&disp);
    assert_eq!(ed["scenario"], "high");
    let p = ed["dispatch"]["p"][3].as_array().unwrap();
    let on = p.iter().position(|v| v.as_f64().unwrap() > 0.0).unwrap();
    let unit = ["G1", "G2", "G3"][on];

    let trace = dir.path().join("trace.csv");
    let out = ifuc(&[
        "simulate", "--model", s(&model), "--dispatch", s(&disp), "--hour", "3", "--unit", unit, "--ufls",
        "--out", s(&trace),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["nadir"].as_f64().unwrap() < 50.0);
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.lines().count() > 1000);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let island = fixture("island4.json");
    let out_file = dir.path().join("x.json");

    let out = ifuc(&["solve-ruc", "--model", s(&island), "--multiplier", "3", "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out_file)["outcome"], "infeasible");

    let out = ifuc(&["solve-ruc", "--model", "/nonexistent/island.json", "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(4));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"system\": 3}").unwrap();
    let out = ifuc(&["solve-ruc", "--model", s(&bad), "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(4));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{\"no_such_key\": 1}").unwrap();
    let out = ifuc(&["--config", s(&cfg), "solve-ruc", "--model", s(&island), "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(4));

    let out = ifuc(&["--solver", "nope", "solve-ruc", "--model", s(&island), "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(4));

    let out = ifuc(&["solve-ruc", "--bogus"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn run_all_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"multipliers": [0.0, 0.7, 1.4, 1.5], "psi": [-4.95, -6.91, -10.0]}"#).unwrap();
    let island = fixture("island4.json");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = ifuc(&["--config", s(&cfg), "run-all", "--model", s(&island), "--out", s(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out_dir);
    }
    for name in [
        "levels.csv",
        "dataset.csv",
        "metrics.csv",
        "comparison.csv",
        "correlations.csv",
        "model.json",
        "summary.json",
        "cost_vs_ufls.svg",
        "logit_scatter.svg",
        "traces_hour19.svg",
    ] {
        let a = fs::read(outputs[0].join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let b = fs::read(outputs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }

    // `report` rebuilds the same tables from the files alone.
    let rebuilt = dir.path().join("rebuilt");
    let out = ifuc(&["report", "--run", s(&outputs[0]), "--out", s(&rebuilt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["comparison.csv", "correlations.csv", "cost_vs_ufls.svg"] {
        assert_eq!(fs::read(outputs[0].join(name)).unwrap(), fs::read(rebuilt.join(name)).unwrap(), "{name}");
    }
}
