use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ddspin::config::RunConfig;
use ddspin::sweep::{load_results, Direction};

fn ddspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddspin")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

const XY_MF: &str = r#"{
    "tier": "mf",
    "model": {"kind": "xy", "omega": 0.5, "coupling_times_z": 4.0},
    "lattice": {"type": "hypercubic", "sizes": [64, 64]},
    "sweep": {"parameter": "delta", "grid": {"start": 0.0, "stop": 6.0, "step": 0.05}}
}"#;

#[test]
fn mf_scan_finds_the_xy_window() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", XY_MF);
    let out = tmp.path().join("mf");
    let o = ddspin(&["mf-scan", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let iv = csv_rows(&out.join("mf_intervals.csv"));
    assert_eq!(iv.len(), 1);
    let (a, b): (f64, f64) = (iv[0][0].parse().unwrap(), iv[0][1].parse().unwrap());
    assert!((a - 1.3).abs() < 0.05 && (b - 1.9).abs() < 0.05, "{a} {b}");
    let fps = csv_rows(&out.join("fixed_points.csv"));
    let at_1_6: Vec<_> = fps.iter().filter(|r| r[0] == "1.6").collect();
    assert_eq!(at_1_6.len(), 3);
    assert_eq!(at_1_6.iter().filter(|r| r[5] == "stable").count(), 2);
    let (side, recs) = load_results(&out).unwrap();
    assert_eq!(side.seed, Some(7));
    assert_eq!(recs.iter().filter(|r| r.direction == Direction::Forward).count(), 121);
    for f in ["branches.csv", "intervals.csv", "config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn config_echo_reparses_to_the_same_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", XY_MF);
    let out = tmp.path().join("o");
    let o = ddspin(&[
        "mf-scan",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--override",
        "model.omega=0.6",
        "--override",
        "sweep.grid.step=0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = fs::read_to_string(out.join("config.json")).unwrap();
    let back = RunConfig::from_json(&echo, &[]).unwrap();
    assert_eq!(back.model.omega, 0.6);
    assert_eq!(back.output.as_deref(), Some(out.as_path()));
    assert_eq!(back.to_json() + "\n", echo);
}

#[test]
fn weak_ising_coupling_has_no_bistability() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
            "tier": "mf",
            "model": {"kind": "ising", "omega": 0.0, "coupling_times_z": -1.0},
            "lattice": {"type": "hypercubic", "sizes": [16, 16]},
            "sweep": {"parameter": "omega", "grid": {"start": 0.0, "stop": 4.0, "points": 81}}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = ddspin(&["mf-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(csv_rows(&out.join("mf_intervals.csv")).is_empty());
    assert!(csv_rows(&out.join("intervals.csv")).is_empty());
}

#[test]
fn bad_configs_fail_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (XY_MF.replace("\"omega\": 0.5", "\"omega\": 0.5, \"gamma\": -1.0"), "gamma"),
        (XY_MF.replace("\"omega\": 0.5", "\"omega\": 0.5, \"omgea\": 1.0"), "omgea"),
        (XY_MF.replace("\"step\": 0.05", "\"step\": -0.05"), "step"),
    ];
    for (i, (json, key)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), json);
        let out = tmp.path().join(format!("o{i}"));
        let o = ddspin(&["mf-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
        assert!(!out.exists());
    }
    let out = tmp.path().join("x");
    let o = ddspin(&["mf-scan", "--config", "/nonexistent.json", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent.json"));
}

#[test]
fn wrong_tier_and_missing_output_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", XY_MF);
    let out = tmp.path().join("o");
    let o = ddspin(&["exact-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tier"));
    assert!(!out.exists());
    let o = ddspin(&["mf-scan", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out"));
}

#[test]
fn unconverged_points_exit_nonzero_but_keep_results() {
    let tmp = tempfile::tempdir().unwrap();
    let json = XY_MF.replace(
        "\"sweep\"",
        "\"tolerances\": {\"horizon\": {\"t_final\": 0.01, \"t_max\": 0.02}}, \"sweep\"",
    );
    let cfg = write_config(tmp.path(), "c.json", &json);
    let out = tmp.path().join("o");
    let o = ddspin(&["mf-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("did not converge"));
    let (_, recs) = load_results(&out).unwrap();
    assert!(recs.iter().any(|r| !r.converged));
}

#[test]
fn decoupled_run_follows_meanfield() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
            "tier": "mfqf",
            "model": {"kind": "xy", "delta": 0.7, "omega": 0.5, "coupling": 0.0},
            "lattice": {"type": "hypercubic", "sizes": [8, 8]},
            "run": {"t_final": 6.0, "snapshot_times": [1.0, 3.0]},
            "tolerances": {"mfqf": {"tol": {"rtol": 1e-12, "atol": 1e-14}}}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = ddspin(&["mfqf-run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = csv_rows(&out.join("trajectory.csv"));
    let b = csv_rows(&out.join("mf_reference.csv"));
    assert_eq!(a.len(), b.len());
    assert!(a.len() > 10);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        for c in 1..4 {
            let (u, v): (f64, f64) = (x[c].parse().unwrap(), y[c].parse().unwrap());
            assert!((u - v).abs() < 1e-8, "t={} {u} {v}", x[0]);
        }
    }
    for f in ["snapshot_000.csv", "snapshot_001.csv", "snapshot_final.csv", "observables.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let snap = csv_rows(&out.join("snapshot_final.csv"));
    assert!(snap.iter().all(|r| r[3..].iter().all(|v| v.parse::<f64>().unwrap().abs() < 1e-10)));
}

#[test]
fn mfqf_sweep_in_one_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
            "tier": "mfqf",
            "model": {"kind": "xy", "omega": 0.5, "coupling_times_z": 4.0},
            "lattice": {"type": "hypercubic", "sizes": [32]},
            "sweep": {"parameter": "delta", "grid": {"values": [0.5, 2.0, 4.0]}}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = ddspin(&["mfqf-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, recs) = load_results(&out).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.converged && r.kappa.is_some() && r.sigma[0].is_some()));
    assert!(csv_rows(&out.join("intervals.csv")).is_empty());

    let plots = tmp.path().join("plots");
    let o = ddspin(&["emit-plotdata", "--figure", "fig3c", "--out", plots.to_str().unwrap(), out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(plots.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["curves"].as_array().unwrap().len(), 1);
}

#[test]
fn exact_scan_writes_distributions_and_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
            "tier": "exact",
            "model": {"kind": "xy", "omega": 0.5, "coupling_times_z": 6.0},
            "lattice": {"type": "fully_connected", "n": 4},
            "sweep": {"parameter": "delta", "grid": {"start": 0.0, "stop": 4.0, "points": 5}, "protocol": "warm_forward"},
            "tolerances": {"exact": {"spectrum": true}}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = ddspin(&["exact-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&out.join("bimodality.csv")).len(), 5);
    assert_eq!(csv_rows(&out.join("spectrum.csv")).len(), 30);
    assert_eq!(csv_rows(&out.join("distributions.csv")).len(), 25);
    let (_, recs) = load_results(&out).unwrap();
    assert!(recs.iter().all(|r| r.kappa.is_some_and(|k| k > 0.0)));
}

#[test]
fn exact_capacity_is_refused_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{
            "tier": "exact",
            "model": {"kind": "xy", "omega": 0.5, "coupling": 1.0},
            "lattice": {"type": "chain", "n": 14, "boundary": "periodic"},
            "sweep": {"parameter": "delta", "grid": {"values": [1.0]}}
        }"#,
    );
    let out = tmp.path().join("o");
    let o = ddspin(&["exact-scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn emit_plotdata_errors_name_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let plots = tmp.path().join("plots");
    let o = ddspin(&["emit-plotdata", "--figure", "fig1a", "--out", plots.to_str().unwrap(), missing.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere"));
    assert!(!plots.exists());

    let bad = tmp.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("sweep.json"), "{}").unwrap();
    fs::write(bad.join("records.csv"), "a,b\n1,2\n").unwrap();
    let o = ddspin(&["emit-plotdata", "--figure", "fig1a", "--out", plots.to_str().unwrap(), bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad"), "{}", stderr(&o));

    let o = ddspin(&["emit-plotdata", "--figure", "fig99", "--out", plots.to_str().unwrap(), bad.to_str().unwrap()]);
    assert!(stderr(&o).contains("fig99"));
}
