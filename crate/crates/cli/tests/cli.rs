use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fnls_core::io::{parse_csv, read_snapshot, ProfileMetadata};
use fnls_core::spectral::l2_norm;
use fnls_core::residual_operator;
use serde_json::json;
use tempfile::TempDir;

const L16PI: f64 = 16.0 * std::f64::consts::PI;

fn fnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnls"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, value: serde_json::Value) -> String {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn soliton_config(dt: f64, t: f64) -> serde_json::Value {
    json!({
        "l": L16PI, "n": 256, "s": 1.0, "dt": dt, "t": t,
        "initial": { "soliton": { "lambda1": 1.0, "lambda2": 0.25 } },
        "invariant_stride": 4,
        "snapshot_stride": 5
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), soliton_config(0.025, 1.0));
    let out_dir = dir.path().join("out");
    let out = fnls(&["simulate", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let invariants = parse_csv(&fs::read_to_string(out_dir.join("invariants.csv")).unwrap()).unwrap();
    assert_eq!(invariants.header, ["t", "I1", "I2", "H"]);
    assert_eq!(invariants.rows.len(), 40 / 4 + 1);

    let tracking = parse_csv(&fs::read_to_string(out_dir.join("tracking.csv")).unwrap()).unwrap();
    assert_eq!(tracking.header, ["t", "amplitude", "peak_x", "speed"]);
    assert_eq!(tracking.rows.len(), 40 / 5 + 1);
    let speeds = tracking.column("speed").unwrap();
    assert!(speeds[..4].iter().all(Option::is_none));
    assert!(speeds[4..].iter().all(|v| (v.unwrap() - 0.25).abs() < 1e-3));

    let last = read_snapshot(&out_dir.join("snapshot_00000040.fnls")).unwrap();
    assert_eq!(last.t, 1.0);
    assert_eq!(last.field.len(), 256);

    let summary = String::from_utf8_lossy(&out.stdout);
    for key in ["steps: 40", "mean fixed-point iterations", "stability margin", "wall time"] {
        assert!(summary.contains(key), "missing {key} in {summary}");
    }
}

#[test]
fn dt_not_dividing_t_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), soliton_config(0.3, 1.0));
    let out = fnls(&["simulate", "--config", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`dt`"), "{}", stderr(&out));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut value = soliton_config(0.025, 1.0);
    value["fp_tolerance"] = json!(1e-12);
    let cfg = write_config(dir.path(), value);
    let out = fnls(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fp_tolerance"));
}

#[test]
fn fixed_point_divergence_exits_three_with_stage() {
    let dir = TempDir::new().unwrap();
    // |u|^2 peaks at 8 and k = 1 makes the stage map strongly expansive
    let cfg = write_config(
        dir.path(),
        json!({
            "l": L16PI, "n": 256, "s": 1.0, "dt": 1.0, "t": 2.0,
            "initial": { "soliton": { "lambda1": 4.0, "lambda2": 0.0 } }
        }),
    );
    let out = fnls(&["simulate", "--config", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let msg = stderr(&out);
    assert!(msg.contains("at stage 1"), "{msg}");
}

#[test]
fn convergence_table_and_rates() {
    let dir = TempDir::new().unwrap();
    let mut value = soliton_config(0.025, 1.0);
    value["n"] = json!(512);
    let cfg = write_config(dir.path(), value);
    let out_dir = dir.path().to_str().unwrap();
    let out = fnls(&[
        "convergence", "--config", &cfg, "--output", out_dir, "--dt", "0.1,0.05,0.025,0.0125",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = parse_csv(&fs::read_to_string(dir.path().join("convergence.csv")).unwrap()).unwrap();
    assert_eq!(table.header, ["dt", "err_v", "rate_v", "err_w", "rate_w"]);
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.rows[0][2], None);
    assert_eq!(table.rows[0][4], None);
    for w in table.rows.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        for (e, r) in [(1, 2), (3, 4)] {
            let recomputed = (prev[e].unwrap() / cur[e].unwrap()).log2();
            assert!((cur[r].unwrap() - recomputed).abs() < 1e-9);
        }
    }
}

#[test]
fn single_dt_has_empty_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), soliton_config(0.025, 0.5));
    let out_dir = dir.path().to_str().unwrap();
    let out = fnls(&["convergence", "--config", &cfg, "--output", out_dir, "--dt", "0.05"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = parse_csv(&fs::read_to_string(dir.path().join("convergence.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!((table.rows[0][2], table.rows[0][4]), (None, None));
}

#[test]
fn growth_writes_checkpoints() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), soliton_config(0.025, 1.0));
    let out_dir = dir.path().to_str().unwrap();
    let out = fnls(&["growth", "--config", &cfg, "--output", out_dir, "--every", "0.25"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = parse_csv(&fs::read_to_string(dir.path().join("errorgrowth.csv")).unwrap()).unwrap();
    assert_eq!(table.header, ["t", "err_v", "err_w"]);
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.rows[0][1], Some(0.0));
}

fn profile_config(s: f64) -> serde_json::Value {
    json!({
        "l": L16PI, "n": 512, "s": s, "dt": 0.0125, "t": 1.0,
        "initial": { "petviashvili": { "lambda1": 1.0, "lambda2": 0.25 } }
    })
}

#[test]
fn profile_generation_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), profile_config(0.75));
    let out_dir = dir.path().to_str().unwrap();
    let out = fnls(&["profile", "--config", &cfg, "--output", out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let stdout = String::from_utf8_lossy(&out.stdout);
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("residual: "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(printed <= 1e-10);

    let path = dir.path().join("profile.fnls");
    let snap = read_snapshot(&path).unwrap();
    let meta = ProfileMetadata::load_beside(&path).unwrap().unwrap();
    let again = l2_norm(&residual_operator(&snap.field, snap.s, meta.lambda1, meta.lambda2).unwrap());
    assert!((again - meta.residual).abs() <= 1e-12);

    // the written profile can seed a run, and carries its traveling-wave reference
    let run = write_config(
        dir.path(),
        json!({
            "l": L16PI, "n": 512, "s": 0.75, "dt": 0.0125, "t": 0.5,
            "initial": { "profile_file": { "path": path } }
        }),
    );
    let out = fnls(&["convergence", "--config", &run, "--output", out_dir, "--dt", "0.025"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn profile_outside_supported_order_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), profile_config(0.4));
    let out = fnls(&["profile", "--config", &cfg, "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`s`"));
}

#[test]
fn missing_config_exits_two() {
    let out = fnls(&["simulate", "--config", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(2));
}
