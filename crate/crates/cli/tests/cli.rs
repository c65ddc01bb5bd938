use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwarp"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// (key, value, status) rows of a result CSV.
fn rows(path: &Path) -> Vec<(String, String, f64, String)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["scenario_id", "command", "key", "value", "margin", "status"]
    );
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                rec[0].to_string(),
                rec[2].to_string(),
                rec[3].parse().unwrap_or(f64::NAN),
                rec[5].to_string(),
            )
        })
        .collect()
}

fn value(rows: &[(String, String, f64, String)], key: &str) -> f64 {
    rows.iter()
        .find(|r| r.1 == key)
        .unwrap_or_else(|| panic!("no {key}"))
        .2
}

fn run(dir: &TempDir, cmd: &str, cfg: &Path, out: &str, extra: &[&str]) -> (i32, PathBuf) {
    let out = dir.path().join(out);
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = cwarp(&args);
    (o.status.code().unwrap(), out)
}

#[test]
fn sphere_solve_gives_minus_one_over_four_pi() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "id = \"round\"\n[manifold]\nkind = \"sphere2\"\nresolution = 32\n",
    );
    let (code, out) = run(&dir, "solve", &cfg, "s.csv", &[]);
    assert_eq!(code, 0);
    let r = rows(&out);
    let p = value(&r, "potential");
    assert!((p + 1.0 / (4.0 * PI)).abs() < 1e-6, "{p}");
    assert!(r.iter().all(|x| x.0 == "round" && x.3 != "fail"));
}

#[test]
fn flat_torus_resonance() {
    let dir = TempDir::new().unwrap();
    let base = "[manifold]\nkind = \"torus\"\nn = 2\nresolution = 16\n";
    let solve = write(dir.path(), "a.toml", base);
    let (code, out) = run(&dir, "solve", &solve, "a.csv", &[]);
    assert_eq!(code, 2, "a refused solve is a failed check");
    assert!(rows(&out).iter().any(|r| r.1 == "lambda0" && r.3 == "fail"));

    let verify = write(
        dir.path(),
        "b.toml",
        &format!("{base}[verify]\nexpect_resonance = true\n"),
    );
    let (code, out) = run(&dir, "verify", &verify, "b.csv", &[]);
    assert_eq!(code, 0);
    assert!(rows(&out)
        .iter()
        .any(|r| r.1 == "resonance" && r.3 == "pass"));
}

#[test]
fn scan_trace_has_crossing_near_four() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "scan.toml",
        "[manifold]\nkind = \"sphere2\"\nresolution = 12\n[family]\nt_points = 41\n",
    );
    let (code, out) = run(&dir, "scan", &cfg, "scan.csv", &[]);
    assert_eq!(code, 0);
    let r = rows(&out);
    assert!((value(&r, "lambda0_crossing_0") - 4.0).abs() < 1e-4);

    let mut tr = csv::Reader::from_path(out.with_extension("trace.csv")).unwrap();
    let trace: Vec<(f64, String)> = tr
        .records()
        .map(|x| {
            let x = x.unwrap();
            (x[0].parse().unwrap(), x[1].to_string())
        })
        .collect();
    let lambda_rows = trace.iter().filter(|x| x.1 == "lambda0").count();
    assert_eq!(lambda_rows, 41);
    let crossing: Vec<_> = trace.iter().filter(|x| x.1 == "lambda0_crossing").collect();
    assert_eq!(crossing.len(), 1);
    assert!((crossing[0].0 - 4.0).abs() < 1e-4);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "sw.toml",
        "id = \"sw\"\n[manifold]\nkind = \"torus\"\nn = 2\nresolution = 12\n\
         [sources.string]\nkind = \"smooth\"\nstrength_per_len2 = 2.0\nbeta = 1.0\n\
         [sweep]\nsamples = 6\nwindow = 3\n",
    );
    let (c1, a) = run(
        &dir,
        "sweep",
        &cfg,
        "a.csv",
        &["--seed", "42", "--workers", "1"],
    );
    let (c2, b) = run(
        &dir,
        "sweep",
        &cfg,
        "b.csv",
        &["--seed", "42", "--workers", "3"],
    );
    let (_, c) = run(&dir, "sweep", &cfg, "c.csv", &["--seed", "43"]);
    assert_eq!(c1, c2);
    let (a, b, c) = (
        fs::read(a).unwrap(),
        fs::read(b).unwrap(),
        fs::read(c).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("sw/0000,sweep,seed,42.0"));
    assert!(text.contains("sw/summary,sweep,positive_solves"));
}

#[test]
fn unknown_keys_are_an_operational_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "colour = 1\n[manifold]\nkind = \"sphere2\"\nradiuss_len = 2.0\n",
    );
    let o = cwarp(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("colour") && err.contains("manifold.radiuss_len"),
        "{err}"
    );
}

#[test]
fn out_of_range_and_missing_file_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.toml", "[nonlinear]\nd = 4\n");
    let o = cwarp(&["nonlinear", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonlinear.d"));
    let o = cwarp(&["solve", "--config", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn json_output_to_stdout() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "g.toml",
        "id = \"g\"\n[example]\nkind = \"gamma\"\n",
    );
    let o = cwarp(&[
        "example",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rec = &v[0];
    assert_eq!(rec["scenario_id"], "g");
    assert_eq!(rec["status"], "pass");
    assert_eq!(rec["scenario_hash"].as_str().unwrap().len(), 16);
    let a = rec["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["key"] == "a")
        .unwrap();
    assert!((a["value"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn nonlinear_constant_case() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "n.toml",
        "[manifold]\nkind = \"torus\"\nn = 2\nresolution = 12\n[nonlinear]\nd = 8\nk = -1.0\nf_const = -2.0\n",
    );
    let (code, out) = run(&dir, "nonlinear", &cfg, "n.csv", &[]);
    assert_eq!(code, 0);
    let r = rows(&out);
    // f v = K v^{1-4/d} forces v = (K/f)^{d/4}.
    assert!(
        (value(&r, "v_max") - 0.25).abs() < 1e-8,
        "{}",
        value(&r, "v_max")
    );
    assert!((value(&r, "v_min") - 0.25).abs() < 1e-8);
}
