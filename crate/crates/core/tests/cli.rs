//! End-to-end tests of the `doubly-critical` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doubly-critical"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    bin(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    let out = bin(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(args)).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

/// Sign changes of `s^{2*-2} + nu alpha s^{alpha-2} - 1 - nu beta s^alpha` on a dense log grid.
fn oracle_sign_changes(n: f64, nu: f64, alpha: f64) -> usize {
    let ts = 2.0 * n / (n - 2.0);
    let beta = ts - alpha;
    let f = |s: f64| s.powf(ts - 2.0) + nu * alpha * s.powf(alpha - 2.0) - 1.0 - nu * beta * s.powf(alpha);
    let mut prev = f(1e-6).signum();
    let mut count = 0;
    for i in 1..200_000 {
        let s = (1e-6f64.ln() + 12.0 * 10f64.ln() * i as f64 / 199_999.0).exp();
        let v = f(s);
        if v != 0.0 && v.signum() != prev {
            count += 1;
            prev = v.signum();
        }
    }
    count
}

#[test]
fn classify_reports_the_three_cubic_roots() {
    // n = 3, alpha = beta = 3, nu = 1: f = (s - 1)(s^3 - 2 s^2 - 2 s + 1) = (s - 1)(s + 1)(s^2 - 3 s + 1)
    let v = json(&["classify", "--n", "3", "--nu", "1", "--alpha", "3"]);
    let roots: Vec<f64> = v["families"].as_array().unwrap().iter().map(|r| r["c_tilde"].as_f64().unwrap()).collect();
    let expected = [(3.0 - 5f64.sqrt()) / 2.0, 1.0, (3.0 + 5f64.sqrt()) / 2.0];
    assert_eq!(roots.len(), 3);
    for (r, e) in roots.iter().zip(expected) {
        assert!((r - e).abs() < 1e-12, "{r} {e}");
    }
}

#[test]
fn classify_csv_for_n4() {
    let text = stdout(&["classify", "--n", "4", "--nu", "1", "--format", "csv"]);
    assert_eq!(text.lines().next(), Some("c_tilde,c1,c2,f_prime"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    // c^2 (1 + 2 nu) = 1
    let c = 1.0 / 3f64.sqrt();
    assert!((rows[0][0] - 1.0).abs() < 1e-13);
    assert!((rows[0][1] - c).abs() < 1e-13 && (rows[0][2] - c).abs() < 1e-13);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["classify", "--n", "3"]), 0);
    assert_eq!(code(&["classify", "--n", "2"]), 2);
    assert_eq!(code(&["classify", "--n", "3", "--gamma", "0.25"]), 2);
    assert_eq!(code(&["classify", "--n", "3", "--gamma", "-0.1"]), 2);
    assert_eq!(code(&["classify", "--n", "3", "--nu", "-1"]), 2);
    assert_eq!(code(&["classify", "--n", "3", "--alpha", "2", "--beta", "2"]), 2);
    assert_eq!(code(&["classify", "--n", "3", "--gamma1", "0.1", "--gamma2", "0.2"]), 2);
    assert_eq!(code(&["classify", "--bogus"]), 2);
    // nu = 2/3 at n = 3, alpha = 3 makes C = 1 a triple root
    assert_eq!(code(&["classify", "--n", "3", "--alpha", "3", "--nu", "0.6666666666666666"]), 3);
    assert_eq!(code(&["classify", "--n", "4", "--nu", "0.5"]), 3);
    assert_eq!(code(&["shoot", "--n", "4", "--nu", "1", "--window-lo", "10", "--window-hi", "20"]), 4);
    assert_eq!(code(&["classify", "--n", "3", "--out", "/nonexistent-dir/x/out.json"]), 5);
    assert_eq!(code(&["sweep", "--n", "3", "--param", "nu", "--from", "1", "--to", "0", "--samples", "4"]), 2);
    assert_eq!(code(&["export", "--n", "3", "--family", "7"]), 2);
}

#[test]
fn verify_passes_and_perturbation_fails() {
    let v = json(&["verify", "--n", "4", "--nu", "1"]);
    assert_eq!(v["overall"], Value::Bool(true));
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() > 10);
    for c in checks {
        assert_eq!(c["pass"], Value::Bool(true), "{c}");
        for key in ["name", "measured", "threshold", "bound"] {
            assert!(c.get(key).is_some(), "{key} missing in {c}");
        }
    }
    assert_eq!(v["families"].as_array().unwrap().len(), 1);

    let out = bin(&["verify", "--n", "4", "--nu", "1", "--perturb-amplitude", "1.1"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["overall"], Value::Bool(false));
}

#[test]
fn verify_csv_has_one_row_per_check() {
    let text = stdout(&["verify", "--n", "3", "--gamma", "0.1", "--nu", "1", "--alpha", "3", "--format", "csv"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("name,measured,threshold,bound,pass"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|l| l.starts_with("family2.")));
    assert!(rows.iter().all(|l| l.ends_with(",true")), "{text}");
}

#[test]
fn shoot_recovers_the_decoupled_maximum() {
    let v = json(&["shoot", "--n", "5"]);
    let row = &v.as_array().unwrap()[0];
    // nu = 0: c1 = 1 and the orbit peaks at A 2^{-delta}
    let (n, delta) = (5.0f64, 1.5f64);
    let kappa = delta;
    let a = (4.0 * n * kappa * kappa / (n - 2.0)).powf((n - 2.0) / 4.0);
    let amplitude = row["amplitude"].as_f64().unwrap();
    let expected = a * 2f64.powf(-delta);
    assert!((amplitude - expected).abs() <= 1e-6 * expected, "{amplitude} {expected}");
}

#[test]
fn sweep_counts_match_sign_changes() {
    let text = stdout(&[
        "sweep", "--n", "3", "--alpha", "3", "--param", "nu", "--from", "0.05", "--to", "2", "--samples", "13",
        "--format", "csv",
    ]);
    let mut values = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let nu: f64 = cols[0].parse().unwrap();
        let count: usize = cols[1].parse().unwrap();
        assert_eq!(count, oracle_sign_changes(3.0, nu, 3.0), "nu = {nu}");
        values.push(nu);
    }
    assert_eq!(values.len(), 13);
    assert!(values.windows(2).all(|w| w[1] > w[0]));

    let v = json(&["sweep", "--n", "4", "--param", "nu", "--from", "0", "--to", "1", "--samples", "5"]);
    for row in v.as_array().unwrap() {
        let nu = row["value"].as_f64().unwrap();
        if nu == 0.5 {
            assert_eq!(row["continuum"], Value::Bool(true));
        } else {
            assert_eq!(row["root_count"].as_u64(), Some(1), "nu = {nu}");
        }
    }
}

#[test]
fn profile_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.csv");
    let p = path.to_str().unwrap();
    assert_eq!(code(&["export", "--n", "4", "--gamma", "0.5", "--nu", "1", "--out", p]), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("r,u,v,r_tau1_u,r_tau2_u"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 2048);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));

    // -u'' - 3u'/r - gamma u / r^2 = u^3 + 2 nu u v^2 at n = 4, alpha = beta = 2,
    // with derivatives from nonuniform three-point differences; halving the
    // resolution should multiply the discrepancy by about four
    let fine = ode_discrepancy(&rows, 1);
    let coarse = ode_discrepancy(&rows, 2);
    assert!(fine < 5e-3, "{fine}");
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

fn ode_discrepancy(rows: &[Vec<f64>], stride: usize) -> f64 {
    let (gamma, nu) = (0.5, 1.0);
    let mut worst = 0.0f64;
    for i in (900..1100).step_by(stride) {
        let (a, b, c) = (&rows[i - stride], &rows[i], &rows[i + stride]);
        let (h0, h1) = (b[0] - a[0], c[0] - b[0]);
        let du = (c[1] * h0 * h0 - a[1] * h1 * h1 + b[1] * (h1 * h1 - h0 * h0)) / (h0 * h1 * (h0 + h1));
        let d2u = 2.0 * (c[1] * h0 + a[1] * h1 - b[1] * (h0 + h1)) / (h0 * h1 * (h0 + h1));
        let (r, u, v) = (b[0], b[1], b[2]);
        let lhs = -d2u - 3.0 * du / r - gamma * u / (r * r);
        let rhs = u * u * u + 2.0 * nu * u * v * v;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(lhs.abs()));
    }
    worst
}

#[test]
fn trajectory_export_is_even_about_t0() {
    let text = stdout(&["export", "--n", "5", "--nu", "1", "--kind", "trajectory", "--samples", "401"]);
    assert_eq!(text.lines().next(), Some("t,y_u,p_u,y_v,p_v"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 401);
    for i in 0..rows.len() / 2 {
        let (a, b) = (&rows[i], &rows[rows.len() - 1 - i]);
        assert!((a[0] + b[0]).abs() < 1e-13);
        assert!((a[1] - b[1]).abs() <= 1e-13 * a[1]);
        assert!((a[3] - b[3]).abs() <= 1e-13 * a[3]);
    }
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_owned();
    full.extend(["--out", &p]);
    assert_eq!(code(&full), 0);
    std::fs::read(path).unwrap()
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let verify = ["verify", "--n", "3", "--gamma", "0.1", "--nu", "1", "--alpha", "3"];
    assert_eq!(run_to(dir.path(), "a.json", &verify), run_to(dir.path(), "b.json", &verify));
    let sweep = ["sweep", "--n", "3", "--param", "alpha", "--from", "2", "--to", "4", "--samples", "9"];
    assert_eq!(run_to(dir.path(), "a.sweep", &sweep), run_to(dir.path(), "b.sweep", &sweep));
}
