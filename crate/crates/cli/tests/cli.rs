use std::path::PathBuf;

use assert_cmd::Command;

fn channel(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../channels").join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::cargo_bin("fbconverse").unwrap().args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn path(name: &str) -> String {
    channel(name).to_str().unwrap().to_string()
}

#[test]
fn classify_reports() {
    let (code, out, _) = run(&["classify", &path("bec05.ch")]);
    assert_eq!(code, 0);
    assert!(out.contains("symmetric, singular; partition {{0,1},{2}}"));
    assert!(out.contains("strongly_symmetric,false"));
    let (code, out, _) = run(&["classify", &path("paper3x4.ch")]);
    assert_eq!(code, 0);
    assert!(out.contains("asymmetric, singular"));
}

#[test]
fn classify_bad_file_is_input_error() {
    let (code, _, err) = run(&["classify", &path("bad.ch")]);
    assert_eq!(code, 2);
    assert!(err.contains("row sums to"));
    let (code, _, _) = run(&["classify", &path("missing.ch")]);
    assert_eq!(code, 2);
}

fn value(out: &str, key: &str) -> f64 {
    out.lines().find_map(|l| l.strip_prefix(&format!("{key},"))).unwrap().parse().unwrap()
}

#[test]
fn exponents_verb() {
    let (code, out, _) = run(&["exponents", &path("bec05.ch"), "--rate", "0.2"]);
    assert_eq!(code, 0);
    assert!((value(&out, "E_sp") - 0.0923).abs() < 1e-4);
    assert!((value(&out, "rho_R") - 1.3019).abs() < 1e-3);
    assert_eq!(value(&out, "prefactor_order"), 0.5);
    let (code, out, _) = run(&["exponents", &path("bsc01.ch"), "--rate", "0.3"]);
    assert_eq!(code, 0);
    assert!((value(&out, "prefactor_order") - (1.0 + value(&out, "rho_R")) / 2.0).abs() < 1e-15);
    let (code, _, _) = run(&["exponents", &path("bsc01.ch"), "--rate", "1.0"]);
    assert_eq!(code, 3);
}

#[test]
fn bits_scales_display() {
    let (_, nats, _) = run(&["measures", &path("bsc01.ch")]);
    let (_, bits, _) = run(&["--bits", "measures", &path("bsc01.ch")]);
    let ratio = value(&nats, "capacity") / value(&bits, "capacity");
    assert!((ratio - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn sp_sweep_rows() {
    let (code, out, _) = run(&["bound", &path("bec05.ch"), "--kind", "sp", "--rate", "0.2", "--N", "100:1000:100"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "N,rate_or_eps,exponent,prefactor_log,log_bound,valid,n_min");
    assert_eq!(lines.len(), 11);
    for (i, l) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells[0], ((i + 1) * 100).to_string());
        let n_min: u64 = cells[6].parse().unwrap();
        assert_eq!(cells[5], ((i as u64 + 1) * 100 >= n_min).to_string());
    }
}

#[test]
fn na_rows_and_dispatch() {
    let (code, out, _) = run(&["bound", &path("bec05.ch"), "--kind", "na", "--eps", "0.1", "--N", "1000:1000:1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().ends_with("false,29637"));
    let (code, out, _) = run(&["bound", &path("bec05.ch"), "--kind", "na", "--eps", "0.1", "--N", "40000"]);
    assert_eq!(code, 0);
    let cells: Vec<f64> = out.lines().nth(1).unwrap().split(',').filter_map(|c| c.parse().ok()).collect();
    let expected = 4e4 * 2f64.ln() / 2.0 + (4e4 * 0.25 * 2f64.ln().powi(2)).sqrt() * -1.2815515655446004 + cells[3];
    assert!((cells[4] - expected).abs() < 1e-8);
    let (code, _, _) = run(&["bound", &path("bsc01.ch"), "--kind", "na", "--eps", "0.1", "--N", "100:200:100"]);
    assert_eq!(code, 3);
}

#[test]
fn csv_is_deterministic() {
    let args = ["bound", &path("bsc01.ch"), "--kind", "sp", "--rate", "0.3", "--N", "1000000:5000000:250000"];
    let (_, a, _) = run(&args);
    let (_, b, _) = run(&args);
    assert_eq!(a, b);
    let single = Command::cargo_bin("fbconverse").unwrap().env("RAYON_NUM_THREADS", "1").args(args).output().unwrap();
    assert_eq!(String::from_utf8(single.stdout).unwrap(), a);
}

#[test]
fn bad_sweep_is_input_error() {
    let (code, _, _) = run(&["bound", &path("bsc01.ch"), "--kind", "sp", "--rate", "0.3", "--N", "10:5:1"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["bound", &path("bsc01.ch"), "--kind", "sp", "--N", "10:50:10"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_suites() {
    let (code, out, _) = run(&["verify", &path("bsc01.ch"), "--suite", "saddle"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("saddle: pass (max residual"));
    let (code, out, _) = run(&["verify", &path("paper3x4.ch"), "--suite", "saddle"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("saddle: skipped"));
    let (code, _, _) = run(&["--tol", "0", "verify", &path("bsc01.ch"), "--suite", "cgf"]);
    assert_eq!(code, 1);
    let (code, _, _) = run(&["verify", &path("bsc01.ch"), "--suite", "nope"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_all_on_bec() {
    let (code, out, _) = run(&["verify", &path("bec05.ch"), "--suite", "all"]);
    assert_eq!(code, 0, "{out}");
    assert!(!out.contains("FAIL"));
}
