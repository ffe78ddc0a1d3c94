use std::path::PathBuf;
use std::process::{Command, Output};

use rapm::verify::VerificationReport;

fn rapm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rapm"))
        .args(args)
        .env_remove("RAPM_DEFAULT_TOL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rapm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn matrix(rows: &[[&str; 4]]) -> String {
    let rows: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|e| format!("\"{e}\"")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

const P: [[&str; 4]; 4] = [["1", "0", "0", "0"], ["0", "1", "0", "0"], ["0", "0", "-1", "0"], ["0", "0", "0", "-1"]];

fn spec(name: &str, g: [[&str; 4]; 4]) -> String {
    format!(
        r#"{{"name": "{name}", "dim": 4, "g": {}, "P": {}, "sampling": {{"grid": 2, "random": 10, "seed": 1}}}}"#,
        matrix(&g),
        matrix(&P)
    )
}

#[test]
fn classify_catalog_entries() {
    let o = rapm(&["classify", "catalog:flat-product-n2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("W0"));

    let o = rapm(&["classify", "catalog:conformal-vertical-n2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("W3bar"));

    let o = rapm(&["classify", "catalog:conformal-horizontal-n2", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "W6bar");
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn classify_spec_file_and_errors() {
    let e = "exp(0.2*x3)";
    let good = temp_file("good.json", &spec("good", [[e, "0", "0", "0"], ["0", e, "0", "0"], ["0", "0", e, "0"], ["0", "0", "0", e]]));
    let o = rapm(&["classify", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().next(), Some("W3bar"));

    // symmetric after averaging, but couples the two eigenspaces of P
    let broken = temp_file(
        "broken.json",
        &spec("broken", [["1", "0", "0.3", "0"], ["0", "1", "0", "0"], ["3/10", "0", "1", "0"], ["0", "0", "0", "1"]]),
    );
    let o = rapm(&["classify", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("warning"), "{err}");
    assert!(err.contains("structural"), "{err}");

    let bad = temp_file("bad.json", &spec("bad", [["1", "0", "0", "0"], ["0", "1 +", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "1"]]));
    let o = rapm(&["classify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("g[1][1]"));

    let o = rapm(&["classify", "/nonexistent/spec.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = rapm(&["classify", "catalog:no-such-entry"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_exit_codes() {
    assert_eq!(rapm(&["verify", "catalog:conformal-vertical-n2", "--suite", "w3"]).status.code(), Some(0));
    assert_eq!(rapm(&["verify", "catalog:flat-product-n2", "--suite", "all"]).status.code(), Some(0));
    let o = rapm(&["verify", "catalog:perturbed-7", "--suite", "w3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("precondition"));
    // a tolerance no rounding error can meet turns passes into failures
    let o = Command::new(env!("CARGO_BIN_EXE_rapm"))
        .args(["verify", "catalog:conformal-vertical-n2", "--suite", "w3"])
        .env("RAPM_DEFAULT_TOL", "1e-30")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = rapm(&["verify", "catalog:conformal-vertical-n2", "--suite", "w3", "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_json_output_and_file() {
    let out = std::env::temp_dir().join(format!("rapm-cli-report-{}.json", std::process::id()));
    let o = rapm(&[
        "verify",
        "catalog:conformal-horizontal-n2",
        "--suite",
        "w6",
        "--seed",
        "9",
        "--samples",
        "12",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let printed = VerificationReport::from_json(&stdout(&o)).unwrap();
    let written = VerificationReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(printed, written);
    assert_eq!(printed.seed, 9);
    assert_eq!(printed.samples.random, 12);
    assert!(printed.checks.iter().any(|c| c.name == "w6.curvature_defect"));
    let names: Vec<&str> = printed.checks.iter().map(|c| c.name.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    std::fs::remove_file(out).ok();
}

#[test]
fn decompose_command() {
    let o = rapm(&["decompose", "catalog:flat-product-n2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("tau      0.000000000000e0"), "{text}");
    assert!(text.contains("residual 0.000e0"), "{text}");

    let o = rapm(&["decompose", "catalog:conformal-vertical-n2", "--point", "0,0,0,0"]);
    assert_eq!(o.status.code(), Some(0));

    let o = rapm(&["decompose", "catalog:conformal-vertical-n2", "--point", "-0.2,0.4,0.1,-0.5"]);
    assert_eq!(o.status.code(), Some(0));

    let o = rapm(&["decompose", "catalog:flat-product-n3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage error"));
}

#[test]
fn list_shows_catalog() {
    let o = rapm(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["flat-product-n2", "conformal-vertical-n3", "perturbed-7"] {
        assert!(text.contains(name));
    }
}
