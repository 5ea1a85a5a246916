use hillspec::cli_io::{Report, SigmaFile, SCHEMA_VERSION};
use std::path::Path;
use std::process::Command;

fn hillspec(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hillspec"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("HILLSPEC_THREADS", "2")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn report(dir: &Path, name: &str) -> Report {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn selftest_passes_on_the_free_operator() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = hillspec(d.path(), &["selftest", "--seed", "7"]);
    assert_eq!(code, 0, "{stdout}");
    let r = report(d.path(), "selftest.json");
    assert!(r.passed && r.schema == SCHEMA_VERSION);
    assert!(r.checks.iter().all(|c| c.tolerance >= 0.0));
}

#[test]
fn forward_writes_schema_conformant_sigma() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = hillspec(d.path(), &["forward", "--potential", "mathieu:0.5", "--n-max", "6", "--band-points", "50"]);
    assert_eq!(code, 0);
    let s: SigmaFile = serde_json::from_str(&std::fs::read_to_string(d.path().join("sigma.json")).unwrap()).unwrap();
    assert_eq!(s.schema, SCHEMA_VERSION);
    assert_eq!(s.spectral.mu_seq.len(), 6);
    assert_eq!(s.spectral.lambda_seq.len(), 13);
    let band = std::fs::read_to_string(d.path().join("band.csv")).unwrap();
    assert_eq!(band.lines().count(), 2 + 50);
}

#[test]
fn corrupted_sigma_fails_admissibility() {
    let d = tempfile::tempdir().unwrap();
    hillspec(d.path(), &["forward", "--potential", "mathieu:0.5", "--n-max", "6", "--band-points", "5"]);
    let path = d.path().join("sigma.json");
    let mut s: SigmaFile = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let (a, b) = (s.spectral.edges[1], s.spectral.edges[2]);
    s.spectral.gaps[0].mu = b + 2.0 * (b - a);
    std::fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
    let (code, stdout) = hillspec(d.path(), &["verify-rhp", "--sigma", path.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (code, _) = hillspec(d.path(), &["products", "--potential", "mathieu:0.1", "--seed", "3", "--points", "6"]);
        assert_eq!(code, 0);
    }
    for f in ["products.json", "residual.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn trajectory_rows_are_snapshots_times_gaps() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = hillspec(
        d.path(),
        &["evolve", "--potential", "lame2:0.5", "--t-end", "0.02", "--checkpoints", "2", "--n-gaps", "3"],
    );
    assert_eq!(code, 0, "{stdout}");
    let csv = std::fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    // header comment + header + 3 snapshots (t = 0 and 2 checkpoints) × 2 open gaps
    assert_eq!(csv.lines().count(), 2 + 3 * 2, "{csv}");
}

#[test]
fn theta_and_periodicity_commands() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = hillspec(d.path(), &["theta", "--edges", "0,1,2", "--x-grid", "0:3:7", "--t", "0.1"]);
    assert_eq!(code, 0, "{stdout}");
    let (code, _) = hillspec(d.path(), &["periodicity", "--edges", "0,1,2"]);
    assert_eq!(code, 0);
    let r = report(d.path(), "periodicity.json");
    assert!(r.data["period"].as_f64().is_some());
    let (code, _) = hillspec(d.path(), &["periodicity", "--edges", "0,0.7,1.9,2.4,4.1"]);
    assert_eq!(code, 0);
    assert!(report(d.path(), "periodicity.json").data["period"].is_null());
}

#[test]
fn bad_configuration_exits_with_error() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = hillspec(d.path(), &["selftest", "--tol-jump", "-1"]);
    assert_eq!(code, 2);
    let (code, _) = hillspec(d.path(), &["floquet", "--potential", "nope"]);
    assert_eq!(code, 2);
}
