use std::process::Command;

use reldiff::harness::export::from_json;
use reldiff::harness::EnsembleSummary;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_reldiff"));
    c.env_remove("RELDIFF_OUT");
    c
}

fn stdout(c: &mut Command) -> String {
    let out = c.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn deflection_csv() {
    let text = stdout(bin().args(["null", "deflection", "--rho", "1.2"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,psi,psi_closed_form"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 1.2);
    assert!((row[1] - row[2]).abs() < 1e-12);
    let sweep = stdout(bin().args(["null", "deflection", "--rho", "1.0", "--to", "1.1", "--step", "0.05"]));
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn classify_json() {
    let text = stdout(bin().args(["geodesic", "classify", "--a", "1.05", "--b", "6", "--r0", "20"]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.to_string().contains("Flyby") || v.to_string().contains("flyby"), "{v}");
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 3\nr0 = 1.4\nt0 = -2\nhorizon = 5\nmax_crossings = 2\nseed = 11\n").unwrap();
    let text = stdout(bin().args(["ensemble", "--config"]).arg(&cfg).args(["--n", "2", "--set", "seed=12", "--out", "-"]));
    let s: EnsembleSummary = from_json(&text).unwrap();
    assert_eq!(s.trajectories, 2);
    assert_eq!(s.config.seed, 12);
    assert_eq!(s.config.r0, 1.4);
    assert_eq!(s.config.max_crossings, Some(2));
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("RELDIFF_OUT", dir.path())
        .args(["ensemble", "--n", "1", "--r0", "1.4", "--t0", "-2", "--horizon", "3", "--max-crossings", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert!(!files.is_empty());
}

#[test]
fn bad_input_fails() {
    let out = bin().args(["geodesic", "classify", "--a", "1", "--b", "-1", "--r0", "3"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["ensemble", "--set", "nonsense=1", "--out", "-"]).output().unwrap();
    assert!(!out.status.success());
}
