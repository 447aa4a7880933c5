//! Exit codes and output files of the `crowd` commands, run in-process.

use std::fs;
use std::path::Path;

use crowd_cli::run;

fn small(cmd: &str, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "crowd".to_string(),
        cmd.to_string(),
        "--config".into(),
        "corridor".into(),
        "--out".into(),
        out.display().to_string(),
        "--set".into(),
        "grid.nx=16".into(),
        "--set".into(),
        "grid.ny=8".into(),
        "--set".into(),
        "model.horizon=0.06".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    run(args)
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .count()
}

#[test]
fn validate_config_succeeds_on_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small("validate-config", dir.path(), &[]), 0);
    assert!(dir.path().join("validation.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn psweep_writes_one_row_per_exponent() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small("p-sweep", dir.path(), &[]), 0);
    // header plus five exponents
    assert_eq!(data_rows(&dir.path().join("psweep.csv")), 6);
}

#[test]
fn evolve_writes_snapshots_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small("evolve", dir.path(), &[]), 0);
    assert!(dir.path().join("ledger.csv").exists());
    let snaps = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("u_")
        })
        .count();
    assert!(snaps >= 2);
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "crowd",
        "evolve",
        "--config",
        "/nonexistent/nothing.cfg",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    assert_eq!(run(args), 3);
}

#[test]
fn bad_override_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small("evolve", dir.path(), &["--set", "model.p=1.5"]), 1);
}

#[test]
fn unknown_flag_is_a_validation_error() {
    assert_eq!(run(["crowd", "evolve", "--bogus"]), 1);
}
