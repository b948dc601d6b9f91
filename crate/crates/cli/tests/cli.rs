use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopsync"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn runs_with_overrides_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let status = bin()
        .arg("--config")
        .arg(config("reference-random.toml"))
        .arg("--out")
        .arg(&out)
        .args(["--trials", "1", "--seed", "3", "--algorithm", "vmp"])
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["rmse.csv", "cdf.csv", "comm.json", "trace.csv", "slots.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let comm = std::fs::read_to_string(out.join("comm.json")).unwrap();
    assert!(comm.contains("\"vmp\""));
    assert!(comm.contains("\"trials\": 1"));
}

#[test]
fn missing_config_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(tmp.path().join("nope.toml"))
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn invalid_config_fails_with_field_name() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("reference-random.toml")).unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, text.replace("d_max = 20.0", "d_max = 0.0")).unwrap();
    let out = bin().arg("--config").arg(&path).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_max"));
}

#[test]
fn unknown_algorithm_is_rejected() {
    let out = bin()
        .arg("--config")
        .arg(config("reference-random.toml"))
        .args(["--algorithm", "ekf"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
