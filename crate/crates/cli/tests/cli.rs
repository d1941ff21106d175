use std::path::Path;
use std::process::Command;

fn smcmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smcmc"))
}

fn config(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn linear_bench_prints_table_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kf");
    let res = smcmc()
        .args(["linear-bench", "--config"])
        .arg(config("linear_kf_oracle.toml"))
        .args(["--repeats", "2", "--sequential", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("SMCMC") && stdout.contains("M=2"), "{stdout}");
    assert!(out.join("table.csv").is_file());
    assert!(out.join("timing.csv").is_file());
}

#[test]
fn sw_config_is_rejected_by_linear_bench() {
    let res = smcmc().args(["linear-bench", "--config"]).arg(config("sw_known_ci.toml")).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("error:"));
}

#[test]
fn missing_config_fails_cleanly() {
    let res = smcmc().args(["diagnose", "--config", "/nonexistent/run.toml"]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("loading"));
}
