use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ivbma"))
}

fn roster_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/democracy_roster.toml")
}

fn simulate(dir: &Path) -> PathBuf {
    let data = dir.join("panel.csv");
    let status = bin()
        .args(["simulate", "--countries", "111", "--seed", "3", "--roster"])
        .arg(roster_path())
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());
    data
}

fn run(data: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--data")
        .arg(data)
        .arg("--roster")
        .arg(roster_path())
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn ivbma_run_writes_every_output_and_prints_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let out = tmp.path().join("out");
    let o = run(&data, &out, &["--iterations", "3000", "--burn-in", "500"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "report.txt",
        "first_stage.txt",
        "diagnostics.txt",
        "top_models.csv",
        "manifest.json",
        "draws_second_stage.csv",
        "draws_first_stage.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), report);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["method"], "ivbma");
}

#[test]
fn repeated_cli_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    for method in ["bma-mc3", "ivbma"] {
        let files: Vec<Vec<u8>> = ["a", "b"]
            .iter()
            .map(|tag| {
                let out = tmp.path().join(format!("{method}-{tag}"));
                let o = run(&data, &out, &["--method", method, "--iterations", "2000", "--burn-in", "200", "--seed", "9"]);
                assert!(o.status.success());
                fs::read(out.join("report.txt")).unwrap()
            })
            .collect();
        assert_eq!(files[0], files[1], "{method}");
    }
}

#[test]
fn seed_changes_the_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let reports: Vec<Vec<u8>> = ["1", "2"]
        .iter()
        .map(|seed| {
            let out = tmp.path().join(format!("seed-{seed}"));
            assert!(run(&data, &out, &["--method", "bma-mc3", "--iterations", "2000", "--burn-in", "200", "--seed", seed])
                .status
                .success());
            assert!(out.join("mc3_chain.csv").is_file());
            fs::read(out.join("report.txt")).unwrap()
        })
        .collect();
    assert_ne!(reports[0], reports[1]);
}

#[test]
fn exact_enumeration_refuses_the_full_candidate_set() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let o = run(&data, &tmp.path().join("out"), &["--method", "bma-exact"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[engine]"), "{err}");
}

#[test]
fn missing_data_file_fails_at_load() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&tmp.path().join("absent.csv"), &tmp.path().join("out"), &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[load]"));
}

#[test]
fn burn_in_must_be_shorter_than_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let o = run(&data, &tmp.path().join("out"), &["--iterations", "100", "--burn-in", "100"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let o = bin().args(["run", "--data", "a", "--roster", "b", "--method", "lasso"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
