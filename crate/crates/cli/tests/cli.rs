use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"

[scenario]
tilt_t_fault = 30.0

[training]
belt_t_fault = [30.0]
tilt_deg = [2.0]

[test]
belt_t_fault = [33.0]
tilt_deg = [1.8]

[ml.windows]
horizon = 10.0

[ml.search]
c_grid = [10.0]
sigma_factors = [1.0]
include_linear = false
folds = 3
"#;

fn whfdie(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("small.toml");
    fs::write(&config, SMALL).unwrap();
    Command::new(env!("CARGO_BIN_EXE_whfdie"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap()
}

#[test]
fn evaluate_without_model_fails_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = whfdie(dir.path(), &["evaluate", "--mode", "hybrid"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("evaluate"), "{err}");
    assert!(err.contains("models/hybrid.json"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "nmae = \"typo\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_whfdie")).args(["config", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nmae"));
}

#[test]
fn gen_data_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("runs/small/features");
    let snapshot = || -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(&features)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let out = whfdie(dir.path(), &["gen-data", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = snapshot();
    assert_eq!(first.len(), 4);
    assert!(whfdie(dir.path(), &["gen-data", "--seed", "7"]).status.success());
    assert_eq!(snapshot(), first);
}

#[test]
fn config_prints_toml() {
    let out = Command::new(env!("CARGO_BIN_EXE_whfdie")).arg("config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("name = \"default\""));
    assert!(text.contains("[ml.search]"));
}
