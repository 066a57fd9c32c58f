use std::path::Path;
use std::process::{Command, Output};

use slm::cli::ManifestFile;

fn slm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slm"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("SLM_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = ["--features", "30", "--samples", "200", "--L", "3"];

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let mut args = vec!["synth", "--seed", "4", "--name", name];
        args.extend(SMALL);
        let o = slm(dir.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let m = ManifestFile::load(&dir.path().join("a.manifest.json")).unwrap();
    assert!(m.verify().unwrap());
    assert_eq!(m.manifest.seeds, vec![4]);
}

#[test]
fn train_with_every_feature_targeted_keeps_them_all() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--name", "all", "--target-features", "30", "--epochs", "2", "--batch", "64"];
    args.extend(SMALL);
    let o = slm(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));

    let features = std::fs::read_to_string(dir.path().join("all.features.tsv")).unwrap();
    let manifest = ManifestFile::load(&dir.path().join("all.manifest.json")).unwrap();
    assert!(manifest.verify().unwrap());
    let mut lines = features.lines();
    assert_eq!(lines.next().unwrap(), format!("# manifest sha256={}", manifest.sha256));
    let rows: Vec<&str> = lines.skip(1).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.ends_with("true")), "{features}");

    for f in ["all.metrics.tsv", "all.loss.tsv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with(&format!("# manifest sha256={}", manifest.sha256)));
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synth", "--name", "env"];
    args.extend(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_slm"))
        .args(&args)
        .env("SLM_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("env.csv").is_file());
}

#[test]
fn failures_print_one_error_line() {
    let dir = tempfile::tempdir().unwrap();

    let o = slm(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=usage"), "{err}");

    let o = slm(dir.path(), &["train", "--data", "/nonexistent/x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("kind=invalid_input") && err.contains("/nonexistent/x.csv"), "{err}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "learning_rte = 0.1\n").unwrap();
    let o = slm(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("kind=config") && err.contains("learning_rte"), "{err}");

    let o = slm(dir.path(), &["--help"]);
    assert!(o.status.success());
}
