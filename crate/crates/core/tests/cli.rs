use std::path::{Path, PathBuf};

use imputebench::harness::cli::main_with_args;
use imputebench::harness::{ExperimentConfig, ExperimentTask};
use imputebench::Error;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("imputebench").chain(args.iter().copied()))
}

/// Small regression config over the bundled movielens sample.
fn write_config(dir: &Path, imputers: &str) -> PathBuf {
    let text = format!(
        r#"
dataset = "{}"
schema = "{}"
task = "regression"
label = "Rating"
drop_columns = ["Timestamp"]
missing_p = 0.1
imputers = {imputers}
embedding_dim = 4
hidden_layers = [8]
learning_rate = 0.02
epochs = 2
batch_size = 64
"#,
        data("movielens_mini.csv").display(),
        data("movielens_mini.schema.toml").display()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "run",
            "--config",
            "/nonexistent/exp.toml",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
    assert_eq!(run(&["run", "--out", out.to_str().unwrap()]), 1);
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["run", "--bogus-flag"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn unknown_imputer_names_the_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["mean", "bogus"]"#);
    let err = ExperimentConfig::from_file(&cfg).unwrap_err();
    match err {
        Error::Config(msg) => assert!(msg.contains("bogus"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn staged_equals_fused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["deletion", "mean", "llm"]"#);
    let cfg = cfg.to_str().unwrap();
    let staged = dir.path().join("staged");
    let fused = dir.path().join("fused");
    for stage in ["inject", "impute", "train", "evaluate"] {
        assert_eq!(
            run(&[stage, "--config", cfg, "--out", staged.to_str().unwrap()]),
            0,
            "{stage}"
        );
    }
    assert_eq!(
        run(&["run", "--config", cfg, "--out", fused.to_str().unwrap()]),
        0
    );
    for file in [
        "injected.csv",
        "ledger.json",
        "imputed_mean.csv",
        "imputed_llm.csv",
        "model_llm.json",
        "results.jsonl",
        "report.md",
        "report.csv",
    ] {
        let a = std::fs::read(staged.join(file)).unwrap();
        let b = std::fs::read(fused.join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn report_rerenders_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["zero", "mean"]"#);
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    std::fs::remove_file(out.join("report.md")).unwrap();
    assert_eq!(
        run(&["report", "--out", out.to_str().unwrap(), "--format", "csv"]),
        0
    );
    assert_eq!(std::fs::read_to_string(out.join("report.md")).unwrap(), md);
    assert!(md.starts_with("| Imputer | MAE ↓ | MSE ↓ | RMSE ↓ |"));
    assert_eq!(
        run(&["report", "--out", out.to_str().unwrap(), "--format", "pdf"]),
        1
    );
}

#[test]
fn seed_override_changes_injection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"["mean"]"#);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        run(&[
            "inject",
            "--config",
            cfg,
            "--out",
            a.to_str().unwrap(),
            "--seed",
            "5"
        ]),
        0
    );
    assert_eq!(
        run(&[
            "inject",
            "--config",
            cfg,
            "--out",
            b.to_str().unwrap(),
            "--seed",
            "6"
        ]),
        0
    );
    assert_ne!(
        std::fs::read(a.join("ledger.json")).unwrap(),
        std::fs::read(b.join("ledger.json")).unwrap()
    );
}

#[test]
fn zero_missingness_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"["deletion", "zero", "mean", "knn", "iterative", "llm"]"#,
    );
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("missing_p = 0.1", "missing_p = 0.0");
    let cfg = ExperimentConfig::from_toml(&text, dir.path()).unwrap();
    assert_eq!(cfg.task, ExperimentTask::Regression);
    let results = imputebench::harness::run_experiment(&cfg, dir.path().join("out")).unwrap();
    assert_eq!(results.len(), 6);
    for r in &results[1..] {
        assert_eq!(r.metrics, results[0].metrics, "{}", r.imputer.as_str());
    }
}

#[test]
fn bundled_configs_parse() {
    for name in [
        "movielens_regression.toml",
        "movielens_ranking.toml",
        "adclick_classification.toml",
    ] {
        ExperimentConfig::from_file(data(name)).unwrap();
    }
}

#[test]
fn every_task_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    for (name, keys) in [
        (
            "adclick_classification.toml",
            vec!["precision", "recall", "f1"],
        ),
        (
            "movielens_ranking.toml",
            vec!["R@3", "R@5", "R@10", "N@3", "N@5", "N@10"],
        ),
    ] {
        let text = std::fs::read_to_string(data(name))
            .unwrap()
            .replace("epochs = 10", "epochs = 1")
            .replace(
                r#"["deletion", "zero", "mean", "knn", "iterative", "llm"]"#,
                r#"["deletion", "mean", "llm"]"#,
            );
        let cfg = ExperimentConfig::from_toml(&text, &data("")).unwrap();
        let results = imputebench::harness::run_experiment(&cfg, dir.path().join(name)).unwrap();
        assert_eq!(results.len(), 3);
        for r in &results {
            assert_eq!(
                r.metrics.keys().map(String::as_str).collect::<Vec<_>>(),
                keys
            );
            for v in r.metrics.values() {
                let v = v.unwrap();
                assert!((0.0..=1.0).contains(&v), "{name}: {v}");
            }
            if cfg.task == ExperimentTask::SingleClassification {
                assert_eq!(r.per_class.as_ref().unwrap().len(), 6);
            }
        }
    }
}
