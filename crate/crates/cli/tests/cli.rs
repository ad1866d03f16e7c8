//! End-to-end CLI tests: exit codes, determinism, pipeline equality
//! between `bench` and the individual subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hypobench")
}

/// Tiny but non-degenerate run: two 30-day seasons, four small models.
fn tiny_config(out_dir: &Path) -> String {
    format!(
        r#"
seed = 11
output_dir = "{}"

[data]
source = "synthetic"

[data.synthetic]
n_cells = 16
n_days = 60
hypoxia_base_rate = 0.15
land_fraction = 0.1
depth_bin_count = 2
seasons = [
    {{ year = 2019, month_start = 6, month_end = 6 }},
    {{ year = 2020, month_start = 6, month_end = 6 }},
]

[split]
test_periods = [{{ start = "2020-06-01", end = "2020-06-30" }}]

[resample]
use_smote = true
k_neighbors = 3

[train]
epochs = 1
batch_size = 128

[models]
enabled = ["bilstm", "tcn", "medformer", "sttransformer"]

[models.bilstm]
hidden = 8

[models.tcn]
channels = 8

[models.medformer]
model_dim = 8
heads = 2

[models.sttransformer]
model_dim = 8
heads = 2
"#,
        out_dir.display()
    )
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bench_emits_reports_and_full_comparison_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_config(&out_dir));
    run_ok(&["--config", cfg.to_str().unwrap(), "bench"]);

    let reports: Vec<_> = fs::read_dir(out_dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".txt"))
        .collect();
    assert_eq!(reports.len(), 4, "one text report per architecture: {reports:?}");

    let matrix = fs::read_to_string(out_dir.join("compare/2020-06-01_2020-06-30_mcnemar.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 6, "header + C(4,2) pairs:\n{matrix}");
    assert!(out_dir.join("compare/2020-06-01_2020-06-30_mcnemar.svg").exists());
    assert!(out_dir.join("manifest.toml").exists());
}

#[test]
fn same_seed_training_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_config(&out_dir));
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "synth"]);
    run_ok(&["--config", cfg, "prepare"]);

    run_ok(&["--config", cfg, "train", "--model", "bilstm", "--seed", "7"]);
    let first = fs::read(out_dir.join("models/bilstm.ckpt")).unwrap();
    run_ok(&["--config", cfg, "train", "--model", "bilstm", "--seed", "7"]);
    let second = fs::read(out_dir.join("models/bilstm.ckpt")).unwrap();
    assert_eq!(first, second, "checkpoints must be byte-identical");

    run_ok(&["--config", cfg, "train", "--model", "bilstm", "--seed", "8"]);
    let third = fs::read(out_dir.join("models/bilstm.ckpt")).unwrap();
    assert_ne!(first, third, "a different seed must change the checkpoint");
}

#[test]
fn evaluate_before_train_is_a_usage_error_naming_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny_config(&out_dir));
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "synth"]);
    run_ok(&["--config", cfg, "prepare"]);
    let out = run(&["--config", cfg, "evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bilstm.ckpt"), "stderr: {stderr}");
    assert!(stderr.contains("train"), "stderr: {stderr}");
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "epochs = \"many\"\nnot really toml [");
    let out = run(&["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let body = format!(
        "output_dir = \"{}\"\n[data]\nsource = \"file\"\npath = \"{}\"\n",
        out_dir.display(),
        dir.path().join("nope.csv").display()
    );
    let cfg = write_config(dir.path(), &body);
    let out = run(&["--config", cfg.to_str().unwrap(), "prepare"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn output_dir_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let configured = dir.path().join("configured");
    let overridden = dir.path().join("overridden");
    let cfg = write_config(dir.path(), &tiny_config(&configured));
    let out = Command::new(bin())
        .args(["--config", cfg.to_str().unwrap(), "synth"])
        .env("HYPOBENCH_OUTPUT_DIR", &overridden)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(overridden.join("hindcast.csv").exists());
    assert!(!configured.exists());
}

/// Byte map of every file under a run dir, with train logs reduced to
/// their deterministic columns (seconds are wall time).
fn tree_fingerprint(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let bytes = if rel.starts_with("logs/") {
                let text = fs::read_to_string(&path).unwrap();
                text.lines()
                    .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes()
            } else {
                fs::read(&path).unwrap()
            };
            map.insert(rel, bytes);
        }
    }
    map
}

#[test]
fn bench_equals_the_subcommands_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = dir.path().join("a.toml");
    let cfg_b = dir.path().join("b.toml");
    fs::write(&cfg_a, tiny_config(&out_a)).unwrap();
    fs::write(&cfg_b, tiny_config(&out_b)).unwrap();

    run_ok(&["--config", cfg_a.to_str().unwrap(), "bench"]);
    for step in ["synth", "prepare", "train", "evaluate", "compare"] {
        run_ok(&["--config", cfg_b.to_str().unwrap(), step]);
    }

    let a = tree_fingerprint(&out_a);
    let b = tree_fingerprint(&out_b);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "same file sets"
    );
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "file {name} differs between bench and subcommands");
    }
}
