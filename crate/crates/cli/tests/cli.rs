use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use graphcast::evaluation::parse_report_csv;
use graphcast_cli::RunManifest;

fn graphcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphcast"))
        .args(args)
        .env_remove("GRAPHCAST_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) {
    let o = graphcast(&["synth", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn clean_synthetic_data_has_no_removals() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let out = tmp.path().join("pre");
    let o = graphcast(&["preprocess", "--data-dir", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 removed"), "{}", stdout(&o));
    for f in ["SalesOrder.csv", "removal_report.csv", "normalization_stats.csv", "adjacency_normalized.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn mostly_zero_row_is_removed_as_low_quality() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let path = data.join("SalesOrder.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // 60% zeros in SYN004's row
    let cells: Vec<&str> = lines[5].split(',').collect();
    let n = cells.len() - 1;
    let zeros = (n * 6).div_ceil(10);
    let row: Vec<String> = std::iter::once(cells[0].to_string())
        .chain((0..n).map(|i| if i < zeros { "0".to_string() } else { cells[i + 1].to_string() }))
        .collect();
    lines[5] = row.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let out = tmp.path().join("pre");
    let o = graphcast(&["preprocess", "--data-dir", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("removal_report.csv")).unwrap();
    assert!(report.contains("SYN004,SalesOrder,LowQuality"), "{report}");
    assert!(stdout(&o).contains("removed SYN004"));
}

#[test]
fn missing_edge_file_is_fatal_and_named() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    fs::remove_file(data.join("Edges.csv")).unwrap();
    let o = graphcast(&["preprocess", "--data-dir", data.to_str().unwrap(), "--out", "unused"]);
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("edges"), "{}", stderr(&o));
}

#[test]
fn benchmark_writes_report_manifest_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 1, "batch_size": 32}"#).unwrap();
    let out = tmp.path().join("bench");
    let o = Command::new(env!("CARGO_BIN_EXE_graphcast"))
        .args(["benchmark", "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()])
        .args(["--epochs", "2", "--jobs", "3", "--format", "csv"])
        .env("GRAPHCAST_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(stdout(&o), csv);
    let report = parse_report_csv(&csv).unwrap();
    assert_eq!(report.rows.len(), 15);
    assert_eq!(report.failed_rows(), 0);

    let manifest = RunManifest::read(&out).unwrap();
    // flags override the config file, which overrides defaults
    assert_eq!(manifest.config.epochs, 2);
    assert_eq!(manifest.config.batch_size, 32);
    assert_eq!(manifest.seeds.len(), 5);
    assert_eq!(manifest.dataset_fingerprint.len(), 64);
    for rel in &manifest.outputs {
        assert!(out.join(rel).is_file(), "{rel}");
    }
    assert_eq!(fs::read_to_string(out.join("histories/SYN000_GCN.csv")).unwrap().lines().count(), 3);

    // re-render the saved CSV as markdown
    let o = graphcast(&["report", out.join("report.csv").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("| Product | Model | MSE | MAE |"));
}

#[test]
fn strict_mode_sets_distinct_exit_code_on_failed_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let base = [
        "benchmark", "--data-dir", data.to_str().unwrap(), "--epochs", "2", "--lr", "1e300",
        "--models", "MLP", "--products", "SYN000",
    ];
    let out = tmp.path().join("a");
    let o = graphcast(&[&base[..], &["--out", out.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAILED"));

    let out = tmp.path().join("b");
    let o = graphcast(&[&base[..], &["--out", out.to_str().unwrap(), "--strict"]].concat());
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn train_then_evaluate_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let params = tmp.path().join("params");
    let common = ["--data-dir", data.to_str().unwrap(), "--epochs", "3", "--product", "SYN002", "--model", "GCN"];
    let o = graphcast(&[&["train"], &common[..], &["--out", params.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let trained = stdout(&o);
    assert!(params.join("SYN002_GCN.bin").is_file());

    let o = graphcast(&[&["evaluate"], &common[..], &["--params-dir", params.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), trained);

    // parameters saved for the GCN do not fit an MLP
    let mlp: Vec<&str> = common.iter().map(|&s| if s == "GCN" { "MLP" } else { s }).collect();
    let o = graphcast(&[&["evaluate"], &mlp[..], &["--params-dir", params.to_str().unwrap()]].concat());
    assert!(!o.status.success());
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epoch": 3}"#).unwrap();
    let o = graphcast(&["benchmark", "--data-dir", ".", "--out", "x", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epoch"));
}
