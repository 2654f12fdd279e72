//! End-to-end runs of the `nhash` binary on synthetic data.

use std::path::Path;
use std::process::Command;

fn nhash(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_nhash")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "nhash {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const DATA: [&str; 6] = ["--dataset", "random_pixels", "--train-size", "120", "--test-size", "40"];

fn args<'a>(head: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(&DATA).chain(rest).copied().collect()
}

#[test]
fn train_encode_metrics_diameter() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.nhl");
    let m = model.to_str().unwrap();
    nhash(&args(&["train", "--out", m], &["--epochs", "2", "--width", "6", "--seed", "1"]));
    assert!(model.exists());

    let codes = nhash(&args(&["encode", "-m", m], &[]));
    let lines: Vec<&str> = codes.lines().filter(|l| !l.is_empty()).collect();
    assert!(lines.len() >= 40);
    let last = lines.last().unwrap().rsplit(',').next().unwrap();
    assert_eq!(last.len(), 6);
    assert!(last.chars().all(|c| c == '0' || c == '1'));

    let metrics = nhash(&args(&["metrics", "-m", m], &["--seed", "1"]));
    assert!(metrics.contains("redundancy_test,"), "{metrics}");
    assert!(metrics.contains("knn_test,"), "{metrics}");

    let hist = dir.path().join("h.csv");
    let diam = nhash(&args(
        &["diameter", "-m", m],
        &["--diameter-anchors", "10", "--histogram", hist.to_str().unwrap()],
    ));
    assert!(!diam.is_empty());
    assert!(hist.exists());
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = out.to_str().unwrap();
    let sweep = [
        "--factor", "width", "--values", "3,5", "--seeds", "0", "--checkpoint-epochs", "0,1",
    ];
    nhash(&args(&["sweep", "--out", o], &sweep));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 5);

    nhash(&args(&["sweep", "--out", o], &sweep));
    assert_eq!(std::fs::read_to_string(out.join("records.csv")).unwrap(), records);

    let rep = dir.path().join("report");
    nhash(&["report", "--records", o, "--out", rep.to_str().unwrap()]);
    for f in ["records.csv", "summary.csv", "regimes.csv", "regime_counts.csv"] {
        assert!(Path::new(&rep.join(f)).exists(), "{f}");
    }
}
