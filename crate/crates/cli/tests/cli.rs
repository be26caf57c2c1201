use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/config.toml")
}

fn narrative(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrative"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NARRATIVE_EMBED_ENDPOINT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let out = narrative(&["all", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut expected = vec![
        "chains.csv".to_string(),
        "indices.csv".into(),
        "pairs.csv".into(),
    ];
    for kind in [
        "leading",
        "coincident",
        "lagging",
        "cumulative-leading",
        "cumulative-coincident",
        "cumulative-lagging",
    ] {
        expected.push(format!("correlation_{kind}.csv"));
        expected.push(format!("heatmap_{kind}.svg"));
        expected.push(format!("topk_{kind}.csv"));
    }
    expected.sort();
    assert_eq!(
        artifacts(dir.path()).into_keys().collect::<Vec<_>>(),
        expected
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let stages = manifest["stages"].as_object().unwrap();
    assert_eq!(stages.len(), 5);
    assert!(manifest["decay_note"].as_str().unwrap().contains("months"));
    assert_eq!(manifest["config"]["chain"]["threshold"], 0.5);

    let topk = std::fs::read_to_string(dir.path().join("topk_cumulative-lagging.csv")).unwrap();
    let header: Vec<&str> = topk.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..2], ["month", "di"]);
    assert_eq!(header.len(), 6);
    assert_eq!(topk.lines().count(), 25);
}

#[test]
fn worker_counts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let cfg = cfg.to_str().unwrap();
    for workers in ["1", "8"] {
        let out = narrative(
            &["all", "--config", cfg, "--workers", workers],
            &dir.path().join(workers),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        artifacts(&dir.path().join("1")),
        artifacts(&dir.path().join("8"))
    );
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let cfg = cfg.to_str().unwrap();
    let base = narrative(&["extract", "--config", cfg], dir.path());
    assert!(base.status.success());
    let out = narrative(
        &["chain", "--config", cfg, "--threshold", "0.99"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["chain"]["threshold"], 0.99);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = narrative(&["chain"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pairs.csv"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "threshold = \"high\"\n").unwrap();
    let out = narrative(&["all", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = narrative(&["all", "--threshold", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = narrative(&["extract", "--provider", "external"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(2),
        "external provider without an endpoint"
    );
}

#[test]
fn unreachable_provider_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let cfg = cfg.to_str().unwrap();
    assert!(narrative(&["extract", "--config", cfg], dir.path())
        .status
        .success());
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let out = Command::new(env!("CARGO_BIN_EXE_narrative"))
        .args(["chain", "--config", cfg, "--provider", "external", "--out"])
        .arg(dir.path())
        .env(
            "NARRATIVE_EMBED_ENDPOINT",
            format!("http://127.0.0.1:{port}"),
        )
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unwritable_output_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = config();
    let out = narrative(
        &["extract", "--config", cfg.to_str().unwrap()],
        &blocker.join("out"),
    );
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
