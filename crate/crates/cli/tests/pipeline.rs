use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use unidim::io::npy::write_matrix;
use unidim::io::DType;

const SMALL: [&str; 13] = [
    "fixtures",
    "--models",
    "4",
    "--categories",
    "8",
    "--per-category",
    "5",
    "--rank",
    "4",
    "--seeds",
    "2",
    "--permutations",
    "50",
];

fn unidim(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unidim"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env_remove("UNIDIM_WORKSPACE")
        .output()
        .expect("binary runs")
}

fn ok(ws: &Path, args: &[&str]) -> String {
    let out = unidim(ws, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &SMALL);
    dir
}

/// Every file under the workspace except the log, with its bytes.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "log.jsonl" {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn reports(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    snapshot(&root.join("report"))
}

#[test]
fn stage_before_its_upstream_names_the_missing_stage() {
    let ws = small_fixture();
    let out = unidim(ws.path(), &["universality"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"factorize\""), "{err}");

    ok(ws.path(), &["kernel"]);
    let out = unidim(ws.path(), &["content"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("factorize"));
}

#[test]
fn rerun_skips_every_stage_and_leaves_outputs_identical() {
    let ws = small_fixture();
    let first = ok(ws.path(), &["all"]);
    assert!(first.lines().all(|l| l.contains("skipped")), "{first}");
    assert_eq!(first.lines().count(), 7);
    let before = snapshot(ws.path());

    let second = ok(ws.path(), &["all"]);
    for line in second.lines() {
        assert!(line.contains(" 0 ran"), "{line}");
    }
    assert_eq!(snapshot(ws.path()), before);

    let dims = std::fs::read_to_string(ws.path().join("report/dimensions.csv")).unwrap();
    assert_eq!(dims.lines().count(), 1 + 4 * 4);
    let models = std::fs::read_to_string(ws.path().join("report/models.csv")).unwrap();
    assert_eq!(models.lines().count(), 1 + 4);
}

#[test]
fn two_workspaces_give_identical_reports() {
    let a = small_fixture();
    let b = small_fixture();
    ok(a.path(), &["--jobs", "1", "all"]);
    ok(b.path(), &["--jobs", "3", "all"]);
    let (ra, rb) = (reports(a.path()), reports(b.path()));
    assert!(ra.len() >= 5);
    assert_eq!(ra, rb);
}

#[test]
fn edited_upstream_output_is_a_hash_mismatch() {
    let ws = small_fixture();
    ok(ws.path(), &["kernel"]);
    ok(ws.path(), &["factorize"]);
    let central = ws.path().join("factorize/model00/central.npy");
    let mut bytes = std::fs::read(&central).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&central, bytes).unwrap();

    let out = unidim(ws.path(), &["universality"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));

    // Refitting restores exactly the recorded bytes.
    assert_eq!(ok(ws.path(), &["factorize"]).trim(), "factorize: 1 ran, 3 skipped");
    ok(ws.path(), &["universality"]);
}

#[test]
fn deleting_one_embedding_refits_only_that_model() {
    let ws = small_fixture();
    ok(ws.path(), &["all"]);
    std::fs::remove_file(ws.path().join("factorize/model01/central.npy")).unwrap();

    let out = unidim(ws.path(), &["universality"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("factorize"));

    assert_eq!(ok(ws.path(), &["factorize"]).trim(), "factorize: 1 ran, 3 skipped");
    assert_eq!(ok(ws.path(), &["universality"]).trim(), "universality: 0 ran, 1 skipped");
}

#[test]
fn force_and_seed_override_rerun_stages() {
    let ws = small_fixture();
    ok(ws.path(), &["kernel"]);
    assert_eq!(ok(ws.path(), &["kernel"]).trim(), "kernel: 0 ran, 4 skipped");
    assert_eq!(ok(ws.path(), &["--force", "kernel"]).trim(), "kernel: 4 ran, 0 skipped");

    ok(ws.path(), &["factorize"]);
    assert_eq!(ok(ws.path(), &["--seed", "7", "factorize"]).trim(), "factorize: 4 ran, 0 skipped");
    let effective = std::fs::read_to_string(ws.path().join("config.effective.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&effective).unwrap();
    assert_eq!(v["rng_seed"], 7);
}

#[test]
fn changing_a_config_key_reruns_dependent_stages() {
    let ws = small_fixture();
    ok(ws.path(), &["kernel"]);
    let cfg_path = ws.path().join("config.json");
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["alpha_grid"] = serde_json::json!([0.3, 0.6]);
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    assert_eq!(ok(ws.path(), &["kernel"]).trim(), "kernel: 4 ran, 0 skipped");
    assert!(ws.path().join("kernel/model00/alpha01.npy").exists());
    assert!(!ws.path().join("kernel/model00/alpha02.npy").exists());
}

#[test]
fn degenerate_features_exit_with_numerical_code() {
    let ws = small_fixture();
    let constant = Array2::from_elem((40, 6), 1.5);
    write_matrix(&ws.path().join("inputs/features/model02.npy"), &constant, DType::F4).unwrap();
    let out = unidim(ws.path(), &["kernel"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate bandwidth"));
}

#[test]
fn validation_errors_exit_with_code_two() {
    let ws = small_fixture();
    std::fs::write(ws.path().join("bad.json"), r#"{"rnak": 3}"#).unwrap();
    let out = unidim(ws.path(), &["--config", ws.path().join("bad.json").to_str().unwrap(), "kernel"]);
    assert_eq!(out.status.code(), Some(2));

    // Feature rows that disagree with the image index.
    write_matrix(&ws.path().join("inputs/features/model01.npy"), &Array2::from_elem((7, 3), 0.5), DType::F4).unwrap();
    let out = unidim(ws.path(), &["kernel"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_unidim"))
        .arg("kernel")
        .env_remove("UNIDIM_WORKSPACE")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn workspace_can_come_from_the_environment() {
    let ws = small_fixture();
    let out = Command::new(env!("CARGO_BIN_EXE_unidim"))
        .arg("kernel")
        .env("UNIDIM_WORKSPACE", ws.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "kernel: 4 ran, 0 skipped");
    let log = std::fs::read_to_string(ws.path().join("log.jsonl")).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}
