use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use unidim::io::npy::{read_matrix, write_matrix};
use unidim::io::{
    load_feature_matrix, load_manifest, meta_path, Artifact, DType, FeatureMatrix, RunConfig, Table,
};
use unidim::kernel::{rbf_similarity, SimilarityMatrix};
use unidim::rng::task_rng;
use unidim::snmf::Embedding;
use unidim::universality::UniversalityReport;
use unidim::Error;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// The values numpy wrote: `arange(40).reshape(10, 4) * 0.37 - 3.1`.
fn numpy_reference() -> Array2<f64> {
    Array2::from_shape_fn((10, 4), |(i, j)| (i * 4 + j) as f64 * 0.37 - 3.1)
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = task_rng(seed, &[]);
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn reads_numpy_written_f8_exactly() {
    let (m, dtype) = read_matrix(&data("numpy_f8_10x4.npy")).unwrap();
    assert_eq!(dtype, DType::F8);
    let expected = numpy_reference();
    let max_diff = (&m - &expected).iter().fold(0.0f64, |a, d| a.max(d.abs()));
    assert_eq!(max_diff, 0.0);
}

#[test]
fn reads_numpy_written_f4_exactly() {
    let fm = load_feature_matrix(&data("numpy_f4_10x4.npy"), "np", None, DType::F8).unwrap();
    assert_eq!(fm.dtype, DType::F4);
    assert_eq!((fm.n_images(), fm.dim()), (10, 4));
    let expected = numpy_reference().mapv(|v| v as f32 as f64);
    assert_eq!(fm.values, expected);
}

#[test]
fn rewritten_numpy_file_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (name, dtype) in [("numpy_f8_10x4.npy", DType::F8), ("numpy_f4_10x4.npy", DType::F4)] {
        let (m, _) = read_matrix(&data(name)).unwrap();
        let out = dir.path().join(name);
        write_matrix(&out, &m, dtype).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(data(name)).unwrap(), "{name}");
    }
}

#[test]
fn embedding_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = random_matrix(20, 4, 1).mapv(f64::abs);
    let mut emb = Embedding::from_loadings("resnet50", w).unwrap();
    emb.seed = 3;
    emb.alpha = 0.4;
    emb.objective = 1.25;
    emb.explained_variance = 0.875;
    emb.iterations = 17;
    emb.converged = false;
    emb.trace = vec![4.0, 2.0, 1.25];

    let path = dir.path().join("emb.npy");
    emb.save(&path, DType::F8).unwrap();
    assert!(meta_path(&path).is_file());
    assert_eq!(Embedding::load(&path).unwrap(), emb);

    // At f4 the loadings come back rounded to single precision and nothing else changes.
    let path4 = dir.path().join("emb4.npy");
    emb.save(&path4, DType::F4).unwrap();
    let back = Embedding::load(&path4).unwrap();
    assert_eq!(back.w, emb.w.mapv(|v| v as f32 as f64));
    assert_eq!(back.trace, emb.trace);
}

#[test]
fn embedding_with_unset_metadata_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let emb = Embedding::from_loadings("planted", random_matrix(6, 2, 2).mapv(f64::abs)).unwrap();
    let path = dir.path().join("e.npy");
    emb.save(&path, DType::F8).unwrap();
    let back = Embedding::load(&path).unwrap();
    assert!(back.alpha.is_nan() && back.objective.is_nan());
    assert_eq!(back.w, emb.w);
}

#[test]
fn similarity_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fm = FeatureMatrix::anonymous("vit", random_matrix(12, 3, 4)).unwrap();
    let s = rbf_similarity(&fm, 0.5).unwrap();
    let path = dir.path().join("s.npy");
    s.save(&path, DType::F8).unwrap();
    assert_eq!(SimilarityMatrix::load(&path).unwrap(), s);
}

fn report(dims: usize) -> UniversalityReport {
    let mut rng = task_rng(9, &[]);
    let raw: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    let thresholds: Vec<f64> = (0..dims).map(|_| rng.random::<f64>() * 0.5).collect();
    let calibrated: Vec<f64> = raw
        .iter()
        .zip(&thresholds)
        .map(|(s, a)| ((s - a) / (1.0 - a)).max(0.0))
        .collect();
    let model_mean = calibrated.iter().sum::<f64>() / dims as f64;
    UniversalityReport {
        model_id: "clip-b32".into(),
        raw,
        thresholds,
        calibrated,
        model_mean,
        ceiling: Some(vec![0.9; dims]),
        zero_columns: vec![],
    }
}

#[test]
fn report_csv_has_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let rep = report(50);
    let path = dir.path().join("u.csv");
    rep.save(&path, DType::F4).unwrap();

    let t = Table::read_csv(&path).unwrap();
    assert_eq!(t.columns, ["model_id", "dim", "raw", "threshold", "calibrated"]);
    assert_eq!(t.rows.len(), 50);
    assert_eq!(UniversalityReport::load(&path).unwrap(), rep);
}

#[test]
fn table_round_trip_with_quoting() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(["name", "value"]);
    t.push(vec!["a, with comma".into(), "1.5".into()]);
    t.push(vec!["quote \"x\"".into(), String::new()]);
    let path = dir.path().join("t.csv");
    t.save(&path, DType::F8).unwrap();
    assert_eq!(Table::load(&path).unwrap(), t);
}

fn tamper_version(path: &Path, version: &str) {
    let meta = meta_path(path);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&meta).unwrap()).unwrap();
    v["schema_version"] = version.into();
    std::fs::write(&meta, v.to_string()).unwrap();
}

#[test]
fn tampered_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();

    let emb_path = dir.path().join("e.npy");
    Embedding::from_loadings("m", random_matrix(5, 2, 5).mapv(f64::abs))
        .unwrap()
        .save(&emb_path, DType::F8)
        .unwrap();
    tamper_version(&emb_path, "0");
    match Embedding::load(&emb_path) {
        Err(Error::SchemaVersion { found, .. }) => assert_eq!(found, "0"),
        other => panic!("expected a version error, got {other:?}"),
    }

    let rep_path = dir.path().join("u.csv");
    report(3).save(&rep_path, DType::F8).unwrap();
    tamper_version(&rep_path, "0");
    assert!(matches!(UniversalityReport::load(&rep_path), Err(Error::SchemaVersion { .. })));
}

#[test]
fn wrong_artifact_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.npy");
    Embedding::from_loadings("m", random_matrix(5, 2, 6).mapv(f64::abs))
        .unwrap()
        .save(&path, DType::F8)
        .unwrap();
    assert!(matches!(SimilarityMatrix::load(&path), Err(Error::Format(_))));
}

#[test]
fn manifest_with_162_stubs_keeps_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let classes = ["convolutional", "transformer", "mlp-mixer", "hybrid"];
    let mut ids: Vec<String> = (0..162).map(|i| format!("model-{i:03}")).collect();
    ids.shuffle(&mut task_rng(11, &[]));
    let entries: Vec<String> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            std::fs::write(dir.path().join(format!("{id}.npy")), b"").unwrap();
            let top1 = if i % 3 == 0 { r#", "imagenet_top1": 0.76"# } else { "" };
            format!(
                r#"{{"model_id": "{id}", "architecture_class": "{}", "family": "fam{}",
                    "objective": "classification", "training_data": "imagenet-1k",
                    "features": "{id}.npy"{top1}}}"#,
                classes[i % 4],
                i % 7
            )
        })
        .collect();
    let path = dir.path().join("manifest.json");
    std::fs::write(
        &path,
        format!(r#"{{"schema_version": "1", "models": [{}]}}"#, entries.join(",\n")),
    )
    .unwrap();

    let m = load_manifest(&path).unwrap();
    assert_eq!(m.len(), 162);
    assert_eq!(m.ids().collect::<Vec<_>>(), ids.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(m.models[0].imagenet_top1, Some(0.76));
    assert_eq!(m.models[1].imagenet_top1, None);
}

#[test]
fn run_config_defaults() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.rank, 50);
    assert_eq!(cfg.seeds, 5);
    assert_eq!(cfg.alpha_grid, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0]);
    assert_eq!(cfg.permutations, 1000);
    assert_eq!(cfg.null_percentile, 0.95);
    assert_eq!(cfg.cv_folds, 5);
    assert_eq!(cfg.ridge_grid.len(), 20);
    assert!((cfg.ridge_grid[0] - 1e-2).abs() < 1e-15);
    assert!((cfg.ridge_grid[19] - 1e6).abs() < 1e-6);
    assert_eq!(cfg.dtype(), DType::F4);
}

#[test]
fn config_rejects_unknown_keys_and_bad_grids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"rnak": 8}"#).unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::InvalidInput(_))));
    std::fs::write(&path, r#"{"alpha_grid": [0.5, 0.4]}"#).unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::InvalidInput(_))));
    std::fs::write(&path, r#"{"rank": 8, "manifest": "m.json"}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.rank, 8);
    assert_eq!(cfg.manifest.unwrap(), dir.path().join("m.json"));
}

#[test]
fn image_order_law() {
    // Permuting rows and ids together permutes S symmetrically.
    for seed in 0..5u64 {
        let x = random_matrix(10, 5, 100 + seed);
        let ids: Vec<String> = (0..10).map(|i| format!("img{i}")).collect();
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut task_rng(200 + seed, &[]));

        let fm = FeatureMatrix::new("m", x.clone(), ids.clone()).unwrap();
        let px = x.select(Axis(0), &perm);
        let pids: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let pfm = FeatureMatrix::new("m", px, pids).unwrap();

        let s = rbf_similarity(&fm, 0.5).unwrap();
        let ps = rbf_similarity(&pfm, 0.5).unwrap();
        assert_eq!(s.median_distance, ps.median_distance);
        for a in 0..10 {
            for b in 0..10 {
                let (u, v) = (ps.values[[a, b]], s.values[[perm[a], perm[b]]]);
                assert!((u - v).abs() <= 1e-12, "({a},{b}): {u} vs {v}");
            }
        }
    }
}
