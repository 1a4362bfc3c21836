use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::npy::{read_matrix, write_matrix, DType};
use super::table::{fmt_f64, parse_f64, Table};
use super::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::kernel::SimilarityMatrix;
use crate::snmf::Embedding;
use crate::universality::UniversalityReport;

/// Sidecar metadata path: `x.npy` → `x.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// A pipeline output that round-trips through disk.
///
/// The primary file is NPY for matrices and CSV for tables; a JSON sidecar
/// holds the schema version, the artifact kind and any scalar metadata.
pub trait Artifact: Sized {
    const KIND: &'static str;
    /// `dtype` applies to NPY payloads and is ignored by tables.
    fn save(&self, path: &Path, dtype: DType) -> Result<()>;
    fn load(path: &Path) -> Result<Self>;
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_meta<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    let mut value = serde_json::to_value(body).map_err(|e| Error::Format(e.to_string()))?;
    let obj = value.as_object_mut().expect("metadata body is an object");
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    obj.insert("kind".into(), kind.into());
    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&value).expect("metadata serializes");
    std::fs::write(&meta, text + "\n").map_err(|e| Error::io(&meta, e))
}

fn read_meta<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let meta = meta_path(path);
    let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", meta.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Format(format!("{}: metadata is not an object", meta.display())))?;
    let version = obj.remove("schema_version").and_then(|v| v.as_str().map(String::from));
    if version.as_deref() != Some(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION.into(),
            found: version.unwrap_or_else(|| "<missing>".into()),
        });
    }
    let found = obj.remove("kind").and_then(|v| v.as_str().map(String::from));
    if found.as_deref() != Some(kind) {
        return Err(Error::Format(format!(
            "{}: expected a {kind} artifact, found {found:?}",
            meta.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", meta.display())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingMeta {
    model_id: String,
    seed: u64,
    alpha: Option<f64>,
    objective: Option<f64>,
    explained_variance: Option<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

impl Artifact for Embedding {
    const KIND: &'static str = "embedding";

    fn save(&self, path: &Path, dtype: DType) -> Result<()> {
        write_matrix(path, &self.w, dtype)?;
        write_meta(
            path,
            Self::KIND,
            &EmbeddingMeta {
                model_id: self.model_id.clone(),
                seed: self.seed,
                alpha: finite(self.alpha),
                objective: finite(self.objective),
                explained_variance: finite(self.explained_variance),
                iterations: self.iterations,
                converged: self.converged,
                trace: self.trace.clone(),
            },
        )
    }

    fn load(path: &Path) -> Result<Self> {
        let meta: EmbeddingMeta = read_meta(path, Self::KIND)?;
        let (w, _) = read_matrix(path)?;
        let mut e = Embedding::from_loadings(meta.model_id, w)?;
        e.seed = meta.seed;
        e.alpha = meta.alpha.unwrap_or(f64::NAN);
        e.objective = meta.objective.unwrap_or(f64::NAN);
        e.explained_variance = meta.explained_variance.unwrap_or(f64::NAN);
        e.iterations = meta.iterations;
        e.converged = meta.converged;
        e.trace = meta.trace;
        Ok(e)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarityMeta {
    model_id: String,
    alpha: Option<f64>,
    sigma: Option<f64>,
    median_distance: Option<f64>,
}

impl Artifact for SimilarityMatrix {
    const KIND: &'static str = "similarity";

    fn save(&self, path: &Path, dtype: DType) -> Result<()> {
        write_matrix(path, &self.values, dtype)?;
        write_meta(
            path,
            Self::KIND,
            &SimilarityMeta {
                model_id: self.model_id.clone(),
                alpha: finite(self.alpha),
                sigma: finite(self.sigma),
                median_distance: finite(self.median_distance),
            },
        )
    }

    fn load(path: &Path) -> Result<Self> {
        let meta: SimilarityMeta = read_meta(path, Self::KIND)?;
        let (values, _) = read_matrix(path)?;
        let mut s = SimilarityMatrix::from_values(meta.model_id, values)?;
        s.alpha = meta.alpha.unwrap_or(f64::NAN);
        s.sigma = meta.sigma.unwrap_or(f64::NAN);
        s.median_distance = meta.median_distance.unwrap_or(f64::NAN);
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportMeta {
    model_id: String,
    model_mean: f64,
    ceiling: Option<Vec<f64>>,
    zero_columns: Vec<usize>,
}

pub(crate) const REPORT_COLUMNS: [&str; 5] = ["model_id", "dim", "raw", "threshold", "calibrated"];

impl Artifact for UniversalityReport {
    const KIND: &'static str = "universality_report";

    fn save(&self, path: &Path, _dtype: DType) -> Result<()> {
        let mut t = Table::new(REPORT_COLUMNS);
        for k in 0..self.rank() {
            t.push(vec![
                self.model_id.clone(),
                k.to_string(),
                fmt_f64(self.raw[k]),
                fmt_f64(self.thresholds[k]),
                fmt_f64(self.calibrated[k]),
            ]);
        }
        t.write_csv(path)?;
        write_meta(
            path,
            Self::KIND,
            &ReportMeta {
                model_id: self.model_id.clone(),
                model_mean: self.model_mean,
                ceiling: self.ceiling.clone(),
                zero_columns: self.zero_columns.clone(),
            },
        )
    }

    fn load(path: &Path) -> Result<Self> {
        let meta: ReportMeta = read_meta(path, Self::KIND)?;
        let t = Table::read_csv(path)?;
        if t.columns != REPORT_COLUMNS {
            return Err(Error::Format(format!("{}: unexpected columns {:?}", path.display(), t.columns)));
        }
        let mut raw = Vec::new();
        let mut thresholds = Vec::new();
        let mut calibrated = Vec::new();
        for (k, row) in t.rows.iter().enumerate() {
            if row[0] != meta.model_id || row[1] != k.to_string() {
                return Err(Error::Format(format!("{}: row {k} is out of order", path.display())));
            }
            raw.push(parse_f64(&row[2])?);
            thresholds.push(parse_f64(&row[3])?);
            calibrated.push(parse_f64(&row[4])?);
        }
        Ok(UniversalityReport {
            model_id: meta.model_id,
            raw,
            thresholds,
            calibrated,
            model_mean: meta.model_mean,
            ceiling: meta.ceiling,
            zero_columns: meta.zero_columns,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableMeta {
    columns: Vec<String>,
}

impl Artifact for Table {
    const KIND: &'static str = "table";

    fn save(&self, path: &Path, _dtype: DType) -> Result<()> {
        self.write_csv(path)?;
        write_meta(
            path,
            Self::KIND,
            &TableMeta {
                columns: self.columns.clone(),
            },
        )
    }

    fn load(path: &Path) -> Result<Self> {
        let meta: TableMeta = read_meta(path, Self::KIND)?;
        let t = Table::read_csv(path)?;
        if t.columns != meta.columns {
            return Err(Error::Format(format!("{}: header differs from metadata", path.display())));
        }
        Ok(t)
    }
}
