//! Pipeline stages. Each stage validates its upstream markers, hashes its
//! inputs and writes its outputs under `<workspace>/<stage>/`.

pub mod align;
pub mod content;
pub mod contrast;
pub mod factorize;
pub mod kernel;
pub mod report;
pub mod universality;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use unidim::io::{load_categories, load_manifest, meta_path, Artifact, CategoryIndex, ModelEntry, ModelManifest, RunConfig, Table};

use crate::error::{CliError, Result};
use crate::state::{sha256_file, unit_dir, Marker, Outcome, Workspace};

pub struct Ctx {
    pub ws: Workspace,
    pub cfg: RunConfig,
    pub force: bool,
}

/// Units run and skipped by one stage invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Summary {
    pub ran: usize,
    pub skipped: usize,
}

impl Summary {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Ran => self.ran += 1,
            Outcome::Skipped => self.skipped += 1,
        }
    }

    pub fn of(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        let mut s = Summary::default();
        for o in outcomes {
            s.add(o);
        }
        s
    }
}

/// Workspace-relative directory of one model's outputs for `stage`.
pub fn model_dir(stage: &str, model_id: &str) -> String {
    format!("{stage}/{}", unit_dir(model_id))
}

pub fn rel_meta(rel: &str) -> String {
    meta_path(Path::new(rel)).to_string_lossy().into_owned()
}

impl Ctx {
    pub fn manifest(&self) -> Result<ModelManifest> {
        let path = self
            .cfg
            .manifest
            .as_ref()
            .ok_or_else(|| CliError::Config("the config sets no manifest".into()))?;
        Ok(load_manifest(path)?)
    }

    /// The image index named by the manifest, if any.
    pub fn images(&self, manifest: &ModelManifest) -> Result<Option<CategoryIndex>> {
        manifest.images_path().map(|p| load_categories(&p)).transpose().map_err(Into::into)
    }

    pub fn require_images(&self, manifest: &ModelManifest, stage: &str) -> Result<CategoryIndex> {
        self.images(manifest)?
            .ok_or_else(|| CliError::Config(format!("{stage} needs an image index with categories in the manifest")))
    }

    /// Hash of the manifest's image index, or null.
    pub fn images_hash(&self, manifest: &ModelManifest) -> Result<Value> {
        Ok(match manifest.images_path() {
            Some(p) => json!(sha256_file(&p)?),
            None => Value::Null,
        })
    }

    /// Saves an artifact and returns the relative paths of its files.
    pub fn save<A: Artifact>(&self, rel: &str, artifact: &A) -> Result<Vec<String>> {
        if let Some(parent) = Path::new(rel).parent() {
            self.ws.ensure_dir(&parent.to_string_lossy())?;
        }
        artifact.save(&self.ws.path(rel), self.cfg.dtype())?;
        Ok(vec![rel.to_string(), rel_meta(rel)])
    }

    pub fn load<A: Artifact>(&self, rel: &str) -> Result<A> {
        Ok(A::load(&self.ws.path(rel))?)
    }

    pub fn write_json(&self, rel: &str, value: &Value) -> Result<Vec<String>> {
        let path = self.ws.path(rel);
        let text = serde_json::to_string_pretty(value).expect("json serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(vec![rel.to_string()])
    }

    pub fn read_json(&self, rel: &str) -> Result<Value> {
        let path = self.ws.path(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Upstream markers of every model for `stage`, keyed by model id.
    pub fn require_models(&self, stage: &'static str, manifest: &ModelManifest) -> Result<BTreeMap<String, Marker>> {
        manifest
            .models
            .iter()
            .map(|m| Ok((m.model_id.clone(), self.ws.require(stage, &m.model_id)?)))
            .collect()
    }

    /// Runs `task` for every model in parallel and reports the first error
    /// in manifest order.
    pub fn per_model<F>(&self, manifest: &ModelManifest, task: F) -> Result<Summary>
    where
        F: Fn(&ModelEntry) -> Result<Outcome> + Sync,
    {
        let results: Vec<Result<Outcome>> = manifest.models.par_iter().map(&task).collect();
        let mut outcomes = Vec::with_capacity(results.len());
        for r in results {
            outcomes.push(r?);
        }
        Ok(Summary::of(outcomes))
    }
}

/// Row lookup of a table by the value in `key`.
pub fn index_by(table: &Table, key: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let col = table
        .column(key)
        .ok_or_else(|| CliError::Config(format!("table lacks a {key} column")))?;
    Ok(table.rows.iter().map(|r| (r[col].clone(), r.clone())).collect())
}

pub fn cell(table: &Table, row: &[String], name: &str) -> String {
    table.column(name).map(|c| row[c].clone()).unwrap_or_default()
}
