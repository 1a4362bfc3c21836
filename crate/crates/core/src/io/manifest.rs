use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SCHEMA_VERSION;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureClass {
    Convolutional,
    Transformer,
    MlpMixer,
    Hybrid,
}

impl fmt::Display for ArchitectureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchitectureClass::Convolutional => "convolutional",
            ArchitectureClass::Transformer => "transformer",
            ArchitectureClass::MlpMixer => "mlp-mixer",
            ArchitectureClass::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub model_id: String,
    pub architecture_class: ArchitectureClass,
    pub family: String,
    pub objective: String,
    pub training_data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imagenet_top1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<u64>,
    /// Feature NPY path, relative to the manifest's directory.
    pub features: PathBuf,
}

impl ModelEntry {
    /// String value of a metadata field, for grouping and filtering.
    pub fn field(&self, name: &str) -> Option<String> {
        match name {
            "model_id" => Some(self.model_id.clone()),
            "architecture_class" => Some(self.architecture_class.to_string()),
            "family" => Some(self.family.clone()),
            "objective" => Some(self.objective.clone()),
            "training_data" => Some(self.training_data.clone()),
            "imagenet_top1" => self.imagenet_top1.map(|v| v.to_string()),
            "parameter_count" => self.parameter_count.map(|v| v.to_string()),
            _ => None,
        }
    }
}

/// The set of models a run iterates over, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub schema_version: String,
    /// Optional image index CSV (`image_id,category[,designated]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    pub models: Vec<ModelEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ModelManifest {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.model_id.as_str())
    }

    pub fn feature_path(&self, entry: &ModelEntry) -> PathBuf {
        self.base_dir.join(&entry.features)
    }

    pub fn images_path(&self) -> Option<PathBuf> {
        self.images.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Checks ids, metadata ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION.into(),
                found: self.schema_version.clone(),
            });
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            if !seen.insert(m.model_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate model_id {:?}", m.model_id)));
            }
            if let Some(acc) = m.imagenet_top1 {
                if !(0.0..=1.0).contains(&acc) {
                    return Err(Error::Manifest(format!(
                        "{}: imagenet_top1 {acc} outside [0, 1]",
                        m.model_id
                    )));
                }
            }
            if m.parameter_count == Some(0) {
                return Err(Error::Manifest(format!("{}: parameter_count must be positive", m.model_id)));
            }
            let path = self.feature_path(m);
            if !path.is_file() {
                return Err(Error::Manifest(format!(
                    "{}: feature file {} does not exist",
                    m.model_id,
                    path.display()
                )));
            }
        }
        if let Some(p) = self.images_path() {
            if !p.is_file() {
                return Err(Error::Manifest(format!("image index {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Parses and validates a manifest JSON document.
pub fn load_manifest(path: &Path) -> Result<ModelManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: ModelManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &ModelManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
