//! Workspace layout, per-(stage, unit) completion markers and the structured log.
//!
//! A marker records the hash of everything a unit read (config subset, input
//! files, upstream outputs) and the SHA-256 of every file it wrote. A unit is
//! skipped when its input hash is unchanged and its outputs are intact.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Unit name of stages that run once over the whole ensemble.
pub const ALL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub stage: String,
    pub unit: String,
    pub input_hash: String,
    /// Workspace-relative path → SHA-256 of the file as written.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

enum Integrity {
    Intact,
    Missing(String),
    Changed(String),
}

pub struct Workspace {
    root: PathBuf,
    log: Mutex<File>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn hash_json(value: &Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// A model id made safe for use as a path component.
pub fn unit_dir(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let log_path = root.join("log.jsonl");
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| CliError::io(&log_path, e))?;
        Ok(Workspace {
            root: root.to_path_buf(),
            log: Mutex::new(log),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn ensure_dir(&self, rel: &str) -> Result<PathBuf> {
        let dir = self.path(rel);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Appends one JSON object (plus a timestamp) to `log.jsonl`. Logging
    /// failures are ignored; the log is diagnostic only.
    pub fn log(&self, mut event: Value) {
        if let Some(obj) = event.as_object_mut() {
            obj.insert("ts_ms".into(), json!(now_ms() as u64));
        }
        if let Ok(mut f) = self.log.lock() {
            let _ = writeln!(f, "{event}");
        }
    }

    fn marker_path(&self, stage: &str, unit: &str) -> PathBuf {
        self.root.join("markers").join(stage).join(format!("{}.json", unit_dir(unit)))
    }

    pub fn read_marker(&self, stage: &str, unit: &str) -> Result<Option<Marker>> {
        let path = self.marker_path(stage, unit);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Config(format!("corrupt marker {}: {e}", path.display())))
    }

    fn integrity(&self, marker: &Marker) -> Result<Integrity> {
        for (rel, hash) in &marker.outputs {
            let path = self.path(rel);
            if !path.is_file() {
                return Ok(Integrity::Missing(rel.clone()));
            }
            if &sha256_file(&path)? != hash {
                return Ok(Integrity::Changed(rel.clone()));
            }
        }
        Ok(Integrity::Intact)
    }

    /// The marker of a completed upstream unit whose outputs are untouched.
    pub fn require(&self, stage: &'static str, unit: &str) -> Result<Marker> {
        let missing = || CliError::MissingStage {
            stage,
            unit: unit.to_string(),
        };
        let marker = self.read_marker(stage, unit)?.ok_or_else(missing)?;
        match self.integrity(&marker)? {
            Integrity::Intact => Ok(marker),
            Integrity::Missing(_) => Err(missing()),
            Integrity::Changed(rel) => Err(CliError::HashMismatch {
                stage,
                path: self.path(&rel),
            }),
        }
    }

    /// Runs `compute` unless a marker with the same input hash and intact
    /// outputs exists. `compute` returns the workspace-relative paths it wrote.
    pub fn run_unit<F>(&self, stage: &'static str, unit: &str, input_hash: &str, force: bool, compute: F) -> Result<Outcome>
    where
        F: FnOnce() -> Result<Vec<String>>,
    {
        let previous = self.read_marker(stage, unit)?;
        if !force {
            if let Some(m) = &previous {
                if m.input_hash == input_hash {
                    match self.integrity(m)? {
                        Integrity::Intact => {
                            self.log(json!({"event": "skip", "stage": stage, "unit": unit}));
                            return Ok(Outcome::Skipped);
                        }
                        Integrity::Missing(rel) | Integrity::Changed(rel) => {
                            self.log(json!({"event": "stale_output", "stage": stage, "unit": unit, "path": rel}));
                        }
                    }
                }
            }
        }
        let marker_path = self.marker_path(stage, unit);
        if let Some(m) = &previous {
            fs::remove_file(&marker_path).map_err(|e| CliError::io(&marker_path, e))?;
            // Outputs the new run does not rewrite would otherwise linger.
            for rel in m.outputs.keys() {
                let _ = fs::remove_file(self.path(rel));
            }
        }
        self.log(json!({"event": "start", "stage": stage, "unit": unit}));
        let started = Instant::now();
        let written = match compute() {
            Ok(w) => w,
            Err(e) => {
                self.log(json!({"event": "error", "stage": stage, "unit": unit, "message": e.to_string()}));
                return Err(e);
            }
        };
        let mut outputs = BTreeMap::new();
        for rel in written {
            let hash = sha256_file(&self.path(&rel))?;
            outputs.insert(rel, hash);
        }
        let marker = Marker {
            stage: stage.to_string(),
            unit: unit.to_string(),
            input_hash: input_hash.to_string(),
            outputs,
        };
        if let Some(dir) = marker_path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(&marker).expect("marker serializes");
        write_atomic(&marker_path, (text + "\n").as_bytes())?;
        self.log(json!({
            "event": "done",
            "stage": stage,
            "unit": unit,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }));
        Ok(Outcome::Ran)
    }
}
