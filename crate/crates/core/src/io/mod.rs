//! Loading inputs and persisting pipeline artifacts.
//!
//! Matrices live in NPY files; metadata and tables are JSON/CSV. Every
//! persisted artifact carries a schema version in a `*.meta.json` sidecar and
//! is rejected on reload if that version differs from [`SCHEMA_VERSION`].

mod artifact;
mod categories;
mod config;
mod features;
mod manifest;
pub mod npy;
mod table;

pub use artifact::{meta_path, Artifact};
pub use categories::{load_categories, CategoryIndex};
pub use config::{log_spaced, RunConfig};
pub use features::{load_feature_matrix, FeatureMatrix};
pub(crate) use features::check_finite as check_finite_matrix;
pub use manifest::{load_manifest, save_manifest, ArchitectureClass, ModelEntry, ModelManifest};
pub use npy::DType;
pub use table::{fmt_f64, fmt_opt, parse_f64, Table};

/// Version tag written into every persisted artifact and manifest.
pub const SCHEMA_VERSION: &str = "1";
