use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::npy::DType;
use crate::error::{Error, Result};
use crate::universality::{CalibrationOrder, NullMode};

fn default_rank() -> usize {
    50
}
fn default_seeds() -> usize {
    5
}
fn default_alpha_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0]
}
fn default_permutations() -> usize {
    1000
}
fn default_null_percentile() -> f64 {
    0.95
}
fn default_cv_folds() -> usize {
    5
}
fn default_ridge_grid() -> Vec<f64> {
    log_spaced(1e-2, 1e6, 20)
}
fn default_rng_seed() -> u64 {
    0
}
fn default_float_width() -> u32 {
    32
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    500
}
fn default_reliability_threshold() -> f64 {
    0.3
}
fn default_bootstrap_fraction() -> f64 {
    0.2
}
fn default_bootstrap_iters() -> usize {
    1000
}
fn default_contrast_bootstrap() -> usize {
    10_000
}
fn default_resample_group_by() -> String {
    "family".into()
}

/// `count` values evenly spaced in log10 between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Run parameters. Every field has a default; a config file only needs the
/// keys it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_null_percentile")]
    pub null_percentile: f64,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_ridge_grid")]
    pub ridge_grid: Vec<f64>,
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_float_width")]
    pub float_width: u32,

    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// z-score feature columns before the kernel.
    #[serde(default)]
    pub standardize: bool,
    /// Extra ranks to refit at the selected bandwidth for rank-stability checks.
    #[serde(default)]
    pub rank_sweep: Vec<usize>,
    #[serde(default = "default_reliability_threshold")]
    pub reliability_threshold: f64,
    #[serde(default = "default_bootstrap_fraction")]
    pub bootstrap_fraction: f64,
    #[serde(default = "default_bootstrap_iters")]
    pub bootstrap_iters: usize,
    #[serde(default = "default_contrast_bootstrap")]
    pub contrast_bootstrap_iters: usize,
    #[serde(default)]
    pub null_mode: NullMode,
    #[serde(default)]
    pub calibration_order: CalibrationOrder,
    /// Manifest field whose groups are held out in leave-group-out resampling.
    #[serde(default = "default_resample_group_by")]
    pub resample_group_by: String,
    /// Decile fractions as per-dimension means instead of pooled sums.
    #[serde(default)]
    pub decile_per_dimension_mean: bool,

    pub manifest: Option<PathBuf>,
    /// Neural responses NPY (`N × P`) and its channel table.
    pub neural_responses: Option<PathBuf>,
    pub neural_channels: Option<PathBuf>,
    /// Triplet CSV with 1-based category indices.
    pub triplets: Option<PathBuf>,
    pub contrasts: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [
            &mut cfg.manifest,
            &mut cfg.neural_responses,
            &mut cfg.neural_channels,
            &mut cfg.triplets,
            &mut cfg.contrasts,
            &mut cfg.labels,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dtype(&self) -> DType {
        DType::from_width(self.float_width).unwrap_or(DType::F4)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.rank == 0 {
            return bad("rank must be positive".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be positive".into());
        }
        if self.alpha_grid.is_empty()
            || self.alpha_grid.iter().any(|a| !(*a > 0.0))
            || self.alpha_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return bad(format!("alpha_grid must be nonempty, positive, strictly ascending: {:?}", self.alpha_grid));
        }
        if self.permutations < 2 {
            return bad("permutations must be at least 2".into());
        }
        if !(self.null_percentile > 0.0 && self.null_percentile < 1.0) {
            return bad(format!("null_percentile {} not in (0, 1)", self.null_percentile));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|l| !(*l > 0.0)) {
            return bad("ridge_grid must be nonempty and positive".into());
        }
        DType::from_width(self.float_width)?;
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return bad("tol and max_iters must be positive".into());
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return bad("bootstrap_fraction must be in (0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.rank, 50);
        assert_eq!(c.seeds, 5);
        assert_eq!(c.alpha_grid, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0]);
        assert_eq!(c.permutations, 1000);
        assert_eq!(c.null_percentile, 0.95);
        assert_eq!(c.cv_folds, 5);
        assert_eq!(c.ridge_grid.len(), 20);
        assert!((c.ridge_grid[0] - 1e-2).abs() < 1e-15);
        assert!((c.ridge_grid[19] - 1e6).abs() < 1e-6);
        assert_eq!(c.float_width, 32);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unsorted_grid_and_unknown_keys() {
        let c = RunConfig {
            alpha_grid: vec![0.5, 0.1],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"rnak": 3}"#).is_err());
    }
}
