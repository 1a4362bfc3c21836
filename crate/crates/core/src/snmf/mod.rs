//! Symmetric nonnegative factorization of similarity matrices, multi-seed
//! stability, bandwidth selection and central-seed choice.

mod selection;
mod solver;

use ndarray::{Array2, ArrayView1};

pub use selection::{
    align_embeddings, choose_alpha, fit_model, harmonic_mean, pairwise_matched_correlations, rank_sweep,
    select_bandwidth, stability, AlphaFit, AlphaScore, Alignment, FitSelection, ModelFit, RankFit,
};
pub use solver::{fit_from, snmf_fit, SnmfOptions};

use crate::error::{Error, Result};

/// Nonnegative `N × r` loadings of one model plus fit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub model_id: String,
    pub w: Array2<f64>,
    pub seed: u64,
    pub alpha: f64,
    /// Final `½‖S − W Wᵀ‖²_F`.
    pub objective: f64,
    pub explained_variance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every accepted sweep.
    pub trace: Vec<f64>,
}

impl Embedding {
    /// Wraps externally produced loadings (planted fixtures, reloaded files).
    pub fn from_loadings(model_id: impl Into<String>, w: Array2<f64>) -> Result<Self> {
        crate::io::check_finite_matrix(&w)?;
        if let Some(((i, k), v)) = w.indexed_iter().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidInput(format!("negative loading {v} at ({i}, {k})")));
        }
        Ok(Embedding {
            model_id: model_id.into(),
            w,
            seed: 0,
            alpha: f64::NAN,
            objective: f64::NAN,
            explained_variance: f64::NAN,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, f64> {
        self.w.column(k)
    }

    /// Indices of all-zero columns.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.rank())
            .filter(|&k| self.w.column(k).iter().all(|v| *v == 0.0))
            .collect()
    }
}

fn residual_norm_sq(s: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let recon = w.dot(&w.t());
    s.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `1 − ‖S − W Wᵀ‖²_F / ‖S‖²_F`, not clamped.
pub fn explained_variance_raw(s: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    1.0 - residual_norm_sq(s, w) / total
}

/// Explained variance clamped to `[0, 1]` for reporting.
pub fn explained_variance(s: &Array2<f64>, w: &Array2<f64>) -> f64 {
    explained_variance_raw(s, w).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_factor_explains_everything() {
        let w = array![[1.0, 0.0], [0.5, 0.5], [0.0, 2.0]];
        let s = w.dot(&w.t());
        assert_eq!(explained_variance(&s, &w), 1.0);
    }

    #[test]
    fn zero_factor_explains_nothing() {
        let s = array![[1.0, 0.2], [0.2, 1.0]];
        assert_eq!(explained_variance(&s, &Array2::zeros((2, 1))), 0.0);
    }

    #[test]
    fn from_loadings_rejects_negative() {
        assert!(Embedding::from_loadings("m", array![[1.0, -0.1]]).is_err());
        let e = Embedding::from_loadings("m", array![[1.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(e.zero_columns(), vec![1]);
    }
}
