//! RBF similarity matrices with median-heuristic bandwidths.
//!
//! `S_ij = exp(−‖z_i − z_j‖² / (2σ²))` with `σ = α · d̃`, where `d̃` is the
//! median Euclidean distance over the `N(N−1)/2` distinct image pairs.

use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::FeatureMatrix;

/// Symmetric, entrywise-nonnegative similarity matrix of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub model_id: String,
    /// `N × N`, entries in `[0, 1]`, unit diagonal.
    pub values: Array2<f64>,
    pub alpha: f64,
    pub sigma: f64,
    pub median_distance: f64,
}

impl SimilarityMatrix {
    /// Wraps an arbitrary symmetric nonnegative matrix (e.g. a planted `W Wᵀ`).
    pub fn from_values(model_id: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Consistency(format!(
                "similarity matrix must be square, got {:?}",
                values.dim()
            )));
        }
        crate::io::check_finite_matrix(&values)?;
        Ok(SimilarityMatrix {
            model_id: model_id.into(),
            values,
            alpha: f64::NAN,
            sigma: f64::NAN,
            median_distance: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Checks symmetry (1e-6 relative), range `[0, 1]` and the unit diagonal.
    pub fn check_kernel_invariants(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            if self.values[[i, i]] != 1.0 {
                return Err(Error::Consistency(format!("diagonal entry {i} is not 1")));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.values[[i, j]], self.values[[j, i]]);
                if (a - b).abs() > 1e-6 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::Consistency(format!("asymmetric at ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Consistency(format!("entry ({i}, {j}) = {a} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelOptions {
    /// z-score each feature column before computing distances.
    pub standardize: bool,
}

/// Column z-scoring; constant columns become zero.
pub fn standardize_columns(values: &Array2<f64>) -> Array2<f64> {
    let n = values.nrows() as f64;
    let mut out = values.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 });
    }
    out
}

fn prepared(features: &FeatureMatrix, opts: KernelOptions) -> Result<Array2<f64>> {
    features.validate()?;
    Ok(if opts.standardize {
        standardize_columns(&features.values)
    } else {
        features.values.clone()
    })
}

fn median_of_rows(x: &Array2<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData("median distance needs at least 2 rows".into()));
    }
    let mut dists: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = x.row(i);
            ((i + 1)..n).map(move |j| {
                xi.iter()
                    .zip(x.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect();
    let m = dists.len();
    let mid = m / 2;
    let (lower, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if m % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    };
    if !(median > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// Median of the distinct pairwise Euclidean distances between rows.
pub fn median_pairwise_distance(features: &FeatureMatrix) -> Result<f64> {
    median_pairwise_distance_with(features, KernelOptions::default())
}

pub fn median_pairwise_distance_with(features: &FeatureMatrix, opts: KernelOptions) -> Result<f64> {
    median_of_rows(&prepared(features, opts)?)
}

/// Squared distances by `‖a‖² + ‖b‖² − 2a·b`, clamped at zero and mirrored
/// from the upper triangle so the result is exactly symmetric.
fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d2 = x.dot(&x.t());
    let n = d2.nrows();
    d2.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for j in 0..n {
                row[j] = if j == i {
                    0.0
                } else {
                    (norms[i] + norms[j] - 2.0 * row[j]).max(0.0)
                };
            }
        });
    for i in 0..n {
        for j in (i + 1)..n {
            d2[[j, i]] = d2[[i, j]];
        }
    }
    d2
}

fn exp_kernel(model_id: &str, d2: &Array2<f64>, alpha: f64, median: f64) -> Result<SimilarityMatrix> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let sigma = alpha * median;
    let scale = -1.0 / (2.0 * sigma * sigma);
    let mut s = Array2::<f64>::zeros(d2.raw_dim());
    Zip::from(&mut s).and(d2).par_for_each(|s, &d| *s = (d * scale).exp());
    for i in 0..s.nrows() {
        s[[i, i]] = 1.0;
    }
    Ok(SimilarityMatrix {
        model_id: model_id.to_string(),
        values: s,
        alpha,
        sigma,
        median_distance: median,
    })
}

/// RBF similarity with bandwidth `alpha ×` median pairwise distance.
pub fn rbf_similarity(features: &FeatureMatrix, alpha: f64) -> Result<SimilarityMatrix> {
    rbf_similarity_with(features, alpha, KernelOptions::default())
}

pub fn rbf_similarity_with(features: &FeatureMatrix, alpha: f64, opts: KernelOptions) -> Result<SimilarityMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let x = prepared(features, opts)?;
    let median = median_of_rows(&x)?;
    exp_kernel(&features.model_id, &squared_distances(&x), alpha, median)
}

/// One similarity matrix per bandwidth multiplier, sharing one distance pass.
pub fn kernel_grid(features: &FeatureMatrix, alpha_grid: &[f64]) -> Result<Vec<SimilarityMatrix>> {
    kernel_grid_with(features, alpha_grid, KernelOptions::default())
}

pub fn kernel_grid_with(
    features: &FeatureMatrix,
    alpha_grid: &[f64],
    opts: KernelOptions,
) -> Result<Vec<SimilarityMatrix>> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidInput("alpha grid is empty".into()));
    }
    if alpha_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(format!(
            "alpha grid must be strictly ascending: {alpha_grid:?}"
        )));
    }
    let x = prepared(features, opts)?;
    let median = median_of_rows(&x)?;
    let d2 = squared_distances(&x);
    alpha_grid
        .iter()
        .map(|&a| exp_kernel(&features.model_id, &d2, a, median))
        .collect()
}
