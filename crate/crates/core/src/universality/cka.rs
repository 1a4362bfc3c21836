use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::FeatureMatrix;

/// `H X Xᵀ H` for column-centered features.
pub fn centered_gram(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("rows");
    let xc = x - &mean;
    xc.dot(&xc.t())
}

fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Linear CKA of two doubly-centered (or to-be-centered) gram matrices.
pub fn cka_gram(k: &Array2<f64>, l: &Array2<f64>) -> Result<f64> {
    if k.dim() != l.dim() || k.nrows() != k.ncols() {
        return Err(Error::Consistency(format!("gram shapes {:?} and {:?}", k.dim(), l.dim())));
    }
    let kc = double_center(k);
    let lc = double_center(l);
    let denom = (frobenius_inner(&kc, &kc) * frobenius_inner(&lc, &lc)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedScore("CKA of a constant representation".into()));
    }
    Ok(frobenius_inner(&kc, &lc) / denom)
}

fn double_center(k: &Array2<f64>) -> Array2<f64> {
    let row = k.mean_axis(Axis(1)).expect("rows");
    let col = k.mean_axis(Axis(0)).expect("cols");
    let grand = k.mean().expect("nonempty");
    let mut out = k.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v += grand - row[i] - col[j];
    }
    out
}

/// Linear CKA between two feature matrices over the same images.
pub fn cka_linear(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::Consistency(format!("{} vs {} rows", x.nrows(), y.nrows())));
    }
    cka_gram(&centered_gram(x), &centered_gram(y))
}

/// Mean CKA of each model with every other model.
pub fn mean_cka_per_model(features: &[FeatureMatrix]) -> Result<Vec<f64>> {
    let m = features.len();
    if m < 2 {
        return Err(Error::InsufficientData("mean CKA needs at least 2 models".into()));
    }
    let grams: Vec<Array2<f64>> = features.par_iter().map(|f| centered_gram(&f.values)).collect();
    let norms: Vec<f64> = grams.iter().map(|g| frobenius_inner(g, g).sqrt()).collect();
    if norms.iter().any(|n| *n == 0.0) {
        return Err(Error::UndefinedScore("CKA of a constant representation".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| ((a + 1)..m).map(move |b| (a, b))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| frobenius_inner(&grams[a], &grams[b]) / (norms[a] * norms[b]))
        .collect();
    let mut sums = vec![0.0; m];
    for (&(a, b), v) in pairs.iter().zip(&values) {
        sums[a] += v;
        sums[b] += v;
    }
    Ok(sums.into_iter().map(|s| s / (m - 1) as f64).collect())
}
