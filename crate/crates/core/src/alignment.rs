//! Agreement of embeddings with reference data: cross-validated ridge
//! encoding of neural responses with noise ceilings, triplet odd-one-out
//! accuracy, and evaluation of the universal and specific halves of an
//! embedding.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{npy, CategoryIndex};
use crate::linalg::{pearson, solve_spd};
use crate::rng::task_rng;
use crate::stats::{correlation, Correlation, CorrelationMethod};

/// Responses of recorded channels to the run's images.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDataset {
    /// `N × P`, rows in image order.
    pub responses: Array2<f64>,
    pub channel_ids: Vec<String>,
    pub reliabilities: Vec<f64>,
    pub subjects: Vec<String>,
}

impl NeuralDataset {
    pub fn n_channels(&self) -> usize {
        self.responses.ncols()
    }

    /// Channels with reliability strictly above `threshold`.
    pub fn filter_reliable(&self, threshold: f64) -> NeuralDataset {
        let keep: Vec<usize> = (0..self.n_channels())
            .filter(|&p| self.reliabilities[p] > threshold)
            .collect();
        NeuralDataset {
            responses: self.responses.select(Axis(1), &keep),
            channel_ids: keep.iter().map(|&p| self.channel_ids[p].clone()).collect(),
            reliabilities: keep.iter().map(|&p| self.reliabilities[p]).collect(),
            subjects: keep.iter().map(|&p| self.subjects[p].clone()).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChannelRow {
    channel_id: String,
    reliability: f64,
    subject: String,
}

/// Loads an `N × P` response NPY and its `channel_id,reliability,subject` CSV.
pub fn load_neural(responses: &Path, channels: &Path, n_images: usize) -> Result<NeuralDataset> {
    let (values, _) = npy::read_matrix(responses)?;
    let mut reader =
        csv::Reader::from_path(channels).map_err(|e| Error::Format(format!("{}: {e}", channels.display())))?;
    let rows: Vec<ChannelRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", channels.display())))?;
    if values.nrows() != n_images {
        return Err(Error::Consistency(format!(
            "{} has {} rows, expected {n_images} images",
            responses.display(),
            values.nrows()
        )));
    }
    if values.ncols() != rows.len() {
        return Err(Error::Consistency(format!(
            "{} channels in responses but {} in {}",
            values.ncols(),
            rows.len(),
            channels.display()
        )));
    }
    crate::io::check_finite_matrix(&values)?;
    if let Some(r) = rows.iter().find(|r| !(-1.0..=1.0).contains(&r.reliability)) {
        return Err(Error::Format(format!("channel {}: reliability outside [-1, 1]", r.channel_id)));
    }
    Ok(NeuralDataset {
        responses: values,
        channel_ids: rows.iter().map(|r| r.channel_id.clone()).collect(),
        reliabilities: rows.iter().map(|r| r.reliability).collect(),
        subjects: rows.into_iter().map(|r| r.subject).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}

/// Closed-form ridge `(XᵀX + λI)⁻¹ Xᵀy`, on centered data when
/// `fit_intercept` (the intercept is not penalized).
pub fn ridge_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, fit_intercept: bool) -> Result<RidgeModel> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(Error::Consistency(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if lambda <= 0.0 {
        return Err(Error::InvalidInput(format!("ridge penalty {lambda} must be positive")));
    }
    let (x_mean, y_mean) = if fit_intercept {
        (x.mean_axis(Axis(0)).unwrap(), y.mean().unwrap())
    } else {
        (Array1::zeros(x.ncols()), 0.0)
    };
    let xc = &x - &x_mean;
    let yc = &y - y_mean;
    let mut gram = xc.t().dot(&xc);
    gram.diag_mut().mapv_inplace(|v| v + lambda);
    let coef = solve_spd(gram.view(), xc.t().dot(&yc).view())?;
    let intercept = y_mean - x_mean.dot(&coef);
    Ok(RidgeModel { coef, intercept })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOptions {
    pub folds: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub fit_intercept: bool,
    /// Share of a training fold used to fit during penalty selection.
    pub inner_train_fraction: f64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            folds: 5,
            grid: crate::io::log_spaced(1e-2, 1e6, 20),
            seed: 0,
            fit_intercept: true,
            inner_train_fraction: 0.8,
        }
    }
}

/// Fold of each row: a seeded shuffle dealt round-robin into `folds` parts.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut task_rng(seed, &[0xf01d]));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Penalty with the lowest validation MSE on a seeded split of the
/// training rows (first grid value on ties).
pub fn select_penalty(x: ArrayView2<f64>, y: ArrayView1<f64>, opts: &RidgeOptions, stream: u64) -> Result<f64> {
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut task_rng(opts.seed, &[0x1a4b, stream]));
    let cut = ((n as f64 * opts.inner_train_fraction).round() as usize).clamp(1, n - 1);
    let (fit_rows, val_rows) = order.split_at(cut);
    let xf = x.select(Axis(0), fit_rows);
    let yf = y.select(Axis(0), fit_rows);
    let xv = x.select(Axis(0), val_rows);
    let yv = y.select(Axis(0), val_rows);
    let mut best = (f64::INFINITY, opts.grid[0]);
    for &lambda in &opts.grid {
        let model = ridge_fit(xf.view(), yf.view(), lambda, opts.fit_intercept)?;
        let err = &model.predict(xv.view()) - &yv;
        let mse = err.dot(&err) / err.len() as f64;
        if mse < best.0 {
            best = (mse, lambda);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingResult {
    /// Pearson r of concatenated held-out predictions with observations.
    pub r: f64,
    /// Penalty chosen in each fold.
    pub penalties: Vec<f64>,
    pub predictions: Array1<f64>,
}

/// K-fold cross-validated ridge prediction of `y` from the loadings `w`.
pub fn ridge_encode(w: ArrayView2<f64>, y: ArrayView1<f64>, opts: &RidgeOptions) -> Result<EncodingResult> {
    let n = w.nrows();
    if y.len() != n {
        return Err(Error::Consistency(format!("{} responses for {n} images", y.len())));
    }
    if opts.folds < 2 || n < 2 * opts.folds {
        return Err(Error::InsufficientData(format!("{n} images cannot fill {} folds", opts.folds)));
    }
    if opts.grid.is_empty() {
        return Err(Error::InvalidInput("empty ridge grid".into()));
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(Error::UndefinedScore("response has zero variance".into()));
    }
    let fold = fold_assignment(n, opts.folds, opts.seed);
    let mut predictions = Array1::<f64>::zeros(n);
    let mut penalties = Vec::with_capacity(opts.folds);
    for f in 0..opts.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xt = w.select(Axis(0), &train);
        let yt = y.select(Axis(0), &train);
        let lambda = select_penalty(xt.view(), yt.view(), opts, f as u64)?;
        let model = ridge_fit(xt.view(), yt.view(), lambda, opts.fit_intercept)?;
        let pred = model.predict(w.select(Axis(0), &test).view());
        for (&i, p) in test.iter().zip(pred.iter()) {
            predictions[i] = *p;
        }
        penalties.push(lambda);
    }
    let r = pearson(predictions.view(), y)
        .ok_or_else(|| Error::UndefinedScore("held-out predictions are constant".into()))?;
    Ok(EncodingResult { r, penalties, predictions })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronScore {
    pub channel_id: String,
    pub subject: String,
    pub reliability: f64,
    pub r: f64,
    /// `sqrt(reliability)`.
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScore {
    /// Mean over subjects of the per-subject mean held-out r.
    pub score: f64,
    pub per_subject: Vec<(String, f64)>,
    pub neurons: Vec<NeuronScore>,
}

/// Encodes every channel above `threshold` reliability; subjects are
/// averaged separately and then together.
pub fn encoding_score(w: ArrayView2<f64>, data: &NeuralDataset, threshold: f64, opts: &RidgeOptions) -> Result<EncodingScore> {
    let kept = data.filter_reliable(threshold);
    if kept.n_channels() == 0 {
        return Err(Error::InsufficientData(format!("no channel has reliability above {threshold}")));
    }
    let results: Vec<Result<f64>> = (0..kept.n_channels())
        .into_par_iter()
        .map(|p| ridge_encode(w, kept.responses.column(p), opts).map(|e| e.r))
        .collect();
    let mut neurons = Vec::with_capacity(results.len());
    for (p, r) in results.into_iter().enumerate() {
        neurons.push(NeuronScore {
            channel_id: kept.channel_ids[p].clone(),
            subject: kept.subjects[p].clone(),
            reliability: kept.reliabilities[p],
            r: r?,
            ceiling: kept.reliabilities[p].sqrt(),
        });
    }
    let mut subjects: Vec<String> = kept.subjects.clone();
    subjects.sort();
    subjects.dedup();
    let per_subject: Vec<(String, f64)> = subjects
        .into_iter()
        .map(|s| {
            let rs: Vec<f64> = neurons.iter().filter(|n| n.subject == s).map(|n| n.r).collect();
            let m = rs.iter().sum::<f64>() / rs.len() as f64;
            (s, m)
        })
        .collect();
    let score = per_subject.iter().map(|(_, m)| m).sum::<f64>() / per_subject.len() as f64;
    Ok(EncodingScore {
        score,
        per_subject,
        neurons,
    })
}

/// A trial over three categories (0-based); `(i, j)` is the human-chosen
/// similar pair and `k` the odd one out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Deserialize)]
struct TripletRow {
    i: usize,
    j: usize,
    k: usize,
}

/// Reads `i,j,k` rows of 1-based category indices.
pub fn load_triplets(path: &Path, n_categories: usize) -> Result<Vec<Triplet>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<TripletRow>().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let ids = [row.i, row.j, row.k];
        if ids.iter().any(|&c| c == 0 || c > n_categories) {
            return Err(Error::Format(format!("triplet {}: index outside 1..={n_categories}", line + 1)));
        }
        if row.i == row.j || row.i == row.k || row.j == row.k {
            return Err(Error::Format(format!("triplet {}: indices must be distinct", line + 1)));
        }
        out.push(Triplet {
            i: row.i - 1,
            j: row.j - 1,
            k: row.k - 1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletResult {
    pub accuracy: f64,
    pub correct: usize,
    pub evaluated: usize,
    /// Triplets referencing an all-zero embedding row.
    pub skipped: usize,
    /// Evaluated triplets whose maximum similarity was shared by two pairs.
    pub ties: usize,
}

/// Fraction of triplets whose most cosine-similar pair is `(i, j)`. Ties
/// resolve in the order `(i, j)`, `(i, k)`, `(j, k)`.
pub fn triplet_accuracy(embedding: ArrayView2<f64>, triplets: &[Triplet]) -> Result<TripletResult> {
    let c = embedding.nrows();
    let norms: Vec<f64> = embedding.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let cos = |a: usize, b: usize| embedding.row(a).dot(&embedding.row(b)) / (norms[a] * norms[b]);
    let (mut correct, mut evaluated, mut skipped, mut ties) = (0, 0, 0, 0);
    for t in triplets {
        if [t.i, t.j, t.k].iter().any(|&x| x >= c) {
            return Err(Error::InvalidInput(format!("triplet {t:?} outside {c} categories")));
        }
        if [t.i, t.j, t.k].iter().any(|&x| norms[x] == 0.0) {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let (ij, ik, jk) = (cos(t.i, t.j), cos(t.i, t.k), cos(t.j, t.k));
        let best = ij.max(ik).max(jk);
        if [ij, ik, jk].iter().filter(|&&s| s == best).count() > 1 {
            ties += 1;
        }
        if ij >= ik && ij >= jk {
            correct += 1;
        }
    }
    Ok(TripletResult {
        accuracy: if evaluated == 0 { f64::NAN } else { correct as f64 / evaluated as f64 },
        correct,
        evaluated,
        skipped,
        ties,
    })
}

/// Rows of `w` at each category's designated image.
pub fn category_embedding(w: ArrayView2<f64>, categories: &CategoryIndex) -> Result<Array2<f64>> {
    if w.nrows() != categories.n_images() {
        return Err(Error::Consistency(format!(
            "{} embedding rows for {} images",
            w.nrows(),
            categories.n_images()
        )));
    }
    Ok(w.select(Axis(0), &categories.designated_rows()?))
}

/// Split of the dimensions into the more and less universal halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfMask {
    pub universal: Vec<usize>,
    pub specific: Vec<usize>,
}

impl HalfMask {
    /// Dimensions sorted by calibrated score (descending, index ascending on
    /// ties); the first `⌈r/2⌉` form the universal half.
    pub fn from_scores(calibrated: &[f64]) -> Result<Self> {
        let r = calibrated.len();
        if r < 2 {
            return Err(Error::InsufficientData("half masks need at least 2 dimensions".into()));
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| calibrated[b].total_cmp(&calibrated[a]).then(a.cmp(&b)));
        let (u, s) = order.split_at(r.div_ceil(2));
        let mut universal = u.to_vec();
        let mut specific = s.to_vec();
        universal.sort_unstable();
        specific.sort_unstable();
        Ok(HalfMask { universal, specific })
    }

    /// `w` with every column outside `keep` zeroed.
    pub fn apply(w: ArrayView2<f64>, keep: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros(w.dim());
        for &k in keep {
            out.column_mut(k).assign(&w.column(k));
        }
        out
    }

    pub fn universal_part(&self, w: ArrayView2<f64>) -> Array2<f64> {
        Self::apply(w, &self.universal)
    }

    pub fn specific_part(&self, w: ArrayView2<f64>) -> Array2<f64> {
        Self::apply(w, &self.specific)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfScores {
    pub universal: f64,
    pub specific: f64,
}

/// Runs `evaluate` on the universal-only and specific-only embeddings.
pub fn half_masked_evaluation<F>(w: ArrayView2<f64>, calibrated: &[f64], evaluate: F) -> Result<HalfScores>
where
    F: Fn(ArrayView2<f64>) -> Result<f64>,
{
    if calibrated.len() != w.ncols() {
        return Err(Error::Consistency(format!(
            "{} scores for {} dimensions",
            calibrated.len(),
            w.ncols()
        )));
    }
    let mask = HalfMask::from_scores(calibrated)?;
    Ok(HalfScores {
        universal: evaluate(mask.universal_part(w).view())?,
        specific: evaluate(mask.specific_part(w).view())?,
    })
}

/// Pearson correlation of per-model alignment scores with model-level
/// universality.
pub fn alignment_universality_correlation(scores: &[f64], universality: &[f64]) -> Result<Correlation> {
    correlation(scores, universality, CorrelationMethod::Pearson)
}
