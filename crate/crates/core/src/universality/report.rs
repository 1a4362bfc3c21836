use ndarray::{Array1, Array2, Array3, Axis};
use rayon::prelude::*;

use super::null::{calibrate, null_scores, thresholds_from_null, CalibrationOrder, NullOptions};
use super::{cos2_matrix, solve_matching};
use crate::error::{Error, Result};
use crate::snmf::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UniversalityOptions {
    pub null: NullOptions,
    pub order: CalibrationOrder,
}

/// Per-dimension universality of one model against the rest of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct UniversalityReport {
    pub model_id: String,
    pub raw: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub calibrated: Vec<f64>,
    /// Mean calibrated score over dimensions.
    pub model_mean: f64,
    /// Calibrated within-model stability, when seed refits are available.
    pub ceiling: Option<Vec<f64>>,
    /// All-zero columns (raw score 0 by construction).
    pub zero_columns: Vec<usize>,
}

impl UniversalityReport {
    pub fn rank(&self) -> usize {
        self.raw.len()
    }
}

/// Reports for every model plus the pairwise score cubes they were built
/// from, indexed `[model, partner, dim]` (NaN on the diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleUniversality {
    pub reports: Vec<UniversalityReport>,
    pub pair_raw: Array3<f64>,
    pub thresholds: Array2<f64>,
    pub order: CalibrationOrder,
    /// Per-pair raw scores above their threshold before clamping.
    pub exceedances: usize,
    pub comparisons: usize,
}

impl EnsembleUniversality {
    pub fn model_means(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.model_mean).collect()
    }
}

/// Matches every pair of models once (the reverse direction reuses the
/// inverse assignment), draws the permutation null per model, and
/// calibrates.
pub fn ensemble_universality(embeddings: &[Embedding], opts: &UniversalityOptions) -> Result<EnsembleUniversality> {
    let m = embeddings.len();
    if m < 2 {
        return Err(Error::InsufficientData("universality needs at least 2 models".into()));
    }
    let shape = embeddings[0].w.dim();
    if let Some(e) = embeddings.iter().find(|e| e.w.dim() != shape) {
        return Err(Error::Consistency(format!(
            "{} has shape {:?}, expected {shape:?}",
            e.model_id,
            e.w.dim()
        )));
    }
    let r = shape.1;
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| ((a + 1)..m).map(move |b| (a, b))).collect();
    let matched: Vec<(Vec<usize>, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(a, b)| solve_matching(&cos2_matrix(embeddings[a].w.view(), embeddings[b].w.view())))
        .collect();
    let mut pair_raw = Array3::from_elem((m, m, r), f64::NAN);
    for (&(a, b), (perm, scores)) in pairs.iter().zip(&matched) {
        for (k, &j) in perm.iter().enumerate() {
            pair_raw[[a, b, k]] = scores[k];
            pair_raw[[b, a, j]] = scores[k];
        }
    }

    let per_model: Vec<Result<(Vec<f64>, super::Calibrated)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let partners: Vec<&Embedding> = (0..m).filter(|&j| j != i).map(|j| &embeddings[j]).collect();
            let null = null_scores(&embeddings[i], &partners, &opts.null, i as u64)?;
            let thresholds = thresholds_from_null(&null, &opts.null);
            let scores = partner_rows(&pair_raw, i, &(0..m).filter(|&j| j != i).collect::<Vec<_>>());
            let cal = calibrate(scores.view(), &thresholds, opts.order)?;
            Ok((thresholds, cal))
        })
        .collect();

    let mut reports = Vec::with_capacity(m);
    let mut thresholds = Array2::zeros((m, r));
    let mut exceedances = 0;
    for (i, res) in per_model.into_iter().enumerate() {
        let (th, cal) = res?;
        let raw = pair_raw
            .index_axis(Axis(0), i)
            .outer_iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .fold(Array1::<f64>::zeros(r), |acc, (_, row)| acc + row)
            / (m - 1) as f64;
        thresholds.row_mut(i).assign(&Array1::from(th.clone()));
        exceedances += cal.exceedances;
        reports.push(UniversalityReport {
            model_id: embeddings[i].model_id.clone(),
            raw: raw.to_vec(),
            thresholds: th,
            calibrated: cal.calibrated,
            model_mean: cal.model_mean,
            ceiling: None,
            zero_columns: embeddings[i].zero_columns(),
        });
    }
    Ok(EnsembleUniversality {
        reports,
        pair_raw,
        thresholds,
        order: opts.order,
        exceedances,
        comparisons: m * (m - 1) * r,
    })
}

/// Rows `pair_raw[i, j, ..]` for `j` in `partners`.
pub(crate) fn partner_rows(pair_raw: &Array3<f64>, i: usize, partners: &[usize]) -> Array2<f64> {
    pair_raw.index_axis(Axis(0), i).select(Axis(0), partners)
}
