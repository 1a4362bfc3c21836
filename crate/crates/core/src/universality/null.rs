//! Row-shuffling permutation null, threshold calibration and the
//! within-model stability ceiling.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cos2_from_units, solve_matching, unit_columns};
use crate::error::{Error, Result};
use crate::rng::task_rng;
use crate::snmf::Embedding;
use crate::stats::percentile_sorted;

/// What the null percentile is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// Every per-partner matched score of every permutation draw.
    #[default]
    PooledPairs,
    /// The partner-averaged score of each draw.
    EquationMeans,
}

/// Whether thresholds are applied to each partner's score before averaging
/// or to the partner-averaged score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationOrder {
    #[default]
    PairThenMean,
    MeanThenAdjust,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullOptions {
    pub permutations: usize,
    pub percentile: f64,
    pub seed: u64,
    pub mode: NullMode,
}

impl Default for NullOptions {
    fn default() -> Self {
        NullOptions {
            permutations: 1000,
            percentile: 0.95,
            seed: 0,
            mode: NullMode::PooledPairs,
        }
    }
}

/// Matched scores of `source` against row-shuffled partners, shaped
/// `partners × permutations × r`. Draw `b` of partner `p` uses the stream
/// `(stream, p, b)`.
pub fn null_scores(source: &Embedding, partners: &[&Embedding], opts: &NullOptions, stream: u64) -> Result<Array3<f64>> {
    if opts.permutations < 2 {
        return Err(Error::InvalidInput("null needs at least 2 permutations".into()));
    }
    if partners.is_empty() {
        return Err(Error::InsufficientData("null needs at least one partner".into()));
    }
    for p in partners {
        if p.w.dim() != source.w.dim() {
            return Err(Error::Consistency(format!(
                "{} and {} differ in shape",
                source.model_id, p.model_id
            )));
        }
    }
    let (n, r) = source.w.dim();
    let src = unit_columns(source.w.view());
    let units: Vec<Array2<f64>> = partners.iter().map(|p| unit_columns(p.w.view())).collect();
    let b_perm = opts.permutations;
    let rows: Vec<Vec<f64>> = (0..partners.len() * b_perm)
        .into_par_iter()
        .map(|task| {
            let (p, b) = (task / b_perm, task % b_perm);
            let mut rng = task_rng(opts.seed, &[stream, p as u64, b as u64]);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let shuffled = units[p].select(Axis(0), &order);
            let (_, scores) = solve_matching(&cos2_from_units(src.view(), shuffled.view()));
            scores
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array3::from_shape_vec((partners.len(), b_perm, r), flat).expect("shape"))
}

/// Per-dimension thresholds: the `percentile` of the null distribution.
pub fn null_thresholds(source: &Embedding, partners: &[&Embedding], opts: &NullOptions, stream: u64) -> Result<Vec<f64>> {
    let null = null_scores(source, partners, opts, stream)?;
    Ok(thresholds_from_null(&null, opts))
}

pub(crate) fn thresholds_from_null(null: &Array3<f64>, opts: &NullOptions) -> Vec<f64> {
    let r = null.len_of(Axis(2));
    (0..r)
        .map(|k| {
            let slab = null.index_axis(Axis(2), k);
            let mut values: Vec<f64> = match opts.mode {
                NullMode::PooledPairs => slab.iter().copied().collect(),
                NullMode::EquationMeans => slab.mean_axis(Axis(0)).expect("partners").to_vec(),
            };
            values.sort_by(f64::total_cmp);
            percentile_sorted(&values, opts.percentile)
        })
        .collect()
}

/// `clamp((s − a) / (1 − a), 0, 1)`.
pub fn adjust(score: f64, threshold: f64) -> f64 {
    ((score - threshold) / (1.0 - threshold)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    /// Clamped per-partner adjusted scores (`partners × r`); NaN rows under
    /// [`CalibrationOrder::MeanThenAdjust`].
    pub per_pair: Array2<f64>,
    pub calibrated: Vec<f64>,
    pub model_mean: f64,
    /// Per-partner scores strictly above their threshold, before clamping.
    pub exceedances: usize,
}

/// Null-adjusts `partners × r` matched scores with per-dimension thresholds.
pub fn calibrate(pair_scores: ArrayView2<f64>, thresholds: &[f64], order: CalibrationOrder) -> Result<Calibrated> {
    let (p, r) = pair_scores.dim();
    if thresholds.len() != r {
        return Err(Error::Consistency(format!("{} thresholds for {r} dimensions", thresholds.len())));
    }
    if p == 0 {
        return Err(Error::InsufficientData("calibration needs at least one partner".into()));
    }
    if let Some(a) = thresholds.iter().find(|a| !(0.0..1.0).contains(*a)) {
        return Err(Error::InvalidInput(format!("threshold {a} outside [0, 1)")));
    }
    let exceedances = pair_scores
        .outer_iter()
        .map(|row| row.iter().zip(thresholds).filter(|(s, a)| s > a).count())
        .sum();
    let (per_pair, calibrated) = match order {
        CalibrationOrder::PairThenMean => {
            let mut adj = pair_scores.to_owned();
            for mut row in adj.outer_iter_mut() {
                for (v, a) in row.iter_mut().zip(thresholds) {
                    *v = adjust(*v, *a);
                }
            }
            let cal = adj.mean_axis(Axis(0)).expect("partners").to_vec();
            (adj, cal)
        }
        CalibrationOrder::MeanThenAdjust => {
            let means = pair_scores.mean_axis(Axis(0)).expect("partners");
            let cal = means.iter().zip(thresholds).map(|(s, a)| adjust(*s, *a)).collect();
            (Array2::from_elem((p, r), f64::NAN), cal)
        }
    };
    let model_mean = calibrated.iter().sum::<f64>() / r as f64;
    Ok(Calibrated {
        per_pair,
        calibrated,
        model_mean,
        exceedances,
    })
}

/// Calibrated cross-seed agreement of each dimension of the central seed.
///
/// Every seed is matched to the central seed to identify dimension `k`
/// across seeds; the matched cos² of dimension `k` is then taken over all
/// seed pairs and calibrated with `thresholds`.
pub fn stability_ceiling(
    seeds: &[Embedding],
    central: usize,
    thresholds: &[f64],
    order: CalibrationOrder,
) -> Result<Vec<f64>> {
    if seeds.len() < 2 {
        return Err(Error::InsufficientData("stability ceiling needs at least 2 seeds".into()));
    }
    if central >= seeds.len() {
        return Err(Error::InvalidInput(format!("central index {central} out of range")));
    }
    let units: Vec<Array2<f64>> = seeds.iter().map(|e| unit_columns(e.w.view())).collect();
    let r = seeds[central].rank();
    let mut maps = Vec::with_capacity(seeds.len());
    for (b, u) in units.iter().enumerate() {
        if u.dim() != units[central].dim() {
            return Err(Error::Consistency(format!("seed {b} differs in shape")));
        }
        if b == central {
            maps.push((0..r).collect::<Vec<_>>());
        } else {
            maps.push(solve_matching(&cos2_from_units(units[central].view(), u.view())).0);
        }
    }
    let n_pairs = seeds.len() * (seeds.len() - 1) / 2;
    let mut scores = Array2::<f64>::zeros((n_pairs, r));
    let mut row = 0;
    for a in 0..seeds.len() {
        for b in (a + 1)..seeds.len() {
            for k in 0..r {
                let c = units[a].column(maps[a][k]).dot(&units[b].column(maps[b][k]));
                scores[[row, k]] = (c * c).min(1.0);
            }
            row += 1;
        }
    }
    Ok(calibrate(scores.view(), thresholds, order)?.calibrated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjust_endpoints() {
        assert_eq!(adjust(1.0, 0.3), 1.0);
        assert_eq!(adjust(0.3, 0.3), 0.0);
        assert_eq!(adjust(0.1, 0.3), 0.0);
    }
}
