//! Robustness of the model-level ranking to the composition of the ensemble.

use rand::seq::index;
use rayon::prelude::*;

use super::null::calibrate;
use super::report::{partner_rows, EnsembleUniversality};
use crate::error::{Error, Result};
use crate::rng::task_rng;
use crate::stats::{percentile, spearman};

#[derive(Debug, Clone, PartialEq)]
pub enum ResampleMode {
    /// Random model subsets of `round(fraction·M)` (at least 3), without replacement.
    BootstrapSubsample { fraction: f64, iters: usize },
    /// Each model is scored only against partners from other groups.
    LeaveGroupOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleSummary {
    pub rhos: Vec<f64>,
    pub median: f64,
    /// 2.5th and 97.5th percentiles of `rhos`.
    pub interval: (f64, f64),
    /// Resamples skipped because a ranking was constant.
    pub skipped: usize,
}

/// Model-level means of `members`, each scored only against `partners_of`
/// (thresholds held at their full-ensemble values).
pub fn model_means(
    ens: &EnsembleUniversality,
    members: &[usize],
    partners_of: impl Fn(usize) -> Vec<usize>,
) -> Result<Vec<f64>> {
    members
        .iter()
        .map(|&i| {
            let partners = partners_of(i);
            let rows = partner_rows(&ens.pair_raw, i, &partners);
            let th = ens.thresholds.row(i).to_vec();
            Ok(calibrate(rows.view(), &th, ens.order)?.model_mean)
        })
        .collect()
}

fn summarize(rhos: Vec<f64>, skipped: usize) -> Result<ResampleSummary> {
    if rhos.is_empty() {
        return Err(Error::UndefinedScore("no resample produced a defined rank correlation".into()));
    }
    Ok(ResampleSummary {
        median: percentile(&rhos, 0.5),
        interval: (percentile(&rhos, 0.025), percentile(&rhos, 0.975)),
        rhos,
        skipped,
    })
}

/// Spearman correlation between full-ensemble and resampled model rankings.
/// `groups[i]` labels model `i` for [`ResampleMode::LeaveGroupOut`].
pub fn resample_universality(
    ens: &EnsembleUniversality,
    groups: Option<&[String]>,
    mode: &ResampleMode,
    seed: u64,
) -> Result<ResampleSummary> {
    let m = ens.reports.len();
    if m < 3 {
        return Err(Error::InsufficientData("resampling needs at least 3 models".into()));
    }
    let all: Vec<usize> = (0..m).collect();
    let others = |i: usize, set: &[usize]| set.iter().copied().filter(|&j| j != i).collect::<Vec<_>>();
    let full = model_means(ens, &all, |i| others(i, &all))?;
    match mode {
        ResampleMode::BootstrapSubsample { fraction, iters } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) || *iters == 0 {
                return Err(Error::InvalidInput("subsample needs fraction in (0, 1] and iters > 0".into()));
            }
            let k = ((fraction * m as f64).round() as usize).clamp(3, m);
            let results: Vec<Option<f64>> = (0..*iters)
                .into_par_iter()
                .map(|b| {
                    let mut rng = task_rng(seed, &[0x5ab, b as u64]);
                    let mut subset = index::sample(&mut rng, m, k).into_vec();
                    subset.sort_unstable();
                    let resampled = model_means(ens, &subset, |i| others(i, &subset)).ok()?;
                    let reference: Vec<f64> = subset.iter().map(|&i| full[i]).collect();
                    spearman(&reference, &resampled)
                })
                .collect();
            let skipped = results.iter().filter(|r| r.is_none()).count();
            summarize(results.into_iter().flatten().collect(), skipped)
        }
        ResampleMode::LeaveGroupOut => {
            let groups = groups.ok_or_else(|| Error::InvalidInput("leave-group-out needs group labels".into()))?;
            if groups.len() != m {
                return Err(Error::Consistency(format!("{} group labels for {m} models", groups.len())));
            }
            let eligible: Vec<usize> = (0..m).filter(|&i| (0..m).any(|j| groups[j] != groups[i])).collect();
            if eligible.len() < 3 {
                return Err(Error::InsufficientData("fewer than 3 models have out-of-group partners".into()));
            }
            let resampled = model_means(ens, &eligible, |i| (0..m).filter(|&j| groups[j] != groups[i]).collect())?;
            let reference: Vec<f64> = eligible.iter().map(|&i| full[i]).collect();
            match spearman(&reference, &resampled) {
                Some(rho) => summarize(vec![rho], 0),
                None => summarize(Vec::new(), 1),
            }
        }
    }
}
