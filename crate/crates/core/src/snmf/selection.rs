//! Seed alignment, factorization stability and bandwidth selection.

use ndarray::Array2;
use rayon::prelude::*;

use super::{snmf_fit, Embedding, SnmfOptions};
use crate::assignment::max_profit_assignment;
use crate::error::{Error, Result};
use crate::kernel::SimilarityMatrix;
use crate::linalg::pearson;

/// Column correspondence between two fits of the same model.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Column `k` of the first embedding matches column `permutation[k]` of the second.
    pub permutation: Vec<usize>,
    /// Pearson correlation of each matched pair.
    pub correlations: Vec<f64>,
    /// Matched pairs involving a zero-variance column (correlation set to 0).
    pub degenerate: Vec<bool>,
}

impl Alignment {
    pub fn mean_correlation(&self) -> f64 {
        self.correlations.iter().sum::<f64>() / self.correlations.len() as f64
    }
}

/// One-to-one column matching maximizing the total Pearson correlation.
pub fn align_embeddings(a: &Embedding, b: &Embedding) -> Result<Alignment> {
    if a.w.dim() != b.w.dim() {
        return Err(Error::Consistency(format!(
            "cannot align embeddings of shape {:?} and {:?}",
            a.w.dim(),
            b.w.dim()
        )));
    }
    let r = a.rank();
    let corr: Vec<Vec<Option<f64>>> = (0..r)
        .map(|k| (0..r).map(|j| pearson(a.column(k), b.column(j))).collect())
        .collect();
    let profit: Vec<Vec<f64>> = corr
        .iter()
        .map(|row| row.iter().map(|c| c.unwrap_or(0.0)).collect())
        .collect();
    let permutation = max_profit_assignment(&profit);
    let correlations = permutation.iter().enumerate().map(|(k, &j)| profit[k][j]).collect();
    let degenerate = permutation.iter().enumerate().map(|(k, &j)| corr[k][j].is_none()).collect();
    Ok(Alignment {
        permutation,
        correlations,
        degenerate,
    })
}

/// Symmetric `B × B` matrix of mean matched correlations (unit diagonal).
pub fn pairwise_matched_correlations(embeddings: &[Embedding]) -> Result<Array2<f64>> {
    let b = embeddings.len();
    let pairs: Vec<(usize, usize)> = (0..b).flat_map(|i| ((i + 1)..b).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| align_embeddings(&embeddings[i], &embeddings[j]).map(|a| a.mean_correlation()))
        .collect::<Result<_>>()?;
    let mut m = Array2::<f64>::eye(b);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[[i, j]] = v;
        m[[j, i]] = v;
    }
    Ok(m)
}

fn mean_off_diagonal(m: &Array2<f64>) -> f64 {
    let b = m.nrows();
    let mut sum = 0.0;
    for i in 0..b {
        for j in (i + 1)..b {
            sum += m[[i, j]];
        }
    }
    sum / (b * (b - 1) / 2) as f64
}

/// Mean over seed pairs of the mean matched correlation.
pub fn stability(embeddings: &[Embedding]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::InsufficientData("stability needs at least 2 seeds".into()));
    }
    Ok(mean_off_diagonal(&pairwise_matched_correlations(embeddings)?))
}

/// `2ab / (a + b)` with negative inputs clamped to 0; zero if either is 0.
pub fn harmonic_mean(stability: f64, explained_variance: f64) -> f64 {
    let (a, b) = (stability.max(0.0), explained_variance.max(0.0));
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScore {
    pub alpha: f64,
    pub stability: f64,
    pub explained_variance: f64,
    pub harmonic_mean: f64,
}

impl AlphaScore {
    pub fn new(alpha: f64, stability: f64, explained_variance: f64) -> Self {
        AlphaScore {
            alpha,
            stability,
            explained_variance,
            harmonic_mean: harmonic_mean(stability, explained_variance),
        }
    }

    fn is_valid(&self) -> bool {
        self.stability.is_finite() && self.explained_variance.is_finite()
    }
}

/// Index of the grid point with the largest harmonic mean; ties go to the
/// smaller multiplier.
pub fn choose_alpha(scores: &[AlphaScore]) -> Result<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_valid()).collect();
    order.sort_by(|&a, &b| scores[a].alpha.total_cmp(&scores[b].alpha));
    let mut best: Option<usize> = None;
    for i in order {
        if best.is_none_or(|b| scores[i].harmonic_mean > scores[b].harmonic_mean) {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::Selection("no grid point has valid stability and explained variance".into()))
}

/// All seed restarts at one bandwidth multiplier.
#[derive(Debug, Clone)]
pub struct AlphaFit {
    pub alpha: f64,
    pub embeddings: Vec<Embedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSelection {
    pub chosen_alpha: f64,
    pub per_alpha: Vec<AlphaScore>,
    pub central_seed: u64,
    /// Position of the central seed within the chosen grid point's restarts.
    pub central_index: usize,
}

fn central_index(pairwise: &Array2<f64>) -> usize {
    let b = pairwise.nrows();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..b {
        let avg = (0..b).filter(|&j| j != i).map(|j| pairwise[[i, j]]).sum::<f64>() / (b - 1) as f64;
        if avg > best_val {
            best_val = avg;
            best = i;
        }
    }
    best
}

/// Scores every grid point, picks the bandwidth, then the central seed.
pub fn select_bandwidth(fits: &[AlphaFit]) -> Result<FitSelection> {
    let mut per_alpha = Vec::with_capacity(fits.len());
    let mut pairwise = Vec::with_capacity(fits.len());
    for fit in fits {
        let (stab, pw) = if fit.embeddings.len() >= 2 {
            let pw = pairwise_matched_correlations(&fit.embeddings)?;
            (mean_off_diagonal(&pw), Some(pw))
        } else {
            (f64::NAN, None)
        };
        let ev = if fit.embeddings.is_empty() {
            f64::NAN
        } else {
            fit.embeddings.iter().map(|e| e.explained_variance).sum::<f64>() / fit.embeddings.len() as f64
        };
        per_alpha.push(AlphaScore::new(fit.alpha, stab, ev));
        pairwise.push(pw);
    }
    let chosen = choose_alpha(&per_alpha)?;
    let pw = pairwise[chosen].as_ref().expect("valid grid point has pairwise matrix");
    let central = central_index(pw);
    Ok(FitSelection {
        chosen_alpha: fits[chosen].alpha,
        per_alpha,
        central_seed: fits[chosen].embeddings[central].seed,
        central_index: central,
    })
}

/// Full per-model protocol: restarts per grid point, selection, central seed.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub selection: FitSelection,
    pub fits: Vec<AlphaFit>,
}

impl ModelFit {
    pub fn chosen(&self) -> &AlphaFit {
        self.fits
            .iter()
            .find(|f| f.alpha == self.selection.chosen_alpha)
            .expect("chosen alpha is in the grid")
    }

    pub fn central(&self) -> &Embedding {
        &self.chosen().embeddings[self.selection.central_index]
    }
}

fn fit_seeds(s: &SimilarityMatrix, rank: usize, seeds: &[u64], opts: &SnmfOptions) -> Result<Vec<Embedding>> {
    // Validate once; restarts skip the (costly) PSD probe.
    super::solver::validate_input(&s.values, rank, opts)?;
    let quiet = SnmfOptions {
        check_psd: false,
        ..*opts
    };
    seeds.par_iter().map(|&seed| snmf_fit(s, rank, seed, &quiet)).collect()
}

pub fn fit_model(grid: &[SimilarityMatrix], rank: usize, seeds: &[u64], opts: &SnmfOptions) -> Result<ModelFit> {
    if seeds.len() < 2 {
        return Err(Error::InsufficientData("bandwidth selection needs at least 2 seeds".into()));
    }
    let fits: Vec<AlphaFit> = grid
        .iter()
        .map(|s| {
            Ok(AlphaFit {
                alpha: s.alpha,
                embeddings: fit_seeds(s, rank, seeds, opts)?,
            })
        })
        .collect::<Result<_>>()?;
    let selection = select_bandwidth(&fits)?;
    Ok(ModelFit { selection, fits })
}

#[derive(Debug, Clone)]
pub struct RankFit {
    pub rank: usize,
    pub embeddings: Vec<Embedding>,
    /// Restart with the lowest final objective.
    pub best_index: usize,
    /// Central restart (highest mean matched correlation), when ≥ 2 seeds.
    pub central_index: usize,
}

impl RankFit {
    pub fn best(&self) -> &Embedding {
        &self.embeddings[self.best_index]
    }

    pub fn central(&self) -> &Embedding {
        &self.embeddings[self.central_index]
    }
}

/// Refits one similarity matrix at several ranks with shared seeds.
pub fn rank_sweep(s: &SimilarityMatrix, ranks: &[usize], seeds: &[u64], opts: &SnmfOptions) -> Result<Vec<RankFit>> {
    if seeds.is_empty() {
        return Err(Error::InsufficientData("rank sweep needs at least one seed".into()));
    }
    ranks
        .iter()
        .map(|&rank| {
            let embeddings = fit_seeds(s, rank, seeds, opts)?;
            let best_index = (0..embeddings.len())
                .min_by(|&a, &b| embeddings[a].objective.total_cmp(&embeddings[b].objective))
                .expect("nonempty");
            let central_index = if embeddings.len() >= 2 {
                central_index(&pairwise_matched_correlations(&embeddings)?)
            } else {
                0
            };
            Ok(RankFit {
                rank,
                embeddings,
                best_index,
                central_index,
            })
        })
        .collect()
}
