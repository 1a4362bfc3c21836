//! Cross-model recurrence of dimensions: squared-cosine matching, Hungarian
//! assignment, raw and null-calibrated universality, the within-model
//! stability ceiling, diagnostics (greedy matching, cone projection, CKA) and
//! resampling of model-level rankings.

mod cka;
mod cone;
mod null;
mod report;
mod resample;

pub use cka::{centered_gram, cka_gram, cka_linear, mean_cka_per_model};
pub use cone::{cone_projection_score, nnls};
pub use null::{
    adjust, calibrate, null_scores, null_thresholds, stability_ceiling, Calibrated, CalibrationOrder, NullMode,
    NullOptions,
};
pub use report::{ensemble_universality, EnsembleUniversality, UniversalityOptions, UniversalityReport};
pub use resample::{model_means, resample_universality, ResampleMode, ResampleSummary};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::assignment::max_profit_assignment;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::snmf::Embedding;

/// Squared cosine `(uᵀv)² / (‖u‖²‖v‖²)`.
pub fn cos2(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    let (nu, nv) = (norm_sq(u), norm_sq(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedScore("cos2 of a zero vector".into()));
    }
    let d = dot(u, v);
    Ok((d * d / (nu * nv)).min(1.0))
}

/// Columns scaled to unit norm; zero columns stay zero.
pub(crate) fn unit_columns(w: ArrayView2<f64>) -> Array2<f64> {
    let mut out = w.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let n = norm_sq(col.view()).sqrt();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

/// `r_a × r_b` matrix of squared cosines from unit-column inputs.
pub(crate) fn cos2_from_units(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    a.t().dot(&b).mapv(|c| (c * c).min(1.0))
}

/// All pairwise squared cosines between the columns of `a` and `b`; pairs
/// involving a zero column score 0.
pub fn cos2_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    cos2_from_units(unit_columns(a).view(), unit_columns(b).view())
}

pub(crate) fn to_rows(p: &Array2<f64>) -> Vec<Vec<f64>> {
    p.outer_iter().map(|r| r.to_vec()).collect()
}

/// Maximum-total assignment on a profit matrix; returns the permutation
/// and the matched profits.
pub(crate) fn solve_matching(profit: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let permutation = max_profit_assignment(&to_rows(profit));
    let scores = permutation.iter().enumerate().map(|(k, &j)| profit[[k, j]]).collect();
    (permutation, scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub source_model: String,
    pub target_model: String,
    /// Source column `k` is matched to target column `permutation[k]`.
    pub permutation: Vec<usize>,
    /// Matched squared cosines; 0 where either column is zero.
    pub scores: Vec<f64>,
}

impl MatchResult {
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

fn check_pair(a: &Embedding, b: &Embedding) -> Result<()> {
    if a.w.dim() != b.w.dim() {
        return Err(Error::Consistency(format!(
            "{} has shape {:?} but {} has shape {:?}",
            a.model_id,
            a.w.dim(),
            b.model_id,
            b.w.dim()
        )));
    }
    Ok(())
}

/// One-to-one matching of `a`'s columns to `b`'s maximizing total cos².
pub fn match_models(a: &Embedding, b: &Embedding) -> Result<MatchResult> {
    check_pair(a, b)?;
    let (permutation, scores) = solve_matching(&cos2_matrix(a.w.view(), b.w.view()));
    Ok(MatchResult {
        source_model: a.model_id.clone(),
        target_model: b.model_id.clone(),
        permutation,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyDiagnostic {
    /// Target column `j` takes source column `assignment[j]`.
    pub assignment: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fraction of source columns chosen by no target column.
    pub unselected_fraction: f64,
}

/// Best-match baseline allowing many-to-one collisions. Ties go to the
/// lowest source index.
pub fn greedy_match_diagnostic(source: &Embedding, target: &Embedding) -> Result<GreedyDiagnostic> {
    check_pair(source, target)?;
    let c = cos2_matrix(source.w.view(), target.w.view());
    let r = source.rank();
    let mut assignment = Vec::with_capacity(r);
    let mut scores = Vec::with_capacity(r);
    let mut chosen = vec![false; r];
    for j in 0..r {
        let mut best = 0;
        for k in 1..r {
            if c[[k, j]] > c[[best, j]] {
                best = k;
            }
        }
        chosen[best] = true;
        assignment.push(best);
        scores.push(c[[best, j]]);
    }
    let unselected = chosen.iter().filter(|c| !**c).count();
    Ok(GreedyDiagnostic {
        assignment,
        scores,
        unselected_fraction: unselected as f64 / r as f64,
    })
}

/// Sequential best-remaining-pair matching: repeatedly takes the largest
/// entry whose row and column are both free (lowest indices on ties).
/// Returns the bijection and its total.
pub fn greedy_one_to_one(profit: &Array2<f64>) -> (Vec<usize>, f64) {
    let r = profit.nrows();
    let mut perm = vec![usize::MAX; r];
    let mut col_used = vec![false; r];
    for _ in 0..r {
        let mut best: Option<(usize, usize)> = None;
        for k in (0..r).filter(|&k| perm[k] == usize::MAX) {
            for j in (0..r).filter(|&j| !col_used[j]) {
                if best.is_none_or(|(bk, bj)| profit[[k, j]] > profit[[bk, bj]]) {
                    best = Some((k, j));
                }
            }
        }
        let (k, j) = best.expect("free pair exists");
        perm[k] = j;
        col_used[j] = true;
    }
    let total = perm.iter().enumerate().map(|(k, &j)| profit[[k, j]]).sum();
    (perm, total)
}

/// `(M−1) × r` matched cos² of `source` against each partner.
pub fn pair_scores(source: &Embedding, partners: &[&Embedding]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((partners.len(), source.rank()));
    for (p, other) in partners.iter().enumerate() {
        let m = match_models(source, other)?;
        out.row_mut(p).assign(&Array1::from(m.scores));
    }
    Ok(out)
}

/// Per-dimension mean matched cos² over all partners.
pub fn raw_universality(source: &Embedding, partners: &[&Embedding]) -> Result<Vec<f64>> {
    if partners.is_empty() {
        return Err(Error::InsufficientData("raw universality needs at least one partner".into()));
    }
    let s = pair_scores(source, partners)?;
    Ok(s.mean_axis(Axis(0)).expect("nonempty").to_vec())
}
