//! What dimensions encode: category consistency (η²) with its sum-of-squares
//! decomposition, between/within fractions by universality decile,
//! reconstruction importance, and their relation to universality.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CategoryIndex;
use crate::stats::{median, spearman};

/// One-way decomposition of a loading vector by category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSquared {
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
    /// `None` for constant loadings (`ss_total = 0`).
    pub eta2: Option<f64>,
}

/// Category sum-of-squares decomposition of `w`. With `require_balanced`,
/// unequal category sizes are rejected; otherwise the unbalanced formulas
/// (group sizes as weights) apply.
pub fn eta_squared(w: ArrayView1<f64>, categories: &CategoryIndex, require_balanced: bool) -> Result<EtaSquared> {
    if w.len() != categories.n_images() {
        return Err(Error::Consistency(format!(
            "{} loadings for {} images",
            w.len(),
            categories.n_images()
        )));
    }
    if require_balanced && categories.exemplars_per_category().is_none() {
        return Err(Error::InvalidInput("category design is not balanced".into()));
    }
    let c = categories.n_categories();
    let mut sums = vec![0.0; c];
    let counts = categories.counts();
    for (v, &k) in w.iter().zip(&categories.category_of) {
        sums[k] += v;
    }
    let n = w.len() as f64;
    let grand = w.sum() / n;
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &m)| s / m as f64).collect();
    let ss_between: f64 = means
        .iter()
        .zip(&counts)
        .filter(|(_, &m)| m > 0)
        .map(|(mu, &m)| m as f64 * (mu - grand) * (mu - grand))
        .sum();
    let mut ss_within = 0.0;
    let mut ss_total = 0.0;
    for (v, &k) in w.iter().zip(&categories.category_of) {
        ss_within += (v - means[k]) * (v - means[k]);
        ss_total += (v - grand) * (v - grand);
    }
    let constant = w.iter().all(|v| *v == w[0]);
    if constant {
        return Ok(EtaSquared {
            ss_between: 0.0,
            ss_within: 0.0,
            ss_total: 0.0,
            eta2: None,
        });
    }
    Ok(EtaSquared {
        ss_between,
        ss_within,
        ss_total,
        eta2: Some((ss_between / ss_total).clamp(0.0, 1.0)),
    })
}

/// Raw explained-variance drop when each column is zeroed, for all columns:
/// `(2 w_kᵀ R w_k + ‖w_k‖⁴) / ‖S‖²_F` with `R = S − W Wᵀ`.
pub fn reconstruction_importance_all(s: &Array2<f64>, w: &Array2<f64>) -> Result<Vec<f64>> {
    let n = s.nrows();
    if s.ncols() != n || w.nrows() != n {
        return Err(Error::Consistency(format!("S {:?} and W {:?}", s.dim(), w.dim())));
    }
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::UndefinedScore("similarity matrix is zero".into()));
    }
    let rw = s.dot(w) - w.dot(&w.t().dot(w));
    Ok((0..w.ncols())
        .map(|k| {
            let col = w.column(k);
            let norm = col.dot(&col);
            if norm == 0.0 {
                return 0.0;
            }
            (2.0 * col.dot(&rw.column(k)) + norm * norm) / total
        })
        .collect())
}

/// `EV(S, W) − EV(S, W without column k)` on unclamped explained variance.
pub fn reconstruction_importance(s: &Array2<f64>, w: &Array2<f64>, k: usize) -> Result<f64> {
    if k >= w.ncols() {
        return Err(Error::InvalidInput(format!("dimension {k} out of range for rank {}", w.ncols())));
    }
    Ok(reconstruction_importance_all(s, w)?[k])
}

/// Content summary of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionContent {
    pub model_id: String,
    pub dim: usize,
    pub ss: EtaSquared,
    pub delta_r2: f64,
    pub universality: f64,
}

impl DimensionContent {
    pub fn eta2(&self) -> Option<f64> {
        self.ss.eta2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecileRow {
    /// 1 = least universal.
    pub decile: usize,
    pub n_dims: usize,
    pub mean_universality: f64,
    pub between_fraction: f64,
    pub within_fraction: f64,
}

/// Universality deciles of dimensions sorted ascending by score (ties by
/// input order); dimension at rank `i` of `n` goes to decile
/// `⌊10 i / n⌋ + 1`. Fractions pool summed SS unless `per_dimension_mean`.
pub fn variance_fraction_by_decile(contents: &[DimensionContent], per_dimension_mean: bool) -> Result<Vec<DecileRow>> {
    let n = contents.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("decile table needs 10 dimensions, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| contents[a].universality.total_cmp(&contents[b].universality).then(a.cmp(&b)));
    let mut bins: Vec<Vec<&DimensionContent>> = vec![Vec::new(); 10];
    for (rank, &i) in order.iter().enumerate() {
        bins[rank * 10 / n].push(&contents[i]);
    }
    Ok(bins
        .iter()
        .enumerate()
        .map(|(d, dims)| {
            let (between, within) = if per_dimension_mean {
                let valid: Vec<_> = dims.iter().filter(|c| c.ss.ss_total > 0.0).collect();
                let m = valid.len() as f64;
                (
                    valid.iter().map(|c| c.ss.ss_between / c.ss.ss_total).sum::<f64>() / m,
                    valid.iter().map(|c| c.ss.ss_within / c.ss.ss_total).sum::<f64>() / m,
                )
            } else {
                let total: f64 = dims.iter().map(|c| c.ss.ss_total).sum();
                (
                    dims.iter().map(|c| c.ss.ss_between).sum::<f64>() / total,
                    dims.iter().map(|c| c.ss.ss_within).sum::<f64>() / total,
                )
            };
            DecileRow {
                decile: d + 1,
                n_dims: dims.len(),
                mean_universality: dims.iter().map(|c| c.universality).sum::<f64>() / dims.len() as f64,
                between_fraction: between,
                within_fraction: within,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentCorrelations {
    /// Spearman ρ of η² with universality over non-degenerate dimensions;
    /// `None` when either ranking is constant.
    pub rho_eta2: Option<f64>,
    /// Spearman ρ of ΔR² with universality, pooled across models.
    pub rho_delta_r2: Option<f64>,
    /// Median over models of the within-model ρ(ΔR², universality); NaN
    /// when no model has a defined correlation.
    pub median_within_model_rho_delta_r2: f64,
    pub n_dims: usize,
    pub excluded_degenerate: usize,
}

pub fn content_universality_correlations(contents: &[DimensionContent]) -> Result<ContentCorrelations> {
    let valid: Vec<&DimensionContent> = contents.iter().filter(|c| c.eta2().is_some()).collect();
    if valid.len() < 3 {
        return Err(Error::InsufficientData("correlations need 3 non-degenerate dimensions".into()));
    }
    let u: Vec<f64> = valid.iter().map(|c| c.universality).collect();
    let eta: Vec<f64> = valid.iter().map(|c| c.eta2().unwrap()).collect();
    let dr2: Vec<f64> = valid.iter().map(|c| c.delta_r2).collect();
    let mut per_model: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for c in &valid {
        let e = per_model.entry(c.model_id.as_str()).or_default();
        e.0.push(c.delta_r2);
        e.1.push(c.universality);
    }
    let within: Vec<f64> = per_model
        .values()
        .filter(|(x, _)| x.len() >= 3)
        .filter_map(|(x, y)| spearman(x, y))
        .collect();
    Ok(ContentCorrelations {
        rho_eta2: spearman(&eta, &u),
        rho_delta_r2: spearman(&dr2, &u),
        median_within_model_rho_delta_r2: if within.is_empty() { f64::NAN } else { median(&within) },
        n_dims: valid.len(),
        excluded_degenerate: contents.len() - valid.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionLabel {
    Semantic,
    Visual,
    Both,
    Neither,
}

impl DimensionLabel {
    pub const ALL: [DimensionLabel; 4] = [
        DimensionLabel::Semantic,
        DimensionLabel::Visual,
        DimensionLabel::Both,
        DimensionLabel::Neither,
    ];
}

impl fmt::Display for DimensionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DimensionLabel::Semantic => "semantic",
            DimensionLabel::Visual => "visual",
            DimensionLabel::Both => "both",
            DimensionLabel::Neither => "neither",
        })
    }
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    dimension_id: String,
    label: DimensionLabel,
}

/// Reads `dimension_id,label` rows; `dimension_id` is `model_id:dim` with a
/// 0-based dimension index.
pub fn load_labels(path: &Path) -> Result<BTreeMap<(String, usize), DimensionLabel>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let (model, dim) = row
            .dimension_id
            .rsplit_once(':')
            .ok_or_else(|| Error::Format(format!("dimension_id {:?} is not model:dim", row.dimension_id)))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| Error::Format(format!("dimension_id {:?}: bad index", row.dimension_id)))?;
        if out.insert((model.to_string(), dim), row.label).is_some() {
            return Err(Error::Format(format!("duplicate label for {:?}", row.dimension_id)));
        }
    }
    Ok(out)
}

/// Label counts per universality decile (rows 1..10, columns in
/// [`DimensionLabel::ALL`] order). Unlabeled dimensions are skipped.
pub fn label_crosstab(
    contents: &[DimensionContent],
    labels: &BTreeMap<(String, usize), DimensionLabel>,
) -> Result<Vec<[usize; 4]>> {
    let n = contents.len();
    if n < 10 {
        return Err(Error::InsufficientData("cross-tab needs 10 dimensions".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| contents[a].universality.total_cmp(&contents[b].universality).then(a.cmp(&b)));
    let mut table = vec![[0usize; 4]; 10];
    for (rank, &i) in order.iter().enumerate() {
        let c = &contents[i];
        if let Some(label) = labels.get(&(c.model_id.clone(), c.dim)) {
            let col = DimensionLabel::ALL.iter().position(|l| l == label).unwrap();
            table[rank * 10 / n][col] += 1;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_anova() {
        let cats = CategoryIndex::balanced(2, 2);
        let e = eta_squared(array![0.0, 2.0, 3.0, 5.0].view(), &cats, true).unwrap();
        assert!((e.ss_between - 9.0).abs() < 1e-12);
        assert!((e.ss_within - 4.0).abs() < 1e-12);
        assert!((e.eta2.unwrap() - 9.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loadings_are_degenerate() {
        let cats = CategoryIndex::balanced(2, 3);
        let e = eta_squared(ndarray::Array1::from_elem(6, 0.1).view(), &cats, true).unwrap();
        assert_eq!(e.eta2, None);
    }
}
