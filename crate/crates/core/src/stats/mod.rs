//! Group comparisons, correlations and resampling tests used to relate
//! universality to model metadata and to alignment scores.

mod contrast;
pub mod special;

pub use contrast::{
    parse_specs,
    run_contrasts, ContrastOptions, ContrastResult, ContrastSpec, FilterValue, GroupSummary, TestKind,
};

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::task_rng;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (`n − 1` denominator).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, 0.5)
}

/// Percentile of sorted data with linear interpolation between order
/// statistics at position `q·(n − 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn percentile(x: &[f64], q: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn require_n(x: &[f64], n: usize, what: &str) -> Result<()> {
    if x.len() < n {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {n} values, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite value")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
    pub hedges_g: f64,
    pub g_se: f64,
    pub g_ci: (f64, f64),
}

/// Welch's unequal-variance t-test with Hedges' g.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    require_n(a, 2, "welch_t group a")?;
    require_n(b, 2, "welch_t group b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::UndefinedScore("welch_t: both groups have zero variance".into()));
    }
    let mean_diff = mean(a) - mean(b);
    let (sa, sb) = (va / na, vb / nb);
    let t = mean_diff / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = special::t_two_sided(t, df);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    let correction = 1.0 - 3.0 / (4.0 * (na + nb) - 9.0);
    let hedges_g = correction * mean_diff / pooled;
    let g_se = ((na + nb) / (na * nb) + hedges_g * hedges_g / (2.0 * (na + nb))).sqrt();
    Ok(WelchResult {
        t,
        df,
        p,
        mean_diff,
        hedges_g,
        g_se,
        g_ci: (hedges_g - 1.96 * g_se, hedges_g + 1.96 * g_se),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Student's pooled-variance two-sample t-test.
pub fn student_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    require_n(a, 2, "student_t group a")?;
    require_n(b, 2, "student_t group b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
    if pooled == 0.0 {
        return Err(Error::UndefinedScore("student_t: zero pooled variance".into()));
    }
    let t = (mean(a) - mean(b)) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        df,
        p: special::t_two_sided(t, df),
    })
}

/// Paired t-test on `a[i] − b[i]`; `p` is two-sided.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("paired_t: length mismatch".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    require_n(&d, 2, "paired_t")?;
    let v = variance(&d);
    if v == 0.0 {
        return Err(Error::UndefinedScore("paired_t: constant differences".into()));
    }
    let n = d.len() as f64;
    let t = mean(&d) / (v / n).sqrt();
    Ok(TTest {
        t,
        df: n - 1.0,
        p: special::t_two_sided(t, n - 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    /// One-sided `P(X ≥ positive)` under `Binomial(n, 1/2)`.
    pub p_greater: f64,
    pub p_two_sided: f64,
}

/// Exact sign test on `a[i] − b[i]`; zero differences are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("sign_test: length mismatch".into()));
    }
    let positive = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let negative = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let n = positive + negative;
    if n == 0 {
        return Err(Error::InsufficientData("sign_test: all differences are zero".into()));
    }
    let p_greater = special::binomial_half_upper(positive, n);
    let extreme = positive.max(negative);
    let p_two_sided = (2.0 * special::binomial_half_upper(extreme, n)).min(1.0);
    Ok(SignTest {
        positive,
        negative,
        p_greater,
        p_two_sided,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub omega2: f64,
}

/// Standard one-way ANOVA with ω².
pub fn oneway_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData("anova needs at least 2 groups".into()));
    }
    for g in groups {
        require_n(g, 1, "anova group")?;
    }
    if groups.iter().filter(|g| g.len() >= 2).count() < 2 {
        return Err(Error::InsufficientData(
            "anova needs at least 2 groups with 2 or more members".into(),
        ));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n - groups.len()) as f64;
    if ss_within == 0.0 {
        return Err(Error::UndefinedScore("anova: zero within-group variance".into()));
    }
    let ms_within = ss_within / df_within;
    let f = (ss_between / df_between) / ms_within;
    let omega2 = (ss_between - df_between * ms_within) / (ss_between + ss_within + ms_within);
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p: special::f_upper(f, df_between, df_within),
        ss_between,
        ss_within,
        omega2,
    })
}

/// Percentile-bootstrap 95% interval for ω², resampling members with
/// replacement within each group. Resamples where ω² is undefined are
/// skipped. The interval is widened to contain the point estimate.
pub fn omega2_bootstrap_ci(groups: &[Vec<f64>], iters: usize, seed: u64) -> Result<(f64, f64)> {
    let point = oneway_anova(groups)?.omega2;
    let mut draws: Vec<f64> = (0..iters)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = task_rng(seed, &[0x0e6a, b as u64]);
            let resampled: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| {
                    (0..g.len())
                        .map(|_| g[rand::Rng::random_range(&mut rng, 0..g.len())])
                        .collect()
                })
                .collect();
            oneway_anova(&resampled).ok().map(|a| a.omega2)
        })
        .collect();
    if draws.is_empty() {
        return Err(Error::UndefinedScore("omega2 bootstrap: no valid resample".into()));
    }
    draws.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&draws, 0.025).min(point);
    let hi = percentile_sorted(&draws, 0.975).max(point);
    Ok((lo, hi))
}

/// `min(1, p·m)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    assert!(m >= 1, "bonferroni needs m >= 1");
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

/// One-sided bootstrap test that a group's SD is unusually small: the null
/// draws `iters` random subsets of the group's size from the population
/// without replacement, and `p` is the fraction of null SDs at or below the
/// observed one.
pub fn sd_bootstrap_test(group: &[f64], population: &[f64], iters: usize, seed: u64) -> Result<SdBootstrap> {
    require_n(group, 2, "sd_bootstrap group")?;
    require_n(population, group.len(), "sd_bootstrap population")?;
    if iters == 0 {
        return Err(Error::InvalidInput("sd_bootstrap: iters must be positive".into()));
    }
    let observed = sd(group);
    let g = group.len();
    let at_or_below = (0..iters)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = task_rng(seed, &[0x5d, b as u64]);
            let picked: Vec<f64> = index::sample(&mut rng, population.len(), g)
                .into_iter()
                .map(|i| population[i])
                .collect();
            sd(&picked) <= observed
        })
        .count();
    Ok(SdBootstrap {
        observed_sd: observed,
        p: at_or_below as f64 / iters as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdBootstrap {
    pub observed_sd: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub coefficient: f64,
    pub p: f64,
    pub n: usize,
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson or Spearman correlation with a two-sided t-approximation p-value.
pub fn correlation(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("correlation: length mismatch".into()));
    }
    require_n(x, 3, "correlation")?;
    require_n(y, 3, "correlation")?;
    let r = match method {
        CorrelationMethod::Pearson => pearson_slice(x, y),
        CorrelationMethod::Spearman => pearson_slice(&average_ranks(x), &average_ranks(y)),
    }
    .ok_or_else(|| Error::UndefinedScore("correlation: zero variance".into()))?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        special::t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(Correlation { coefficient: r, p, n })
}

pub fn pearson_slice(x: &[f64], y: &[f64]) -> Option<f64> {
    crate::linalg::pearson(
        ndarray::ArrayView1::from(x),
        ndarray::ArrayView1::from(y),
    )
}

/// Spearman coefficient only; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson_slice(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> Result<KsResult> {
    require_n(values, 1, "ks_uniform")?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let x = x.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        d,
        p: special::kolmogorov_upper(lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&v, 0.5), 2.5);
        assert_eq!(percentile_sorted(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn identical_groups_give_zero_t() {
        let w = welch_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.hedges_g, 0.0);
        assert!((w.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_clamps() {
        assert_eq!(bonferroni(&[0.01, 0.5], 5), vec![0.05, 1.0]);
    }

    #[test]
    fn sign_test_small_case() {
        let s = sign_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((s.p_greater - 0.125).abs() < 1e-14);
    }
}
