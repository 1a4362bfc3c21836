//! Pre-specified model-group contrasts over a scalar per-model score.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{bonferroni, mean, omega2_bootstrap_ci, oneway_anova, sd, sd_bootstrap_test, welch_t};
use crate::error::{Error, Result};
use crate::io::ModelManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchT,
    AnovaF,
    Descriptive,
    SdBootstrap,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::WelchT => "welch_t",
            TestKind::AnovaF => "anova_f",
            TestKind::Descriptive => "descriptive",
            TestKind::SdBootstrap => "sd_bootstrap",
        })
    }
}

/// A single allowed value or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterValue {
    One(String),
    Any(Vec<String>),
}

impl FilterValue {
    fn admits(&self, v: &str) -> bool {
        match self {
            FilterValue::One(s) => s == v,
            FilterValue::Any(list) => list.iter().any(|s| s == v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSpec {
    pub name: String,
    /// Manifest field → admitted value(s); all conditions must hold.
    #[serde(default)]
    pub filter: BTreeMap<String, FilterValue>,
    pub group_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastResult {
    pub contrast_name: String,
    pub test: TestKind,
    pub statistic: f64,
    /// Degrees of freedom; the second entry is NaN for single-df tests.
    pub df: (f64, f64),
    pub p_raw: f64,
    pub p_corrected: f64,
    /// Hedges' g, ω², or the observed SD for the bootstrap test.
    pub effect_size: f64,
    /// NaN when no interval applies.
    pub effect_ci: (f64, f64),
    pub group_summaries: Vec<GroupSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastOptions {
    pub sd_bootstrap_iters: usize,
    pub omega2_bootstrap_iters: usize,
    pub seed: u64,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        ContrastOptions {
            sd_bootstrap_iters: 10_000,
            omega2_bootstrap_iters: 2_000,
            seed: 0,
        }
    }
}

fn summarize(name: &str, values: &[f64]) -> GroupSummary {
    GroupSummary {
        name: name.to_string(),
        n: values.len(),
        mean: mean(values),
        sd: if values.len() >= 2 { sd(values) } else { f64::NAN },
    }
}

const NAN2: (f64, f64) = (f64::NAN, f64::NAN);

/// Runs each spec against the per-model scores and Bonferroni-corrects over
/// the number of specs. Models without a score or lacking the grouping field
/// are ignored. Singleton groups are dropped unless every group is a
/// singleton, in which case a descriptive row and an SD-bootstrap row (null
/// drawn from all scored models) are emitted.
pub fn run_contrasts(
    manifest: &ModelManifest,
    scores: &BTreeMap<String, f64>,
    specs: &[ContrastSpec],
    opts: &ContrastOptions,
) -> Result<Vec<ContrastResult>> {
    let population: Vec<f64> = manifest
        .models
        .iter()
        .filter_map(|m| scores.get(&m.model_id).copied())
        .collect();
    let mut rows = Vec::new();
    for (si, spec) in specs.iter().enumerate() {
        let seed = crate::rng::derive_seed(opts.seed, &[si as u64]);
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for m in &manifest.models {
            let Some(&score) = scores.get(&m.model_id) else { continue };
            let admitted = spec
                .filter
                .iter()
                .all(|(field, allowed)| m.field(field).is_some_and(|v| allowed.admits(&v)));
            if !admitted {
                continue;
            }
            if let Some(key) = m.field(&spec.group_by) {
                groups.entry(key).or_default().push(score);
            }
        }
        let all_singletons = !groups.is_empty() && groups.values().all(|g| g.len() == 1);
        let kind = spec.test.unwrap_or(if all_singletons {
            TestKind::Descriptive
        } else {
            groups.retain(|_, g| g.len() >= 2);
            if groups.len() == 2 {
                TestKind::WelchT
            } else {
                TestKind::AnovaF
            }
        });
        let summaries: Vec<GroupSummary> = groups.iter().map(|(k, v)| summarize(k, v)).collect();
        let pooled: Vec<f64> = groups.values().flatten().copied().collect();
        let insufficient = |what: &str| Error::InsufficientData(format!("contrast {:?}: {what}", spec.name));
        match kind {
            TestKind::WelchT => {
                if groups.len() != 2 {
                    return Err(insufficient("welch_t needs exactly 2 groups with 2 or more members"));
                }
                let mut it = groups.values();
                let (a, b) = (it.next().unwrap(), it.next().unwrap());
                let w = welch_t(a, b)?;
                rows.push(ContrastResult {
                    contrast_name: spec.name.clone(),
                    test: kind,
                    statistic: w.t,
                    df: (w.df, f64::NAN),
                    p_raw: w.p,
                    p_corrected: f64::NAN,
                    effect_size: w.hedges_g,
                    effect_ci: w.g_ci,
                    group_summaries: summaries,
                });
            }
            TestKind::AnovaF => {
                let gs: Vec<Vec<f64>> = groups.values().cloned().collect();
                if gs.len() < 2 {
                    return Err(insufficient("anova needs 2 or more groups"));
                }
                let a = oneway_anova(&gs)?;
                let ci = omega2_bootstrap_ci(&gs, opts.omega2_bootstrap_iters, seed)?;
                rows.push(ContrastResult {
                    contrast_name: spec.name.clone(),
                    test: kind,
                    statistic: a.f,
                    df: (a.df_between, a.df_within),
                    p_raw: a.p,
                    p_corrected: f64::NAN,
                    effect_size: a.omega2,
                    effect_ci: ci,
                    group_summaries: summaries,
                });
            }
            TestKind::Descriptive | TestKind::SdBootstrap => {
                if pooled.len() < 2 {
                    return Err(insufficient("needs 2 or more scored models"));
                }
                if kind == TestKind::Descriptive {
                    rows.push(ContrastResult {
                        contrast_name: spec.name.clone(),
                        test: TestKind::Descriptive,
                        statistic: mean(&pooled),
                        df: NAN2,
                        p_raw: f64::NAN,
                        p_corrected: f64::NAN,
                        effect_size: sd(&pooled),
                        effect_ci: NAN2,
                        group_summaries: summaries.clone(),
                    });
                }
                let t = sd_bootstrap_test(&pooled, &population, opts.sd_bootstrap_iters, seed)?;
                rows.push(ContrastResult {
                    contrast_name: spec.name.clone(),
                    test: TestKind::SdBootstrap,
                    statistic: t.observed_sd,
                    df: NAN2,
                    p_raw: t.p,
                    p_corrected: f64::NAN,
                    effect_size: t.observed_sd,
                    effect_ci: NAN2,
                    group_summaries: summaries,
                });
            }
        }
    }
    let m = specs.len().max(1);
    for row in &mut rows {
        if !row.p_raw.is_nan() {
            row.p_corrected = bonferroni(&[row.p_raw], m)[0];
        }
    }
    Ok(rows)
}

/// Parses a JSON list of contrast specs.
pub fn parse_specs(text: &str) -> Result<Vec<ContrastSpec>> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("contrast specs: {e}")))
}
