use std::collections::BTreeMap;

use serde_json::json;
use unidim::io::{fmt_f64, Table};
use unidim::stats::{parse_specs, run_contrasts, ContrastOptions};

use super::{universality, Ctx, Summary};
use crate::error::{CliError, Result};
use crate::state::{hash_json, sha256_file, ALL};

pub const STAGE: &str = "contrast";
pub const RESULTS_FILE: &str = "contrast/results.csv";

/// Bootstrap resamples for the ω² interval.
const OMEGA2_ITERS: usize = 2_000;

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let cfg = &ctx.cfg;
    let specs_path = cfg
        .contrasts
        .as_ref()
        .ok_or_else(|| CliError::Config("contrast needs a contrasts file in the config".into()))?;
    let manifest = ctx.manifest()?;
    let manifest_path = cfg.manifest.as_ref().expect("manifest loaded");
    let univ = ctx.ws.require(universality::STAGE, ALL)?;
    let input = hash_json(&json!({
        "stage": STAGE,
        "manifest": sha256_file(manifest_path)?,
        "contrasts": sha256_file(specs_path)?,
        "rng_seed": cfg.rng_seed,
        "contrast_bootstrap_iters": cfg.contrast_bootstrap_iters,
        "universality": univ.outputs,
    }));
    let outcome = ctx.ws.run_unit(STAGE, ALL, &input, ctx.force, || {
        let text = std::fs::read_to_string(specs_path).map_err(|e| CliError::io(specs_path, e))?;
        let specs = parse_specs(&text)?;
        let ids: Vec<&str> = manifest.ids().collect();
        let scores: BTreeMap<String, f64> = universality::load_reports(ctx, &ids)?
            .into_iter()
            .map(|r| (r.model_id, r.model_mean))
            .collect();
        let opts = ContrastOptions {
            sd_bootstrap_iters: cfg.contrast_bootstrap_iters,
            omega2_bootstrap_iters: OMEGA2_ITERS,
            seed: cfg.rng_seed,
        };
        let results = run_contrasts(&manifest, &scores, &specs, &opts)?;
        let mut t = Table::new([
            "contrast",
            "test",
            "statistic",
            "df1",
            "df2",
            "p_raw",
            "p_corrected",
            "effect_size",
            "ci_low",
            "ci_high",
            "groups",
        ]);
        for r in &results {
            let groups: Vec<String> = r
                .group_summaries
                .iter()
                .map(|g| format!("{}:n={}:mean={}:sd={}", g.name, g.n, fmt_f64(g.mean), fmt_f64(g.sd)))
                .collect();
            t.push(vec![
                r.contrast_name.clone(),
                r.test.to_string(),
                fmt_f64(r.statistic),
                fmt_f64(r.df.0),
                fmt_f64(r.df.1),
                fmt_f64(r.p_raw),
                fmt_f64(r.p_corrected),
                fmt_f64(r.effect_size),
                fmt_f64(r.effect_ci.0),
                fmt_f64(r.effect_ci.1),
                groups.join(";"),
            ]);
        }
        ctx.ws.ensure_dir(STAGE)?;
        ctx.save(RESULTS_FILE, &t)
    })?;
    Ok(Summary::of([outcome]))
}
