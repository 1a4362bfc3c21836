use std::collections::BTreeMap;

use serde_json::json;
use unidim::io::{fmt_f64, load_feature_matrix, Table};
use unidim::snmf::Embedding;
use unidim::universality::{
    ensemble_universality, mean_cka_per_model, resample_universality, stability_ceiling, NullOptions, ResampleMode,
    ResampleSummary, UniversalityOptions, UniversalityReport,
};
use unidim::Error;

use super::{factorize, Ctx, Summary};
use crate::error::Result;
use crate::state::{hash_json, sha256_file, unit_dir, ALL};

pub const STAGE: &str = "universality";

pub fn report_file(model_id: &str) -> String {
    format!("{STAGE}/{}.csv", unit_dir(model_id))
}

pub const MODELS_FILE: &str = "universality/models.csv";

/// Resampling failures that leave a row with a status instead of aborting.
fn soft(e: &Error) -> bool {
    matches!(e, Error::InsufficientData(_) | Error::UndefinedScore(_))
}

fn resample_row(t: &mut Table, mode: &str, result: std::result::Result<ResampleSummary, Error>) -> Result<()> {
    match result {
        Ok(s) => t.push(vec![
            mode.into(),
            fmt_f64(s.median),
            fmt_f64(s.interval.0),
            fmt_f64(s.interval.1),
            s.rhos.len().to_string(),
            s.skipped.to_string(),
            "ok".into(),
        ]),
        Err(e) if soft(&e) => t.push(vec![
            mode.into(),
            String::new(),
            String::new(),
            String::new(),
            "0".into(),
            "0".into(),
            e.to_string(),
        ]),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let manifest = ctx.manifest()?;
    let cfg = &ctx.cfg;
    let upstream = ctx.require_models(factorize::STAGE, &manifest)?;
    let features: BTreeMap<String, String> = manifest
        .models
        .iter()
        .map(|m| Ok((m.model_id.clone(), sha256_file(&manifest.feature_path(m))?)))
        .collect::<Result<_>>()?;
    let groups: Vec<Option<String>> = manifest.models.iter().map(|m| m.field(&cfg.resample_group_by)).collect();
    let input = hash_json(&json!({
        "stage": STAGE,
        "models": manifest.ids().collect::<Vec<_>>(),
        "permutations": cfg.permutations,
        "null_percentile": cfg.null_percentile,
        "null_mode": cfg.null_mode,
        "calibration_order": cfg.calibration_order,
        "rng_seed": cfg.rng_seed,
        "bootstrap_fraction": cfg.bootstrap_fraction,
        "bootstrap_iters": cfg.bootstrap_iters,
        "resample_group_by": cfg.resample_group_by,
        "groups": groups,
        "float_width": cfg.float_width,
        "features": features,
        "images": ctx.images_hash(&manifest)?,
        "upstream": upstream.values().map(|m| &m.outputs).collect::<Vec<_>>(),
    }));
    let outcome = ctx.ws.run_unit(STAGE, ALL, &input, ctx.force, || {
        let centrals: Vec<Embedding> = manifest
            .ids()
            .map(|id| ctx.load(&factorize::central_file(id)))
            .collect::<Result<_>>()?;
        let opts = UniversalityOptions {
            null: NullOptions {
                permutations: cfg.permutations,
                percentile: cfg.null_percentile,
                seed: cfg.rng_seed,
                mode: cfg.null_mode,
            },
            order: cfg.calibration_order,
        };
        let mut ens = ensemble_universality(&centrals, &opts)?;

        for (m, id) in manifest.ids().enumerate() {
            if cfg.seeds < 2 {
                break;
            }
            let seeds: Vec<Embedding> = (0..cfg.seeds)
                .map(|b| ctx.load(&factorize::seed_file(id, b)))
                .collect::<Result<_>>()?;
            let (_, central) = factorize::chosen_indices(ctx, id)?;
            let th = ens.thresholds.row(m).to_vec();
            ens.reports[m].ceiling = Some(stability_ceiling(&seeds, central, &th, ens.order)?);
        }

        let images = ctx.images(&manifest)?;
        let ids = images.as_ref().map(|c| c.image_ids.clone());
        let fms = manifest
            .models
            .iter()
            .map(|m| load_feature_matrix(&manifest.feature_path(m), &m.model_id, ids.as_deref(), cfg.dtype()))
            .collect::<unidim::Result<Vec<_>>>()?;
        let cka = mean_cka_per_model(&fms)?;

        let mut written = Vec::new();
        ctx.ws.ensure_dir(STAGE)?;
        let mut models = Table::new(["model_id", "universality", "ceiling_mean", "mean_cka", "zero_dims"]);
        for (m, rep) in ens.reports.iter().enumerate() {
            written.extend(ctx.save(&report_file(&rep.model_id), rep)?);
            let ceiling = rep
                .ceiling
                .as_ref()
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .unwrap_or(f64::NAN);
            models.push(vec![
                rep.model_id.clone(),
                fmt_f64(rep.model_mean),
                fmt_f64(ceiling),
                fmt_f64(cka[m]),
                rep.zero_columns.len().to_string(),
            ]);
        }
        written.extend(ctx.save(MODELS_FILE, &models)?);

        let mut resampling = Table::new(["mode", "median_rho", "ci_low", "ci_high", "resamples", "skipped", "status"]);
        let boot = ResampleMode::BootstrapSubsample {
            fraction: cfg.bootstrap_fraction,
            iters: cfg.bootstrap_iters,
        };
        resample_row(&mut resampling, "bootstrap_subsample", resample_universality(&ens, None, &boot, cfg.rng_seed))?;
        let lgo_mode = format!("leave_{}_out", cfg.resample_group_by);
        match groups.iter().cloned().collect::<Option<Vec<String>>>() {
            Some(g) => resample_row(
                &mut resampling,
                &lgo_mode,
                resample_universality(&ens, Some(&g), &ResampleMode::LeaveGroupOut, cfg.rng_seed),
            )?,
            None => resample_row(
                &mut resampling,
                &lgo_mode,
                Err(Error::InsufficientData(format!(
                    "some models have no {:?} field",
                    cfg.resample_group_by
                ))),
            )?,
        }
        written.extend(ctx.save(&format!("{STAGE}/resampling.csv"), &resampling)?);
        written.extend(ctx.write_json(
            &format!("{STAGE}/summary.json"),
            &json!({
                "models": ens.reports.len(),
                "exceedances": ens.exceedances,
                "comparisons": ens.comparisons,
                "exceedance_rate": ens.exceedances as f64 / ens.comparisons.max(1) as f64,
            }),
        )?);
        Ok(written)
    })?;
    Ok(Summary::of([outcome]))
}

pub fn load_reports(ctx: &Ctx, ids: &[&str]) -> Result<Vec<UniversalityReport>> {
    ids.iter().map(|id| ctx.load(&report_file(id))).collect()
}
