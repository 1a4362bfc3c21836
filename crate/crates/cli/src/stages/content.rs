use serde_json::json;
use unidim::content::{
    content_universality_correlations, eta_squared, label_crosstab, load_labels, reconstruction_importance_all,
    variance_fraction_by_decile, DimensionContent, DimensionLabel,
};
use unidim::io::{fmt_f64, fmt_opt, Table};
use unidim::kernel::SimilarityMatrix;
use unidim::snmf::Embedding;

use super::{factorize, kernel, universality, Ctx, Summary};
use crate::error::Result;
use crate::state::{hash_json, sha256_file, ALL};

pub const STAGE: &str = "content";
pub const DIMENSIONS_FILE: &str = "content/dimensions.csv";
pub const DECILES_FILE: &str = "content/deciles.csv";

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let manifest = ctx.manifest()?;
    let cfg = &ctx.cfg;
    let kernels = ctx.require_models(kernel::STAGE, &manifest)?;
    let fits = ctx.require_models(factorize::STAGE, &manifest)?;
    let univ = ctx.ws.require(universality::STAGE, ALL)?;
    let categories = ctx.require_images(&manifest, STAGE)?;
    let labels_hash = cfg.labels.as_ref().map(|p| sha256_file(p)).transpose()?;
    let input = hash_json(&json!({
        "stage": STAGE,
        "models": manifest.ids().collect::<Vec<_>>(),
        "decile_per_dimension_mean": cfg.decile_per_dimension_mean,
        "images": ctx.images_hash(&manifest)?,
        "labels": labels_hash,
        "kernel": kernels.values().map(|m| &m.outputs).collect::<Vec<_>>(),
        "factorize": fits.values().map(|m| &m.outputs).collect::<Vec<_>>(),
        "universality": univ.outputs,
    }));
    let outcome = ctx.ws.run_unit(STAGE, ALL, &input, ctx.force, || {
        let ids: Vec<&str> = manifest.ids().collect();
        let reports = universality::load_reports(ctx, &ids)?;
        let mut contents = Vec::new();
        for (id, rep) in ids.iter().zip(&reports) {
            let w: Embedding = ctx.load(&factorize::central_file(id))?;
            let (chosen, _) = factorize::chosen_indices(ctx, id)?;
            let s: SimilarityMatrix = ctx.load(&kernel::alpha_file(id, chosen))?;
            let delta = reconstruction_importance_all(&s.values, &w.w)?;
            for k in 0..w.rank() {
                contents.push(DimensionContent {
                    model_id: id.to_string(),
                    dim: k,
                    ss: eta_squared(w.column(k), &categories, false)?,
                    delta_r2: delta[k],
                    universality: rep.calibrated[k],
                });
            }
        }

        ctx.ws.ensure_dir(STAGE)?;
        let mut written = Vec::new();
        let mut dims = Table::new([
            "model_id",
            "dim",
            "universality",
            "ss_between",
            "ss_within",
            "ss_total",
            "eta2",
            "delta_r2",
        ]);
        for c in &contents {
            dims.push(vec![
                c.model_id.clone(),
                c.dim.to_string(),
                fmt_f64(c.universality),
                fmt_f64(c.ss.ss_between),
                fmt_f64(c.ss.ss_within),
                fmt_f64(c.ss.ss_total),
                fmt_opt(c.ss.eta2),
                fmt_f64(c.delta_r2),
            ]);
        }
        written.extend(ctx.save(DIMENSIONS_FILE, &dims)?);

        let mut deciles = Table::new(["decile", "n_dims", "mean_universality", "between_fraction", "within_fraction"]);
        for d in variance_fraction_by_decile(&contents, cfg.decile_per_dimension_mean)? {
            deciles.push(vec![
                d.decile.to_string(),
                d.n_dims.to_string(),
                fmt_f64(d.mean_universality),
                fmt_f64(d.between_fraction),
                fmt_f64(d.within_fraction),
            ]);
        }
        written.extend(ctx.save(DECILES_FILE, &deciles)?);

        let corr = content_universality_correlations(&contents)?;
        let mut ct = Table::new(["measure", "value"]);
        for (name, v) in [
            ("spearman_eta2_universality", fmt_opt(corr.rho_eta2)),
            ("spearman_delta_r2_universality", fmt_opt(corr.rho_delta_r2)),
            ("median_within_model_spearman_delta_r2", fmt_f64(corr.median_within_model_rho_delta_r2)),
            ("n_dims", corr.n_dims.to_string()),
            ("excluded_degenerate", corr.excluded_degenerate.to_string()),
        ] {
            ct.push(vec![name.into(), v]);
        }
        written.extend(ctx.save(&format!("{STAGE}/correlations.csv"), &ct)?);

        if let Some(path) = &cfg.labels {
            let labels = load_labels(path)?;
            let table = label_crosstab(&contents, &labels)?;
            let mut columns = vec!["decile".to_string()];
            columns.extend(DimensionLabel::ALL.iter().map(|l| l.to_string()));
            let mut t = Table::new(columns);
            for (d, row) in table.iter().enumerate() {
                let mut r = vec![(d + 1).to_string()];
                r.extend(row.iter().map(|c| c.to_string()));
                t.push(r);
            }
            written.extend(ctx.save(&format!("{STAGE}/labels_crosstab.csv"), &t)?);
        }
        Ok(written)
    })?;
    Ok(Summary::of([outcome]))
}
