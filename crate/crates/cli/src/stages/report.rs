//! Merged per-model and per-dimension tables for external plotting.

use serde_json::{json, Value};
use unidim::io::{fmt_f64, fmt_opt, Table};

use super::{align, cell, content, contrast, index_by, universality, Ctx, Summary};
use crate::error::Result;
use crate::state::{hash_json, ALL};

pub const STAGE: &str = "report";
pub const MODELS_FILE: &str = "report/models.csv";
pub const DIMENSIONS_FILE: &str = "report/dimensions.csv";
pub const HISTOGRAM_FILE: &str = "report/universality_histogram.csv";

const HISTOGRAM_BINS: usize = 20;

/// Decile (1-based) of each value when sorted ascending, ties by position.
fn deciles(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * 10 / n + 1;
    }
    out
}

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let manifest = ctx.manifest()?;
    let univ = ctx.ws.require(universality::STAGE, ALL)?;
    let cont = ctx.ws.require(content::STAGE, ALL)?;
    // Optional stages join in when they have run.
    let optional = |stage: &'static str| -> Result<Option<Value>> {
        match ctx.ws.read_marker(stage, ALL)? {
            Some(_) => Ok(Some(json!(ctx.ws.require(stage, ALL)?.outputs))),
            None => Ok(None),
        }
    };
    let aligned = optional(align::STAGE)?;
    let contrasted = optional(contrast::STAGE)?;
    let input = hash_json(&json!({
        "stage": STAGE,
        "models": manifest.ids().collect::<Vec<_>>(),
        "metadata": manifest.models.iter().map(|m| json!(m)).collect::<Vec<_>>(),
        "universality": univ.outputs,
        "content": cont.outputs,
        "align": aligned,
        "contrast": contrasted,
    }));
    let outcome = ctx.ws.run_unit(STAGE, ALL, &input, ctx.force, || {
        let ids: Vec<&str> = manifest.ids().collect();
        let reports = universality::load_reports(ctx, &ids)?;
        let umodels: Table = ctx.load(universality::MODELS_FILE)?;
        let urows = index_by(&umodels, "model_id")?;
        let arows = match aligned {
            Some(_) => {
                let t: Table = ctx.load(align::MODELS_FILE)?;
                let rows = index_by(&t, "model_id")?;
                Some((t, rows))
            }
            None => None,
        };

        ctx.ws.ensure_dir(STAGE)?;
        let mut written = Vec::new();

        let align_cols = [
            "encoding",
            "encoding_universal",
            "encoding_specific",
            "triplet_accuracy",
            "triplet_universal",
            "triplet_specific",
        ];
        let mut columns: Vec<&str> = vec![
            "model_id",
            "architecture_class",
            "family",
            "objective",
            "training_data",
            "imagenet_top1",
            "parameter_count",
            "universality",
            "ceiling_mean",
            "mean_cka",
        ];
        columns.extend(align_cols);
        let mut models = Table::new(columns);
        for entry in &manifest.models {
            let id = &entry.model_id;
            let u = &urows[id];
            let mut row = vec![
                id.clone(),
                entry.architecture_class.to_string(),
                entry.family.clone(),
                entry.objective.clone(),
                entry.training_data.clone(),
                fmt_opt(entry.imagenet_top1),
                entry.parameter_count.map(|p| p.to_string()).unwrap_or_default(),
                cell(&umodels, u, "universality"),
                cell(&umodels, u, "ceiling_mean"),
                cell(&umodels, u, "mean_cka"),
            ];
            for c in align_cols {
                row.push(match &arows {
                    Some((t, rows)) => rows.get(id).map(|r| cell(t, r, c)).unwrap_or_default(),
                    None => String::new(),
                });
            }
            models.push(row);
        }
        written.extend(ctx.save(MODELS_FILE, &models)?);

        let dims_in: Table = ctx.load(content::DIMENSIONS_FILE)?;
        let calibrated: Vec<f64> = reports.iter().flat_map(|r| r.calibrated.iter().copied()).collect();
        let decile_of = deciles(&calibrated);
        let mut dims = Table::new([
            "model_id",
            "dim",
            "raw",
            "threshold",
            "calibrated",
            "ceiling",
            "decile",
            "eta2",
            "delta_r2",
        ]);
        let mut flat = 0;
        for rep in &reports {
            for k in 0..rep.rank() {
                let content_row = &dims_in.rows[flat];
                dims.push(vec![
                    rep.model_id.clone(),
                    k.to_string(),
                    fmt_f64(rep.raw[k]),
                    fmt_f64(rep.thresholds[k]),
                    fmt_f64(rep.calibrated[k]),
                    rep.ceiling.as_ref().map(|c| fmt_f64(c[k])).unwrap_or_default(),
                    decile_of[flat].to_string(),
                    cell(&dims_in, content_row, "eta2"),
                    cell(&dims_in, content_row, "delta_r2"),
                ]);
                flat += 1;
            }
        }
        written.extend(ctx.save(DIMENSIONS_FILE, &dims)?);

        let mut counts = [0usize; HISTOGRAM_BINS];
        for v in &calibrated {
            let bin = ((v * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        let mut hist = Table::new(["bin_low", "bin_high", "count"]);
        for (b, c) in counts.iter().enumerate() {
            hist.push(vec![
                fmt_f64(b as f64 / HISTOGRAM_BINS as f64),
                fmt_f64((b + 1) as f64 / HISTOGRAM_BINS as f64),
                c.to_string(),
            ]);
        }
        written.extend(ctx.save(HISTOGRAM_FILE, &hist)?);

        let deciles: Table = ctx.load(content::DECILES_FILE)?;
        written.extend(ctx.save(&format!("{STAGE}/deciles.csv"), &deciles)?);
        if contrasted.is_some() {
            let t: Table = ctx.load(contrast::RESULTS_FILE)?;
            written.extend(ctx.save(&format!("{STAGE}/contrasts.csv"), &t)?);
        }
        Ok(written)
    })?;
    Ok(Summary::of([outcome]))
}
