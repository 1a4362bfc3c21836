use serde_json::json;
use unidim::io::{fmt_f64, Table};
use unidim::kernel::SimilarityMatrix;
use unidim::rng::derive_seed;
use unidim::snmf::{fit_model, rank_sweep, stability, SnmfOptions};

use super::{kernel, model_dir, Ctx, Summary};
use crate::error::Result;
use crate::state::hash_json;

pub const STAGE: &str = "factorize";

pub fn seed_file(model_id: &str, b: usize) -> String {
    format!("{}/seed{b}.npy", model_dir(STAGE, model_id))
}

pub fn central_file(model_id: &str) -> String {
    format!("{}/central.npy", model_dir(STAGE, model_id))
}

pub fn selection_file(model_id: &str) -> String {
    format!("{}/selection.json", model_dir(STAGE, model_id))
}

/// Restart seeds shared by every model.
pub fn restart_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|b| derive_seed(base, &[b])).collect()
}

/// Grid position of the chosen bandwidth and of the central restart.
pub fn chosen_indices(ctx: &Ctx, model_id: &str) -> Result<(usize, usize)> {
    let sel = ctx.read_json(&selection_file(model_id))?;
    let get = |k: &str| {
        sel[k]
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| crate::error::CliError::Config(format!("{}: missing {k}", selection_file(model_id))))
    };
    Ok((get("chosen_index")?, get("central_index")?))
}

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let manifest = ctx.manifest()?;
    let cfg = &ctx.cfg;
    let seeds = restart_seeds(cfg.rng_seed, cfg.seeds);
    let opts = SnmfOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        ..Default::default()
    };
    ctx.per_model(&manifest, |entry| {
        let id = &entry.model_id;
        let upstream = ctx.ws.require(kernel::STAGE, id)?;
        let input = hash_json(&json!({
            "stage": STAGE,
            "rank": cfg.rank,
            "seeds": seeds,
            "tol": cfg.tol,
            "max_iters": cfg.max_iters,
            "rank_sweep": cfg.rank_sweep,
            "float_width": cfg.float_width,
            "upstream": upstream.outputs,
        }));
        ctx.ws.run_unit(STAGE, id, &input, ctx.force, || {
            let grid: Vec<SimilarityMatrix> = (0..cfg.alpha_grid.len())
                .map(|i| ctx.load(&kernel::alpha_file(id, i)))
                .collect::<Result<_>>()?;
            let fit = fit_model(&grid, cfg.rank, &seeds, &opts)?;
            let sel = &fit.selection;
            let chosen_index = fit
                .fits
                .iter()
                .position(|f| f.alpha == sel.chosen_alpha)
                .expect("chosen alpha is on the grid");

            let mut written = Vec::new();
            for (b, e) in fit.chosen().embeddings.iter().enumerate() {
                written.extend(ctx.save(&seed_file(id, b), e)?);
            }
            written.extend(ctx.save(&central_file(id), fit.central())?);

            let mut scores = Table::new(["alpha", "stability", "explained_variance", "harmonic_mean"]);
            for s in &sel.per_alpha {
                scores.push(vec![
                    fmt_f64(s.alpha),
                    fmt_f64(s.stability),
                    fmt_f64(s.explained_variance),
                    fmt_f64(s.harmonic_mean),
                ]);
            }
            written.extend(ctx.save(&format!("{}/alpha_scores.csv", model_dir(STAGE, id)), &scores)?);
            written.extend(ctx.write_json(
                &selection_file(id),
                &json!({
                    "model_id": id,
                    "chosen_alpha": sel.chosen_alpha,
                    "chosen_index": chosen_index,
                    "central_seed": sel.central_seed,
                    "central_index": sel.central_index,
                    "seeds": seeds,
                }),
            )?);

            if !cfg.rank_sweep.is_empty() {
                let sweep = rank_sweep(&grid[chosen_index], &cfg.rank_sweep, &seeds, &opts)?;
                let mut t = Table::new([
                    "rank",
                    "best_seed",
                    "best_explained_variance",
                    "central_seed",
                    "central_explained_variance",
                    "stability",
                ]);
                for rf in &sweep {
                    let stab = if rf.embeddings.len() >= 2 { stability(&rf.embeddings)? } else { f64::NAN };
                    t.push(vec![
                        rf.rank.to_string(),
                        rf.best().seed.to_string(),
                        fmt_f64(rf.best().explained_variance),
                        rf.central().seed.to_string(),
                        fmt_f64(rf.central().explained_variance),
                        fmt_f64(stab),
                    ]);
                    written.extend(ctx.save(&format!("{}/rank{}.npy", model_dir(STAGE, id), rf.rank), rf.central())?);
                }
                written.extend(ctx.save(&format!("{}/ranks.csv", model_dir(STAGE, id)), &t)?);
            }
            Ok(written)
        })
    })
}
