use rayon::prelude::*;
use serde_json::json;
use unidim::alignment::{
    alignment_universality_correlation, category_embedding, encoding_score, half_masked_evaluation, load_neural,
    load_triplets, triplet_accuracy, EncodingScore, RidgeOptions, TripletResult,
};
use unidim::io::{fmt_f64, Table};
use unidim::snmf::Embedding;
use unidim::stats::{mean, paired_t, sign_test};

use super::{factorize, universality, Ctx, Summary};
use crate::error::{CliError, Result};
use crate::state::{hash_json, sha256_file, ALL};

pub const STAGE: &str = "align";
pub const MODELS_FILE: &str = "align/models.csv";

/// Whether the config names any alignment target.
pub fn configured(ctx: &Ctx) -> bool {
    let c = &ctx.cfg;
    (c.neural_responses.is_some() && c.neural_channels.is_some()) || c.triplets.is_some()
}

struct ModelAlignment {
    encoding: Option<(EncodingScore, f64, f64)>,
    triplets: Option<(TripletResult, f64, f64)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One summary row comparing the universal and specific halves across models.
fn summary_row(t: &mut Table, measure: &str, full: &[f64], uni: &[f64], spec: &[f64], model_u: &[f64]) {
    let corr = alignment_universality_correlation(full, model_u).ok();
    let pt = paired_t(uni, spec).ok();
    let st = sign_test(uni, spec).ok();
    t.push(vec![
        measure.into(),
        full.len().to_string(),
        opt(corr.map(|c| c.coefficient)),
        opt(corr.map(|c| c.p)),
        fmt_f64(mean(uni)),
        fmt_f64(mean(spec)),
        opt(pt.map(|p| p.t)),
        opt(pt.map(|p| p.p)),
        st.map(|s| s.positive.to_string()).unwrap_or_default(),
        st.map(|s| s.negative.to_string()).unwrap_or_default(),
        opt(st.map(|s| s.p_greater)),
    ]);
}

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let cfg = &ctx.cfg;
    if !configured(ctx) {
        return Err(CliError::Config(
            "align needs neural_responses and neural_channels, or triplets, in the config".into(),
        ));
    }
    let manifest = ctx.manifest()?;
    let fits = ctx.require_models(factorize::STAGE, &manifest)?;
    let univ = ctx.ws.require(universality::STAGE, ALL)?;
    let neural_paths = cfg.neural_responses.as_ref().zip(cfg.neural_channels.as_ref());
    let hash_opt = |p: Option<&std::path::PathBuf>| p.map(|p| sha256_file(p)).transpose();
    let input = hash_json(&json!({
        "stage": STAGE,
        "models": manifest.ids().collect::<Vec<_>>(),
        "cv_folds": cfg.cv_folds,
        "ridge_grid": cfg.ridge_grid,
        "rng_seed": cfg.rng_seed,
        "reliability_threshold": cfg.reliability_threshold,
        "neural_responses": hash_opt(neural_paths.map(|p| p.0))?,
        "neural_channels": hash_opt(neural_paths.map(|p| p.1))?,
        "triplets": hash_opt(cfg.triplets.as_ref())?,
        "images": ctx.images_hash(&manifest)?,
        "factorize": fits.values().map(|m| &m.outputs).collect::<Vec<_>>(),
        "universality": univ.outputs,
    }));
    let outcome = ctx.ws.run_unit(STAGE, ALL, &input, ctx.force, || {
        let ids: Vec<&str> = manifest.ids().collect();
        let reports = universality::load_reports(ctx, &ids)?;
        let embeddings: Vec<Embedding> = ids
            .iter()
            .map(|id| ctx.load(&factorize::central_file(id)))
            .collect::<Result<_>>()?;
        let n = embeddings.first().map(|e| e.n()).unwrap_or(0);

        let neural = neural_paths.map(|(r, c)| load_neural(r, c, n)).transpose()?;
        let ridge = RidgeOptions {
            folds: cfg.cv_folds,
            grid: cfg.ridge_grid.clone(),
            seed: cfg.rng_seed,
            ..Default::default()
        };
        let triplet_data = match &cfg.triplets {
            Some(path) => {
                let cats = ctx.require_images(&manifest, "triplet alignment")?;
                let trips = load_triplets(path, cats.n_categories())?;
                Some((cats, trips))
            }
            None => None,
        };

        let per_model: Vec<Result<ModelAlignment>> = embeddings
            .par_iter()
            .zip(reports.par_iter())
            .map(|(emb, rep)| {
                let w = emb.w.view();
                let encoding = match &neural {
                    Some(data) => {
                        let full = encoding_score(w, data, cfg.reliability_threshold, &ridge)?;
                        let halves = half_masked_evaluation(w, &rep.calibrated, |x| {
                            encoding_score(x, data, cfg.reliability_threshold, &ridge).map(|e| e.score)
                        })?;
                        Some((full, halves.universal, halves.specific))
                    }
                    None => None,
                };
                let triplets = match &triplet_data {
                    Some((cats, trips)) => {
                        let full = triplet_accuracy(category_embedding(w, cats)?.view(), trips)?;
                        let halves = half_masked_evaluation(w, &rep.calibrated, |x| {
                            Ok(triplet_accuracy(category_embedding(x, cats)?.view(), trips)?.accuracy)
                        })?;
                        Some((full, halves.universal, halves.specific))
                    }
                    None => None,
                };
                Ok(ModelAlignment { encoding, triplets })
            })
            .collect();
        let per_model: Vec<ModelAlignment> = per_model.into_iter().collect::<Result<_>>()?;

        ctx.ws.ensure_dir(STAGE)?;
        let mut written = Vec::new();
        let mut models = Table::new([
            "model_id",
            "universality",
            "encoding",
            "encoding_universal",
            "encoding_specific",
            "triplet_accuracy",
            "triplet_universal",
            "triplet_specific",
            "triplets_evaluated",
            "triplets_skipped",
        ]);
        let mut neurons = Table::new(["model_id", "channel_id", "subject", "reliability", "ceiling", "r"]);
        for ((id, rep), a) in ids.iter().zip(&reports).zip(&per_model) {
            let enc = a.encoding.as_ref();
            let tri = a.triplets.as_ref();
            models.push(vec![
                id.to_string(),
                fmt_f64(rep.model_mean),
                opt(enc.map(|e| e.0.score)),
                opt(enc.map(|e| e.1)),
                opt(enc.map(|e| e.2)),
                opt(tri.map(|t| t.0.accuracy)),
                opt(tri.map(|t| t.1)),
                opt(tri.map(|t| t.2)),
                tri.map(|t| t.0.evaluated.to_string()).unwrap_or_default(),
                tri.map(|t| t.0.skipped.to_string()).unwrap_or_default(),
            ]);
            if let Some((score, _, _)) = enc {
                for nr in &score.neurons {
                    neurons.push(vec![
                        id.to_string(),
                        nr.channel_id.clone(),
                        nr.subject.clone(),
                        fmt_f64(nr.reliability),
                        fmt_f64(nr.ceiling),
                        fmt_f64(nr.r),
                    ]);
                }
            }
        }
        written.extend(ctx.save(MODELS_FILE, &models)?);
        if neural.is_some() {
            written.extend(ctx.save(&format!("{STAGE}/neurons.csv"), &neurons)?);
        }

        let model_u: Vec<f64> = reports.iter().map(|r| r.model_mean).collect();
        let mut summary = Table::new([
            "measure",
            "models",
            "r_with_universality",
            "p_r",
            "mean_universal_half",
            "mean_specific_half",
            "paired_t",
            "p_paired_t",
            "universal_better",
            "specific_better",
            "p_sign_test",
        ]);
        if neural.is_some() {
            let get = |f: fn(&(EncodingScore, f64, f64)) -> f64| -> Vec<f64> {
                per_model.iter().map(|a| f(a.encoding.as_ref().unwrap())).collect()
            };
            summary_row(&mut summary, "encoding", &get(|e| e.0.score), &get(|e| e.1), &get(|e| e.2), &model_u);
        }
        if triplet_data.is_some() {
            let get = |f: fn(&(TripletResult, f64, f64)) -> f64| -> Vec<f64> {
                per_model.iter().map(|a| f(a.triplets.as_ref().unwrap())).collect()
            };
            summary_row(&mut summary, "triplet", &get(|t| t.0.accuracy), &get(|t| t.1), &get(|t| t.2), &model_u);
        }
        written.extend(ctx.save(&format!("{STAGE}/summary.csv"), &summary)?);
        Ok(written)
    })?;
    Ok(Summary::of([outcome]))
}
