use serde_json::json;
use unidim::io::load_feature_matrix;
use unidim::kernel::{kernel_grid_with, KernelOptions};

use super::{model_dir, Ctx, Summary};
use crate::error::Result;
use crate::state::{hash_json, sha256_file};

pub const STAGE: &str = "kernel";

pub fn alpha_file(model_id: &str, index: usize) -> String {
    format!("{}/alpha{index:02}.npy", model_dir(STAGE, model_id))
}

pub fn run(ctx: &Ctx) -> Result<Summary> {
    let manifest = ctx.manifest()?;
    let images = ctx.images(&manifest)?;
    let ids = images.as_ref().map(|c| c.image_ids.clone());
    let images_hash = ctx.images_hash(&manifest)?;
    let cfg = &ctx.cfg;
    ctx.per_model(&manifest, |entry| {
        let path = manifest.feature_path(entry);
        let input = hash_json(&json!({
            "stage": STAGE,
            "alpha_grid": cfg.alpha_grid,
            "standardize": cfg.standardize,
            "float_width": cfg.float_width,
            "features": sha256_file(&path)?,
            "images": images_hash,
        }));
        ctx.ws.run_unit(STAGE, &entry.model_id, &input, ctx.force, || {
            let fm = load_feature_matrix(&path, &entry.model_id, ids.as_deref(), cfg.dtype())?;
            let grid = kernel_grid_with(&fm, &cfg.alpha_grid, KernelOptions { standardize: cfg.standardize })?;
            let mut written = Vec::new();
            for (i, s) in grid.iter().enumerate() {
                written.extend(ctx.save(&alpha_file(&entry.model_id, i), s)?);
            }
            Ok(written)
        })
    })
}
