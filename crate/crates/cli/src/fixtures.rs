//! Synthetic planted ensemble with every input the pipeline reads.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use unidim::content::DimensionLabel;
use unidim::io::npy::write_matrix;
use unidim::io::{save_manifest, ArchitectureClass, DType, ModelEntry, ModelManifest, Table};
use unidim::rng::derive_seed;
use unidim::synth::{neural_responses, planted_features, reference_triplets, FeatureSpec};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct FixtureOptions {
    pub models: usize,
    pub categories: usize,
    pub per_category: usize,
    pub rank: usize,
    pub seeds: usize,
    pub permutations: usize,
    pub channels: usize,
    pub triplets: usize,
    pub seed: u64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            models: 10,
            categories: 25,
            per_category: 12,
            rank: 8,
            seeds: 3,
            permutations: 200,
            channels: 24,
            triplets: 2000,
            seed: 0,
        }
    }
}

const CLASSES: [ArchitectureClass; 4] = [
    ArchitectureClass::Convolutional,
    ArchitectureClass::Transformer,
    ArchitectureClass::MlpMixer,
    ArchitectureClass::Hybrid,
];
const OBJECTIVES: [&str; 3] = ["supervised", "self-supervised", "contrastive"];

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, serde_json::to_string_pretty(value).expect("json serializes") + "\n")
}

/// Whether a contrast spec has at least two groups of two models, or at
/// least two groups that are all singletons.
fn testable(manifest: &ModelManifest, spec: &serde_json::Value) -> bool {
    let admitted = |m: &ModelEntry| match spec["filter"]["objective"].clone() {
        serde_json::Value::Null => true,
        serde_json::Value::String(o) => m.objective == o,
        serde_json::Value::Array(list) => list.iter().any(|o| o.as_str() == Some(m.objective.as_str())),
        _ => false,
    };
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for m in manifest.models.iter().filter(|m| admitted(m)) {
        if let Some(g) = m.field(spec["group_by"].as_str().unwrap_or_default()) {
            *sizes.entry(g).or_default() += 1;
        }
    }
    let multi = sizes.values().filter(|&&n| n >= 2).count();
    multi >= 2 || (multi == 0 && sizes.len() >= 2)
}

/// Writes `inputs/` and `config.json` under `root`. Returns the manifest path.
pub fn generate(root: &Path, opts: &FixtureOptions) -> Result<std::path::PathBuf> {
    if opts.models < 3 || opts.categories < 3 || opts.per_category < 2 {
        return Err(CliError::Config("fixtures need at least 3 models, 3 categories and 2 images per category".into()));
    }
    let inputs = root.join("inputs");
    let features_dir = inputs.join("features");
    std::fs::create_dir_all(&features_dir).map_err(|e| CliError::io(&features_dir, e))?;

    let planted = planted_features(&FeatureSpec {
        n_models: opts.models,
        n_categories: opts.categories,
        per_category: opts.per_category,
        seed: opts.seed,
        ..Default::default()
    });
    let cats = &planted.categories;

    let mut models = Vec::new();
    for (m, fm) in planted.features.iter().enumerate() {
        let rel = format!("features/{}.npy", fm.model_id);
        write_matrix(&inputs.join(&rel), &fm.values, DType::F4)?;
        models.push(ModelEntry {
            model_id: fm.model_id.clone(),
            architecture_class: CLASSES[m % CLASSES.len()],
            family: format!("family{}", m % 3),
            objective: OBJECTIVES[m % OBJECTIVES.len()].into(),
            training_data: "synthetic".into(),
            imagenet_top1: Some(0.6 + 0.02 * m as f64),
            parameter_count: Some(1_000_000 * (m as u64 + 1)),
            features: rel.into(),
        });
    }

    let mut images = Table::new(["image_id", "category", "designated"]);
    for (i, id) in cats.image_ids.iter().enumerate() {
        let c = cats.category_of[i];
        let designated = cats.designated[c] == Some(i);
        images.push(vec![id.clone(), cats.categories[c].clone(), if designated { "1" } else { "0" }.into()]);
    }
    images.write_csv(&inputs.join("images.csv"))?;

    let manifest = ModelManifest {
        schema_version: "1".into(),
        images: Some("images.csv".into()),
        models,
        base_dir: inputs.clone(),
    };
    let manifest_path = inputs.join("manifest.json");
    save_manifest(&manifest, &manifest_path)?;

    // Neural channels respond to the shared category code with graded reliability.
    let p = opts.channels;
    let reliabilities: Vec<f64> = (0..p).map(|i| 0.1 + 0.8 * i as f64 / (p.max(2) - 1) as f64).collect();
    let subjects: Vec<String> = (0..p).map(|i| if i % 2 == 0 { "F" } else { "N" }.to_string()).collect();
    let neural = neural_responses(&planted.shared_latent, &reliabilities, &subjects, derive_seed(opts.seed, &[0x2e]));
    write_matrix(&inputs.join("neural.npy"), &neural.responses, DType::F4)?;
    let mut channels = Table::new(["channel_id", "reliability", "subject"]);
    for i in 0..p {
        channels.push(vec![
            neural.channel_ids[i].clone(),
            format!("{:.4}", neural.reliabilities[i]),
            neural.subjects[i].clone(),
        ]);
    }
    channels.write_csv(&inputs.join("neural_channels.csv"))?;

    // Reference judgments follow the shared code at each category's designated image.
    let rows = cats.designated_rows()?;
    let reference = planted.shared_latent.select(ndarray::Axis(0), &rows);
    let mut triplets = Table::new(["i", "j", "k"]);
    for t in reference_triplets(&reference, opts.triplets, derive_seed(opts.seed, &[0x3a])) {
        triplets.push(vec![(t.i + 1).to_string(), (t.j + 1).to_string(), (t.k + 1).to_string()]);
    }
    triplets.write_csv(&inputs.join("triplets.csv"))?;

    let mut labels = Table::new(["dimension_id", "label"]);
    for k in 0..opts.rank {
        let label = DimensionLabel::ALL[k % 4];
        labels.push(vec![format!("{}:{k}", manifest.models[0].model_id), label.to_string()]);
    }
    labels.write_csv(&inputs.join("labels.csv"))?;

    let candidates = [
        json!({"name": "objective", "group_by": "objective"}),
        json!({"name": "supervised-vs-self-supervised", "filter": {"objective": ["supervised", "self-supervised"]}, "group_by": "objective"}),
        json!({"name": "architecture", "group_by": "architecture_class"}),
        json!({"name": "contrastive-models", "filter": {"objective": "contrastive"}, "group_by": "model_id"}),
    ];
    let specs: Vec<_> = candidates.into_iter().filter(|c| testable(&manifest, c)).collect();
    write_json(&inputs.join("contrasts.json"), &json!(specs))?;

    write_json(
        &root.join("config.json"),
        &json!({
            "rank": opts.rank,
            "seeds": opts.seeds,
            "permutations": opts.permutations,
            "bootstrap_iters": 200,
            "contrast_bootstrap_iters": 2000,
            "rng_seed": opts.seed,
            "manifest": "inputs/manifest.json",
            "neural_responses": "inputs/neural.npy",
            "neural_channels": "inputs/neural_channels.csv",
            "triplets": "inputs/triplets.csv",
            "contrasts": "inputs/contrasts.json",
            "labels": "inputs/labels.csv",
        }),
    )?;
    Ok(manifest_path)
}
