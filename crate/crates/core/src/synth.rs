//! Planted synthetic data: factor matrices with known structure, ensembles of
//! embeddings sharing a subset of dimensions, and feature matrices that
//! induce such ensembles through the kernel.

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::alignment::{NeuralDataset, Triplet};
use crate::io::{CategoryIndex, FeatureMatrix};
use crate::rng::task_rng;
use crate::snmf::Embedding;

fn cos2(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    let d = a.dot(&b);
    d * d / (a.dot(&a) * b.dot(&b))
}

/// Largest squared cosine between distinct columns.
pub fn max_column_overlap(w: &Array2<f64>) -> f64 {
    let r = w.ncols();
    let mut worst = 0.0f64;
    for a in 0..r {
        for b in (a + 1)..r {
            worst = worst.max(cos2(w.column(a), w.column(b)));
        }
    }
    worst
}

/// Nonnegative `n × r` factors with near-disjoint supports: every row loads
/// strongly on one factor and occasionally weakly on a second.
pub fn planted_factors(n: usize, r: usize, seed: u64) -> Array2<f64> {
    let mut rng = task_rng(seed, &[0x9f]);
    let mut primary: Vec<usize> = (0..n).map(|i| i % r).collect();
    primary.shuffle(&mut rng);
    let mut w = Array2::<f64>::zeros((n, r));
    for (i, &k) in primary.iter().enumerate() {
        w[[i, k]] = rng.random_range(0.5..1.5);
        if r > 1 && rng.random::<f64>() < 0.15 {
            let mut other = rng.random_range(0..r - 1);
            if other >= k {
                other += 1;
            }
            w[[i, other]] = rng.random_range(0.0..0.3);
        }
    }
    w
}

/// Sparse nonnegative column: each entry is `U(0,1)` with probability `density`.
fn sparse_column(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Array1<f64> {
    let mut col = Array1::<f64>::zeros(n);
    for v in col.iter_mut() {
        if rng.random::<f64>() < density {
            *v = rng.random::<f64>();
        }
    }
    if col.iter().all(|v| *v == 0.0) {
        col[rng.random_range(0..n)] = 1.0;
    }
    col
}

/// Column constant within categories: a random subset of categories is active.
fn category_column(rng: &mut ChaCha8Rng, categories: &CategoryIndex, density: f64) -> Array1<f64> {
    let levels = sparse_column(rng, categories.n_categories(), density);
    Array1::from_iter(categories.category_of.iter().map(|&c| levels[c]))
}

/// Recipe for a planted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_models: usize,
    pub n_categories: usize,
    pub per_category: usize,
    pub shared: usize,
    pub private: usize,
    /// Log-normal multiplicative jitter applied to shared columns per model.
    pub noise: f64,
    /// Density of nonzero loadings.
    pub density: f64,
    /// Shared columns are constant within categories (before jitter).
    pub category_aligned: bool,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            n_models: 10,
            n_categories: 50,
            per_category: 10,
            shared: 4,
            private: 4,
            noise: 0.2,
            density: 0.3,
            category_aligned: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedEnsemble {
    pub embeddings: Vec<Embedding>,
    pub categories: CategoryIndex,
    /// `N × shared` ground-truth shared columns.
    pub shared_base: Array2<f64>,
    /// `shared_columns[m][s]` is the column of model `m` carrying shared dim `s`.
    pub shared_columns: Vec<Vec<usize>>,
}

impl PlantedEnsemble {
    pub fn is_shared(&self, model: usize, column: usize) -> bool {
        self.shared_columns[model].contains(&column)
    }
}

/// Models sharing `shared` dimensions (jittered copies of a common base) and
/// carrying `private` independent dimensions each, in shuffled column order.
pub fn planted_ensemble(spec: &EnsembleSpec) -> PlantedEnsemble {
    let categories = CategoryIndex::balanced(spec.n_categories, spec.per_category);
    let n = categories.n_images();
    let r = spec.shared + spec.private;
    let mut base_rng = task_rng(spec.seed, &[0xba5e]);
    let mut shared_base = Array2::<f64>::zeros((n, spec.shared));
    for s in 0..spec.shared {
        let col = if spec.category_aligned {
            category_column(&mut base_rng, &categories, spec.density)
        } else {
            sparse_column(&mut base_rng, n, spec.density)
        };
        shared_base.column_mut(s).assign(&col);
    }

    let mut embeddings = Vec::with_capacity(spec.n_models);
    let mut shared_columns = Vec::with_capacity(spec.n_models);
    for m in 0..spec.n_models {
        let mut rng = task_rng(spec.seed, &[0x30de1, m as u64]);
        let mut order: Vec<usize> = (0..r).collect();
        order.shuffle(&mut rng);
        let mut w = Array2::<f64>::zeros((n, r));
        for s in 0..spec.shared {
            let mut col = shared_base.column(s).to_owned();
            for v in col.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v *= (spec.noise * z).exp();
            }
            w.column_mut(order[s]).assign(&col);
        }
        for p in 0..spec.private {
            let col = sparse_column(&mut rng, n, spec.density);
            w.column_mut(order[spec.shared + p]).assign(&col);
        }
        shared_columns.push(order[..spec.shared].to_vec());
        embeddings.push(Embedding::from_loadings(format!("model{m:02}"), w).expect("nonnegative"));
    }
    PlantedEnsemble {
        embeddings,
        categories,
        shared_base,
        shared_columns,
    }
}

/// Independent random sparse embeddings with no shared structure.
pub fn independent_embeddings(n_models: usize, n: usize, r: usize, density: f64, seed: u64) -> Vec<Embedding> {
    (0..n_models)
        .map(|m| {
            let mut rng = task_rng(seed, &[0x1d, m as u64]);
            let mut w = Array2::<f64>::zeros((n, r));
            for k in 0..r {
                w.column_mut(k).assign(&sparse_column(&mut rng, n, density));
            }
            Embedding::from_loadings(format!("random{m:02}"), w).expect("nonnegative")
        })
        .collect()
}

/// Recipe for feature matrices whose similarity structure shares
/// category-level latent factors across models.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub n_models: usize,
    pub n_categories: usize,
    pub per_category: usize,
    pub shared_latents: usize,
    pub private_latents: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            n_models: 10,
            n_categories: 25,
            per_category: 12,
            shared_latents: 4,
            private_latents: 4,
            feature_dim: 32,
            noise: 0.3,
            seed: 0,
        }
    }
}

pub struct PlantedFeatures {
    pub features: Vec<FeatureMatrix>,
    pub categories: CategoryIndex,
    /// `N × shared_latents` category-level latent codes common to all models.
    pub shared_latent: Array2<f64>,
}

/// Each model sees shared category-level codes plus private image-level
/// codes, mixed through its own random linear map, plus isotropic noise.
pub fn planted_features(spec: &FeatureSpec) -> PlantedFeatures {
    let categories = CategoryIndex::balanced(spec.n_categories, spec.per_category);
    let n = categories.n_images();
    let mut base_rng = task_rng(spec.seed, &[0xfea7]);
    let mut shared_latent = Array2::<f64>::zeros((n, spec.shared_latents));
    for s in 0..spec.shared_latents {
        let col = category_column(&mut base_rng, &categories, 0.4);
        shared_latent.column_mut(s).assign(&(col * 2.0));
    }
    let features = (0..spec.n_models)
        .map(|m| {
            let mut rng = task_rng(spec.seed, &[0xfea8, m as u64]);
            let k = spec.shared_latents + spec.private_latents;
            let mut latent = Array2::<f64>::zeros((n, k));
            latent.slice_mut(s![.., ..spec.shared_latents]).assign(&shared_latent);
            for p in 0..spec.private_latents {
                let col = sparse_column(&mut rng, n, 0.3);
                latent.column_mut(spec.shared_latents + p).assign(&col);
            }
            let mix = Array2::from_shape_simple_fn((k, spec.feature_dim), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let mut x = latent.dot(&mix);
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += spec.noise * z;
            }
            let mut fm = FeatureMatrix::new(format!("model{m:02}"), x, categories.image_ids.clone())
                .expect("finite planted features");
            fm.dtype = crate::io::DType::F4;
            fm
        })
        .collect();
    PlantedFeatures {
        features,
        categories,
        shared_latent,
    }
}

/// Odd-one-out trials whose "human" choice follows cosine similarity of the
/// rows of `reference` (`C × d`). Trials touching an all-zero row or with a
/// tied most-similar pair are redrawn.
pub fn reference_triplets(reference: &Array2<f64>, count: usize, seed: u64) -> Vec<Triplet> {
    let c = reference.nrows();
    assert!(c >= 3, "triplets need at least 3 categories");
    let norms: Vec<f64> = reference.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    assert!(
        norms.iter().filter(|v| **v > 0.0).count() >= 3,
        "reference needs at least 3 nonzero rows"
    );
    let cos = |a: usize, b: usize| reference.row(a).dot(&reference.row(b)) / (norms[a] * norms[b]);
    let mut rng = task_rng(seed, &[0x7219]);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut t = [0usize; 3];
        for slot in 0..3 {
            t[slot] = loop {
                let x = rng.random_range(0..c);
                if norms[x] > 0.0 && !t[..slot].contains(&x) {
                    break x;
                }
            };
        }
        let [a, b, d] = t;
        let pairs = [(cos(a, b), a, b, d), (cos(a, d), a, d, b), (cos(b, d), b, d, a)];
        let best = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<_> = pairs.iter().filter(|p| p.0 == best).collect();
        if winners.len() == 1 {
            let (_, i, j, k) = *winners[0];
            out.push(Triplet { i, j, k });
        }
    }
    out
}

/// Channels driven linearly by `latent` (`N × d`) plus Gaussian noise, each
/// z-scored. Channel `p` has signal variance fraction `reliabilities[p]`,
/// which is also recorded as its reliability.
pub fn neural_responses(latent: &Array2<f64>, reliabilities: &[f64], subjects: &[String], seed: u64) -> NeuralDataset {
    assert_eq!(reliabilities.len(), subjects.len());
    let (n, d) = latent.dim();
    let mut responses = Array2::<f64>::zeros((n, reliabilities.len()));
    for (p, &rel) in reliabilities.iter().enumerate() {
        let mut rng = task_rng(seed, &[0x2e0, p as u64]);
        let beta: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let signal = latent.dot(&beta);
        let mean = signal.mean().unwrap_or(0.0);
        let sd = (signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let noise_sd = if rel > 0.0 { sd * ((1.0 - rel) / rel).max(0.0).sqrt() } else { 1.0 };
        let mut col: Array1<f64> = signal
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + noise_sd * z
            })
            .collect();
        let m = col.mean().unwrap_or(0.0);
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        col.mapv_inplace(|v| if s > 0.0 { (v - m) / s } else { 0.0 });
        responses.column_mut(p).assign(&col);
    }
    NeuralDataset {
        responses,
        channel_ids: (0..reliabilities.len()).map(|p| format!("ch{p:03}")).collect(),
        reliabilities: reliabilities.to_vec(),
        subjects: subjects.to_vec(),
    }
}
