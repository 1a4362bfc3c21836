use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use unidim::io::FeatureMatrix;
use unidim::kernel::{rbf_similarity, SimilarityMatrix};
use unidim::rng::task_rng;
use unidim::snmf::{
    align_embeddings, explained_variance, fit_from, rank_sweep, snmf_fit, stability, Embedding, SnmfOptions,
};
use unidim::synth::{max_column_overlap, planted_factors};
use unidim::universality::match_models;

/// All permutations of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, a, out);
            let j = if k % 2 == 0 { i } else { 0 };
            a.swap(j, k - 1);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

fn kernel_fixture(n: usize, d: usize, alpha: f64, seed: u64) -> SimilarityMatrix {
    let mut rng = task_rng(seed, &[]);
    let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    rbf_similarity(&FeatureMatrix::anonymous("fixture", x).unwrap(), alpha).unwrap()
}

fn planted_similarity(w: &Array2<f64>) -> SimilarityMatrix {
    SimilarityMatrix::from_values("planted", w.dot(&w.t())).unwrap()
}

fn objective(s: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let r = w.dot(&w.t()) - s;
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn random_start(s: &Array2<f64>, rank: usize, seed: u64) -> Array2<f64> {
    let scale = (s.mean().unwrap() / rank as f64).sqrt();
    let mut rng = task_rng(seed ^ 0xA5A5, &[]);
    Array2::from_shape_simple_fn((s.nrows(), rank), || (0.1 + rng.random::<f64>()) * scale)
}

/// Damped multiplicative-update SNMF: `W ← W ∘ (½ + ½·SW / WWᵀW)`.
fn multiplicative_update(s: &Array2<f64>, mut w: Array2<f64>) -> Array2<f64> {
    let mut prev = objective(s, &w);
    for it in 0..50_000 {
        let num = s.dot(&w);
        let den = w.dot(&w.t().dot(&w));
        ndarray::Zip::from(&mut w)
            .and(&num)
            .and(&den)
            .for_each(|w, &a, &b| *w *= 0.5 + 0.5 * a / b.max(1e-300));
        if it % 100 == 99 {
            let obj = objective(s, &w);
            if (prev - obj) <= 1e-12 * prev {
                break;
            }
            prev = obj;
        }
    }
    w
}

/// Mean over truth columns of the Hungarian-matched squared cosine.
fn matched_cos2(truth: &Array2<f64>, est: &Array2<f64>) -> f64 {
    let a = Embedding::from_loadings("truth", truth.clone()).unwrap();
    let b = Embedding::from_loadings("est", est.clone()).unwrap();
    let m = match_models(&a, &b).unwrap();
    m.scores.iter().sum::<f64>() / m.scores.len() as f64
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn rank_one_exact() {
    let w = ndarray::array![[1.0], [2.0], [3.0]];
    let s = planted_similarity(&w);
    let emb = snmf_fit(&s, 1, 0, &SnmfOptions { tol: 1e-14, max_iters: 2000, ..Default::default() }).unwrap();
    assert!(emb.objective <= 1e-8, "objective {}", emb.objective);
    let ratio = &emb.w.column(0) / &w.column(0);
    for r in ratio.iter() {
        assert!((r - 1.0).abs() < 1e-4, "ratio {r}");
    }
}

#[test]
fn traces_are_monotone_and_nonnegative() {
    let s = kernel_fixture(40, 6, 0.5, 1);
    for seed in [1, 2] {
        let emb = snmf_fit(&s, 5, seed, &SnmfOptions::default()).unwrap();
        assert_monotone(&emb.trace);
        assert!(emb.w.iter().all(|v| *v >= 0.0));
        assert_eq!(*emb.trace.last().unwrap(), emb.objective);
        assert!(emb.converged);
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let s = kernel_fixture(30, 5, 0.4, 2);
    let a = snmf_fit(&s, 4, 7, &SnmfOptions::default()).unwrap();
    let b = snmf_fit(&s, 4, 7, &SnmfOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn objective_within_one_percent_of_multiplicative_updates() {
    let s = kernel_fixture(40, 6, 0.5, 1);
    let opts = SnmfOptions { tol: 1e-10, max_iters: 5000, ..Default::default() };
    for seed in 0..3 {
        let w0 = random_start(&s.values, 5, seed);
        let ours = fit_from(&s.values, w0.t().to_owned(), &opts).objective;
        let oracle = objective(&s.values, &multiplicative_update(&s.values, w0));
        assert!(
            (ours - oracle).abs() <= 0.01 * oracle,
            "seed {seed}: BSUM {ours} vs multiplicative {oracle}"
        );
    }
}

#[test]
fn non_convergence_is_reported() {
    let s = kernel_fixture(40, 6, 0.5, 3);
    let emb = snmf_fit(&s, 5, 0, &SnmfOptions { tol: 0.0, max_iters: 3, ..Default::default() }).unwrap();
    assert!(!emb.converged);
    assert_eq!(emb.iterations, 3);
}

#[test]
fn rejects_bad_inputs() {
    let s = kernel_fixture(10, 3, 0.5, 4);
    assert!(snmf_fit(&s, 0, 0, &SnmfOptions::default()).is_err());
    assert!(snmf_fit(&s, 10, 0, &SnmfOptions::default()).is_err());
    // Symmetric, nonnegative, indefinite.
    let bad = SimilarityMatrix::from_values("bad", ndarray::array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
    assert!(snmf_fit(&bad, 1, 0, &SnmfOptions::default()).is_err());
}

#[test]
fn explained_variance_matches_elementwise_oracle() {
    let s = kernel_fixture(20, 4, 0.5, 5);
    let emb = snmf_fit(&s, 3, 0, &SnmfOptions::default()).unwrap();
    let (mut resid, mut total) = (0.0, 0.0);
    for i in 0..20 {
        for j in 0..20 {
            let recon: f64 = (0..3).map(|k| emb.w[[i, k]] * emb.w[[j, k]]).sum();
            resid += (s.values[[i, j]] - recon).powi(2);
            total += s.values[[i, j]].powi(2);
        }
    }
    let oracle = 1.0 - resid / total;
    assert!((emb.explained_variance - oracle).abs() < 1e-10);
    assert!((explained_variance(&s.values, &emb.w) - oracle).abs() < 1e-10);
    assert_eq!(explained_variance(&s.values, &Array2::zeros((20, 3))), 0.0);
}

fn best_of_seeds(s: &SimilarityMatrix, rank: usize, seeds: u64) -> Embedding {
    (0..seeds)
        .map(|seed| snmf_fit(s, rank, seed, &SnmfOptions::default()).unwrap())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .unwrap()
}

#[test]
fn planted_factor_recovery() {
    let truth = planted_factors(200, 8, 0);
    assert!(max_column_overlap(&truth) < 0.1);
    let start = std::time::Instant::now();
    let best = best_of_seeds(&planted_similarity(&truth), 8, 5);
    let elapsed = start.elapsed();
    let score = matched_cos2(&truth, &best.w);
    assert!(score >= 0.95, "matched cos² {score}");
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
}

#[test]
fn scale_consistency() {
    let truth = planted_factors(60, 4, 3);
    let s = planted_similarity(&truth);
    let c = 7.5;
    let scaled = SimilarityMatrix::from_values("scaled", s.values.mapv(|v| v * c)).unwrap();
    let a = snmf_fit(&s, 4, 1, &SnmfOptions::default()).unwrap();
    let b = snmf_fit(&scaled, 4, 1, &SnmfOptions::default()).unwrap();
    // Same seed gives a start scaled by √c and every block update is
    // equivariant, so the fits agree after rescaling.
    let rescaled = b.w.mapv(|v| v / c.sqrt());
    assert!(matched_cos2(&a.w, &rescaled) > 1.0 - 1e-9);
    assert!((b.objective - c * c * a.objective).abs() <= 1e-6 * b.objective + 1e-12);
}

#[test]
fn reversed_columns_align_perfectly() {
    let w = planted_factors(50, 5, 4);
    let a = Embedding::from_loadings("a", w.clone()).unwrap();
    let rev: Vec<usize> = (0..5).rev().collect();
    let b = Embedding::from_loadings("b", w.select(Axis(1), &rev)).unwrap();
    let al = align_embeddings(&a, &b).unwrap();
    assert_eq!(al.permutation, rev);
    for c in &al.correlations {
        assert!((c - 1.0).abs() < 1e-12);
    }
}

#[test]
fn noisy_copy_aligns_above_099() {
    let w = planted_factors(200, 6, 5);
    let mut rng = task_rng(6, &[]);
    let noisy = w.mapv(|v| (v + 0.01 * rng.sample::<f64, _>(StandardNormal)).max(0.0));
    let a = Embedding::from_loadings("a", w).unwrap();
    let b = Embedding::from_loadings("b", noisy).unwrap();
    assert!(align_embeddings(&a, &b).unwrap().mean_correlation() > 0.99);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn alignment_matches_exhaustive_permutations() {
    for seed in 0..10u64 {
        let mut rng = task_rng(100 + seed, &[]);
        let a = Array2::from_shape_simple_fn((30, 4), || rng.random::<f64>());
        let b = Array2::from_shape_simple_fn((30, 4), || rng.random::<f64>());
        let cols = |m: &Array2<f64>, k: usize| m.column(k).to_vec();
        let best = permutations(4)
            .iter()
            .map(|p| (0..4).map(|k| pearson(&cols(&a, k), &cols(&b, p[k]))).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let al = align_embeddings(
            &Embedding::from_loadings("a", a).unwrap(),
            &Embedding::from_loadings("b", b).unwrap(),
        )
        .unwrap();
        let total: f64 = al.correlations.iter().sum();
        assert!((total - best).abs() < 1e-12, "{total} vs {best}");
    }
}

#[test]
fn zero_variance_column_is_flagged() {
    let mut w = planted_factors(20, 3, 7);
    w.column_mut(1).fill(0.0);
    let a = Embedding::from_loadings("a", w.clone()).unwrap();
    let al = align_embeddings(&a, &a).unwrap();
    assert!(al.degenerate[1]);
    assert_eq!(al.correlations[1], 0.0);
}

#[test]
fn stability_of_identical_fits_is_one() {
    let w = planted_factors(40, 4, 8);
    let e = Embedding::from_loadings("a", w).unwrap();
    assert!((stability(&[e.clone(), e.clone(), e]).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn stability_of_independent_columns_is_near_zero() {
    let mut total = 0.0;
    for draw in 0..100u64 {
        let mut rng = task_rng(300, &[draw]);
        let mut random = || Array2::from_shape_simple_fn((5000, 4), || rng.random::<f64>());
        let a = Embedding::from_loadings("a", random()).unwrap();
        let b = Embedding::from_loadings("b", random()).unwrap();
        total += stability(&[a, b]).unwrap();
    }
    let mean = total / 100.0;
    assert!(mean.abs() < 0.05, "mean stability {mean}");
}

#[test]
fn stability_of_three_is_mean_of_pairs() {
    let mut rng = task_rng(400, &[]);
    let embs: Vec<Embedding> = (0..3)
        .map(|i| {
            let w = Array2::from_shape_simple_fn((25, 3), || rng.random::<f64>());
            Embedding::from_loadings(format!("e{i}"), w).unwrap()
        })
        .collect();
    let pair = |i: usize, j: usize| align_embeddings(&embs[i], &embs[j]).unwrap().mean_correlation();
    let hand = (pair(0, 1) + pair(0, 2) + pair(1, 2)) / 3.0;
    assert!((stability(&embs).unwrap() - hand).abs() < 1e-14);
}

#[test]
fn rank_sweep_is_nested() {
    let truth = planted_factors(60, 2, 9);
    let s = planted_similarity(&truth);
    // A tight tolerance so that both ranks are solved to the same quality.
    let opts = SnmfOptions { tol: 1e-13, max_iters: 20_000, ..Default::default() };
    let fits = rank_sweep(&s, &[2, 4], &[0, 1, 2, 3, 4], &opts).unwrap();
    assert_eq!(fits.iter().map(|f| f.rank).collect::<Vec<_>>(), [2, 4]);
    let ev = |i: usize| fits[i].best().explained_variance;
    assert!(ev(1) >= ev(0) - 1e-9, "EV(4) {} < EV(2) {}", ev(1), ev(0));
}

#[test]
fn rank_sweep_recovers_planted_rank_three() {
    let truth = planted_factors(120, 3, 10);
    let fits = rank_sweep(&planted_similarity(&truth), &[3], &[0, 1, 2, 3, 4], &SnmfOptions::default()).unwrap();
    assert_eq!(fits[0].embeddings.len(), 5);
    assert!(matched_cos2(&truth, &fits[0].best().w) >= 0.95);
}
