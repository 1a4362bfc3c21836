use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use unidim::content::{
    content_universality_correlations, eta_squared, label_crosstab, load_labels, reconstruction_importance,
    reconstruction_importance_all, variance_fraction_by_decile, DimensionContent, DimensionLabel, EtaSquared,
};
use unidim::io::CategoryIndex;
use unidim::rng::task_rng;
use unidim::snmf::explained_variance_raw;
use unidim::synth::{planted_ensemble, EnsembleSpec};
use unidim::universality::{ensemble_universality, NullOptions, UniversalityOptions};
use unidim::Error;

fn content(model: &str, dim: usize, ss: EtaSquared, u: f64) -> DimensionContent {
    DimensionContent {
        model_id: model.into(),
        dim,
        ss,
        delta_r2: 0.0,
        universality: u,
    }
}

#[test]
fn hand_computed_anova() {
    let cats = CategoryIndex::balanced(2, 2);
    let e = eta_squared(array![0.0, 2.0, 3.0, 5.0].view(), &cats, true).unwrap();
    assert_eq!((e.ss_between, e.ss_within, e.ss_total), (9.0, 4.0, 13.0));
    assert!((e.eta2.unwrap() - 0.6923076923).abs() < 1e-9);
}

#[test]
fn within_category_constant_gives_one() {
    let cats = CategoryIndex::balanced(4, 3);
    let w = Array1::from_iter(cats.category_of.iter().map(|&c| c as f64 * 1.5 + 0.2));
    let e = eta_squared(w.view(), &cats, true).unwrap();
    assert!(e.ss_within < 1e-24 * e.ss_total);
    assert!((e.eta2.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn constant_and_unbalanced_inputs() {
    let cats = CategoryIndex::balanced(3, 2);
    let e = eta_squared(Array1::from_elem(6, 2.0).view(), &cats, true).unwrap();
    assert_eq!(e.eta2, None);

    let labels: Vec<String> = ["a", "a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
    let ids = (0..5).map(|i| format!("img{i}")).collect();
    let unbalanced = CategoryIndex::from_labels(ids, &labels).unwrap();
    let w = array![1.0, 2.0, 3.0, 7.0, 9.0];
    assert!(matches!(eta_squared(w.view(), &unbalanced, true), Err(Error::InvalidInput(_))));
    // Unbalanced formulas: group means 2 and 8, grand mean 4.4.
    let e = eta_squared(w.view(), &unbalanced, false).unwrap();
    let between = 3.0 * (2.0f64 - 4.4).powi(2) + 2.0 * (8.0f64 - 4.4).powi(2);
    assert!((e.ss_between - between).abs() < 1e-12);
    assert!((e.ss_within - 4.0).abs() < 1e-12);
}

#[test]
fn chance_level_for_iid_loadings() {
    let (c, j) = (50, 12);
    let cats = CategoryIndex::balanced(c, j);
    let n = c * j;
    let mut total = 0.0;
    for draw in 0..200u64 {
        let mut rng = task_rng(77, &[draw]);
        let w: Array1<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        total += eta_squared(w.view(), &cats, true).unwrap().eta2.unwrap();
    }
    let mean = total / 200.0;
    let expected = (c - 1) as f64 / (n - 1) as f64;
    assert!((expected - 0.0818).abs() < 1e-4);
    assert!((mean - expected).abs() <= 0.02, "mean η² {mean} vs {expected}");
}

proptest! {
    #[test]
    fn ss_additivity_and_bounds(values in prop::collection::vec(0.0f64..10.0, 24)) {
        let cats = CategoryIndex::balanced(6, 4);
        let e = eta_squared(Array1::from(values).view(), &cats, true).unwrap();
        if let Some(eta) = e.eta2 {
            prop_assert!((e.ss_between + e.ss_within - e.ss_total).abs() <= 1e-9 * e.ss_total);
            prop_assert!((0.0..=1.0).contains(&eta));
        }
    }

    #[test]
    fn affine_invariance(values in prop::collection::vec(0.0f64..10.0, 24), a in 0.01f64..100.0, b in -50.0f64..50.0) {
        let cats = CategoryIndex::balanced(6, 4);
        let w = Array1::from(values);
        let e1 = eta_squared(w.view(), &cats, true).unwrap();
        let e2 = eta_squared(w.mapv(|v| a * v + b).view(), &cats, true).unwrap();
        if let (Some(x), Some(y)) = (e1.eta2, e2.eta2) {
            prop_assert!((x - y).abs() <= 1e-10, "{} vs {}", x, y);
        }
    }
}

fn zeroed(w: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut out = w.clone();
    out.column_mut(k).fill(0.0);
    out
}

fn recompute(s: &Array2<f64>, w: &Array2<f64>, k: usize) -> f64 {
    explained_variance_raw(s, w) - explained_variance_raw(s, &zeroed(w, k))
}

#[test]
fn delta_r2_single_dimension_equals_ev() {
    let w = array![[1.0], [0.5], [0.2], [0.0]];
    let mut s = w.dot(&w.t());
    s[[0, 3]] += 0.1;
    s[[3, 0]] += 0.1;
    let d = reconstruction_importance(&s, &w, 0).unwrap();
    assert!((d - explained_variance_raw(&s, &w)).abs() < 1e-12);
}

#[test]
fn delta_r2_matches_recomputation() {
    let mut rng = task_rng(5, &[]);
    let s = {
        let f = Array2::from_shape_simple_fn((15, 6), || rng.random::<f64>());
        f.dot(&f.t())
    };
    // Columns 1 and 3 are duplicates; column 4 is zero.
    let mut w = Array2::from_shape_simple_fn((15, 5), || rng.random::<f64>());
    let dup = w.column(1).to_owned();
    w.column_mut(3).assign(&dup);
    w.column_mut(4).fill(0.0);
    let all = reconstruction_importance_all(&s, &w).unwrap();
    for k in 0..5 {
        assert!((all[k] - recompute(&s, &w, k)).abs() < 1e-10, "dim {k}");
    }
    assert!((all[1] - all[3]).abs() < 1e-12);
    assert_ne!(all[1], 0.0);
    assert_eq!(all[4], 0.0);
    assert!(reconstruction_importance(&s, &w, 5).is_err());
}

#[test]
fn identical_eta_gives_flat_deciles() {
    let ss = EtaSquared {
        ss_between: 3.0,
        ss_within: 1.0,
        ss_total: 4.0,
        eta2: Some(0.75),
    };
    let contents: Vec<_> = (0..40).map(|i| content("m", i, ss, i as f64 / 40.0)).collect();
    for per_dim in [false, true] {
        let rows = variance_fraction_by_decile(&contents, per_dim).unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert_eq!(r.n_dims, 4);
            assert!((r.between_fraction - 0.75).abs() < 1e-12);
            assert!((r.within_fraction - 0.25).abs() < 1e-12);
        }
        assert!(rows.windows(2).all(|w| w[1].mean_universality > w[0].mean_universality));
    }
}

#[test]
fn pooled_and_per_dimension_fractions_differ() {
    let big = EtaSquared { ss_between: 9.0, ss_within: 1.0, ss_total: 10.0, eta2: Some(0.9) };
    let small = EtaSquared { ss_between: 0.1, ss_within: 0.9, ss_total: 1.0, eta2: Some(0.1) };
    let contents: Vec<_> = (0..20)
        .map(|i| content("m", i, if i % 2 == 0 { big } else { small }, (i / 2) as f64))
        .collect();
    let pooled = variance_fraction_by_decile(&contents, false).unwrap();
    let mean = variance_fraction_by_decile(&contents, true).unwrap();
    assert!((pooled[0].between_fraction - 9.1 / 11.0).abs() < 1e-12);
    assert!((mean[0].between_fraction - 0.5).abs() < 1e-12);
}

#[test]
fn planted_category_dimensions_dominate_top_decile() {
    let ens = planted_ensemble(&EnsembleSpec::default());
    let opts = UniversalityOptions {
        null: NullOptions { permutations: 200, seed: 3, ..Default::default() },
        ..Default::default()
    };
    let u = ensemble_universality(&ens.embeddings, &opts).unwrap();
    let mut contents = Vec::new();
    for (m, emb) in ens.embeddings.iter().enumerate() {
        for k in 0..emb.rank() {
            let ss = eta_squared(emb.column(k), &ens.categories, true).unwrap();
            contents.push(content(&emb.model_id, k, ss, u.reports[m].calibrated[k]));
        }
    }
    let rows = variance_fraction_by_decile(&contents, false).unwrap();
    assert!(
        rows[9].between_fraction > rows[0].between_fraction,
        "top {} vs bottom {}",
        rows[9].between_fraction,
        rows[0].between_fraction
    );
    let corr = content_universality_correlations(&contents).unwrap();
    let rho = corr.rho_eta2.unwrap();
    assert!(rho > 0.5, "ρ {rho}");
}

#[test]
fn monotone_eta_gives_unit_rho() {
    let contents: Vec<_> = (0..12)
        .map(|i| {
            let b = 1.0 + i as f64;
            let ss = EtaSquared { ss_between: b, ss_within: 20.0 - b, ss_total: 20.0, eta2: Some(b / 20.0) };
            DimensionContent { delta_r2: (i as f64).powi(3), ..content(&format!("m{}", i % 3), i, ss, (i as f64).sqrt()) }
        })
        .collect();
    let c = content_universality_correlations(&contents).unwrap();
    assert!((c.rho_eta2.unwrap() - 1.0).abs() < 1e-12);
    assert!((c.rho_delta_r2.unwrap() - 1.0).abs() < 1e-12);
    assert!((c.median_within_model_rho_delta_r2 - 1.0).abs() < 1e-12);
    assert_eq!(c.excluded_degenerate, 0);
}

#[test]
fn degenerate_dimensions_are_excluded() {
    let mut contents: Vec<_> = (0..5)
        .map(|i| {
            let b = 1.0 + i as f64;
            content("m", i, EtaSquared { ss_between: b, ss_within: 1.0, ss_total: b + 1.0, eta2: Some(b / (b + 1.0)) }, i as f64)
        })
        .collect();
    contents.push(content("m", 5, EtaSquared { ss_between: 0.0, ss_within: 0.0, ss_total: 0.0, eta2: None }, 99.0));
    let c = content_universality_correlations(&contents).unwrap();
    assert_eq!((c.n_dims, c.excluded_degenerate), (5, 1));
    assert!((c.rho_eta2.unwrap() - 1.0).abs() < 1e-12);
    // Every ΔR² is zero here, so its ranking is constant.
    assert_eq!(c.rho_delta_r2, None);
}

#[test]
fn shuffled_pairing_has_small_rho() {
    let mut rng = task_rng(21, &[]);
    let mut abs_total = 0.0;
    for _ in 0..100 {
        let mut u: Vec<f64> = (0..50).map(|i| i as f64).collect();
        u.shuffle(&mut rng);
        let contents: Vec<_> = (0..50)
            .map(|i| {
                let e = (i as f64 + 1.0) / 60.0;
                content("m", i, EtaSquared { ss_between: e, ss_within: 1.0 - e, ss_total: 1.0, eta2: Some(e) }, u[i])
            })
            .collect();
        abs_total += content_universality_correlations(&contents).unwrap().rho_eta2.unwrap().abs();
    }
    let mean_abs = abs_total / 100.0;
    assert!(mean_abs < 0.2, "mean |ρ| {mean_abs}");
}

#[test]
fn labels_crosstab() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    std::fs::write(
        &path,
        "dimension_id,label\nm:0,semantic\nm:19,visual\nm:18,both\nm:1,neither\nm:2,semantic\n",
    )
    .unwrap();
    let labels = load_labels(&path).unwrap();
    assert_eq!(labels[&("m".to_string(), 19)], DimensionLabel::Visual);
    let ss = EtaSquared { ss_between: 1.0, ss_within: 1.0, ss_total: 2.0, eta2: Some(0.5) };
    let contents: Vec<_> = (0..20).map(|i| content("m", i, ss, i as f64)).collect();
    let table = label_crosstab(&contents, &labels).unwrap();
    assert_eq!(table[0], [1, 0, 0, 1]);
    assert_eq!(table[1], [1, 0, 0, 0]);
    assert_eq!(table[9], [0, 1, 1, 0]);
    assert_eq!(table.iter().map(|r| r.iter().sum::<usize>()).sum::<usize>(), 5);

    std::fs::write(&path, "dimension_id,label\nm:0,abstract\n").unwrap();
    assert!(load_labels(&path).is_err());
}
