use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

use fmp::graph::{
    incident_vector, label_homophily, laplacian, normalized_adjacency, sensitive_homophily, spmm, Graph,
};
use fmp::metrics::{delta_bias_empirical, fit_group_gaussians};
use fmp::rng::derive_seed;
use fmp::synth::{expected_aggregated_gmm, sample_gmm_features, sample_sbm, GmmParams, SbmParams};

fn graph_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_n).prop_flat_map(|n| {
        let edge = (0..n, 0..n).prop_filter("no self loops", |(a, b)| a != b);
        (Just(n), prop::collection::vec(edge, 0..(3 * n)))
    })
}

fn build(n: usize, raw: &[(usize, usize)]) -> Graph {
    let mut edges: Vec<(usize, usize)> = raw.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    edges.sort_unstable();
    edges.dedup();
    Graph::from_edges(n, &edges).unwrap()
}

proptest! {
    #[test]
    fn normalized_operators_are_consistent((n, raw) in graph_strategy(50), seed in any::<u64>()) {
        let g = build(n, &raw);
        let a = normalized_adjacency(&g);
        prop_assert!(a.matrix().asymmetry() <= 1e-15);
        let dense = a.to_dense();
        let l = laplacian(&a).to_dense();
        let id = Array2::<f64>::eye(n);
        prop_assert!((&l + &dense - &id).iter().all(|v| v.abs() <= 1e-12));

        // Dense oracle: D̂^{-1/2} (A + I) D̂^{-1/2} built entry by entry.
        let mut raw_adj = Array2::<f64>::eye(n);
        for &(i, j) in g.edges() {
            raw_adj[[i, j]] = 1.0;
            raw_adj[[j, i]] = 1.0;
        }
        let deg = raw_adj.sum_axis(Axis(1));
        let oracle = Array2::from_shape_fn((n, n), |(i, j)| raw_adj[[i, j]] / (deg[i] * deg[j]).sqrt());
        prop_assert!((&dense - &oracle).iter().all(|v| v.abs() <= 1e-12));

        let x = fmp::selfcheck::random_matrix(n, 3, 2.0, seed);
        let fast = spmm(&a, x.view()).unwrap();
        prop_assert!((&fast - &oracle.dot(&x)).iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn homophily_invariant_under_relabeling((n, raw) in graph_strategy(40), perm_seed in any::<u64>()) {
        let g = build(n, &raw);
        prop_assume!(g.edge_count() > 0);
        let y: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % 3).collect();
        let mut groups: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        groups[0] = 1;
        groups[1] = -1;
        let s = incident_vector(&groups).unwrap();
        let h_label = label_homophily(&g, &y).unwrap();
        let h_sens = sensitive_homophily(&g, &s).unwrap();
        prop_assert!((0.0..=1.0).contains(&h_label) && (0.0..=1.0).contains(&h_sens));

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut fmp::rng::seeded(perm_seed));
        let mut edges: Vec<(usize, usize)> = g.edges().iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        edges.reverse();
        let relabeled: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        let g2 = Graph::from_edges(n, &relabeled).unwrap();
        let mut y2 = vec![0; n];
        let mut groups2 = vec![0i8; n];
        for i in 0..n {
            y2[perm[i]] = y[i];
            groups2[perm[i]] = groups[i];
        }
        let s2 = incident_vector(&groups2).unwrap();
        prop_assert_eq!(label_homophily(&g2, &y2).unwrap(), h_label);
        prop_assert_eq!(sensitive_homophily(&g2, &s2).unwrap(), h_sens);
    }

    #[test]
    fn incident_vector_sums(groups in prop::collection::vec(prop::bool::ANY, 2..200)) {
        prop_assume!(groups.iter().any(|&b| b) && groups.iter().any(|&b| !b));
        let s: Vec<i8> = groups.iter().map(|&b| if b { 1 } else { -1 }).collect();
        let v = incident_vector(&s).unwrap();
        prop_assert!(v.delta().sum().abs() <= 1e-12);
        prop_assert!((v.delta().mapv(f64::abs).sum() - 2.0).abs() <= 1e-12);
    }
}

#[test]
fn spmm_is_independent_of_thread_count() {
    let p = SbmParams::new(3000, 5e-3, 0.9, 0.5).unwrap();
    let (g, _) = sample_sbm(&p, 1).unwrap();
    let a = normalized_adjacency(&g);
    let x = fmp::selfcheck::random_matrix(3000, 8, 1.0, 2);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| spmm(&a, x.view()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn sbm_sensitive_homophily_within_two_standard_errors() {
    let p = SbmParams::new(10_000, 1e-3, 0.95, 0.5).unwrap();
    let estimates: Vec<f64> = (0..10u64)
        .map(|k| {
            let (g, s) = sample_sbm(&p, derive_seed(300, k)).unwrap();
            sensitive_homophily(&g, &s).unwrap()
        })
        .collect();
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    assert!((mean - 0.95).abs() <= 2.0 * se, "mean {mean}, se {se}");
}

#[test]
fn sbm_density_and_homophily_match_targets() {
    let p = SbmParams::new(10_000, 1e-3, 0.95, 0.5).unwrap();
    for k in 0..5u64 {
        let (g, s) = sample_sbm(&p, derive_seed(310, k)).unwrap();
        assert!((g.density() - 1e-3).abs() <= 0.05e-3, "density {}", g.density());
        assert!((sensitive_homophily(&g, &s).unwrap() - 0.95).abs() <= 0.01);
    }
}

#[test]
fn gmm_samples_match_generating_parameters() {
    let p = SbmParams::new(10_000, 1e-3, 0.95, 0.5).unwrap();
    let (_, s) = sample_sbm(&p, 1).unwrap();
    for (gmm, seed) in [(GmmParams::isotropic_2d(0.5), 11), (GmmParams::anisotropic_2d(0.5), 12)] {
        let x = sample_gmm_features(&gmm, &s, seed).unwrap();
        let fit = fit_group_gaussians(x.view(), &s).unwrap();
        for (mu_hat, mu) in [(&fit.mu1_hat, &gmm.mu1), (&fit.mu2_hat, &gmm.mu2)] {
            assert!((mu_hat - mu).iter().all(|d| d.abs() <= 0.05), "{mu_hat} vs {mu}");
        }
        for (sig_hat, sig) in [(&fit.sigma1_hat, &gmm.sigma1), (&fit.sigma2_hat, &gmm.sigma2)] {
            let rel = (sig_hat - sig).mapv(|v| v * v).sum().sqrt() / sig.mapv(|v| v * v).sum().sqrt();
            assert!(rel <= 0.05, "{sig_hat} vs {sig}");
        }
        assert!((fit.c_hat - 0.5).abs() < 1e-12);
    }
}

fn group_mean(x: &Array2<f64>, groups: &[i8], group: i8) -> Array1<f64> {
    let rows: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == group).collect();
    x.select(Axis(0), &rows).mean_axis(Axis(0)).unwrap()
}

/// Relative error of the empirical `ν1 − ν2` (read off the group mean gap along
/// `μ1 − μ2`) against the closed form, averaged over seeds.
fn nu_gap_error(n: usize, seeds: u64) -> f64 {
    let p = SbmParams::new(n, 1e-3, 0.95, 0.5).unwrap();
    let gmm = GmmParams::isotropic_2d(0.5);
    let closed = expected_aggregated_gmm(&p, &gmm).unwrap();
    let dir = &gmm.mu1 - &gmm.mu2;
    let mut acc = 0.0;
    for k in 0..seeds {
        let (g, s) = sample_sbm(&p, derive_seed(320 + n as u64, k)).unwrap();
        let x = sample_gmm_features(&gmm, &s, derive_seed(321 + n as u64, k)).unwrap();
        let agg = spmm(&normalized_adjacency(&g), x.view()).unwrap();
        let gap = &group_mean(&agg, s.groups(), -1) - &group_mean(&agg, s.groups(), 1);
        acc += gap.dot(&dir) / dir.dot(&dir);
    }
    let empirical = acc / seeds as f64;
    (empirical - (closed.nu1 - closed.nu2)).abs() / (closed.nu1 - closed.nu2)
}

#[test]
fn aggregated_mean_gap_matches_closed_form() {
    let err = nu_gap_error(10_000, 5);
    assert!(err <= 0.05, "ν gap rel err {err}");
}

#[test]
fn aggregated_mean_gap_error_shrinks_with_n() {
    let small = nu_gap_error(1_000, 20);
    let large = nu_gap_error(10_000, 5);
    assert!(large < small, "n=1e3 {small}, n=1e4 {large}");
}

#[test]
fn delta_bias_positive_under_homophily_and_not_under_shuffle() {
    let p = SbmParams::new(10_000, 1e-3, 0.95, 0.5).unwrap();
    let gmm = GmmParams::isotropic_2d(0.5);
    for k in 0..5u64 {
        let (g, s) = sample_sbm(&p, derive_seed(330, k)).unwrap();
        let x = sample_gmm_features(&gmm, &s, derive_seed(331, k)).unwrap();
        let agg = spmm(&normalized_adjacency(&g), x.view()).unwrap();
        assert!(delta_bias_empirical(x.view(), agg.view(), &s).unwrap() > 0.0);

        let mut order: Vec<usize> = (0..x.nrows()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut fmp::rng::seeded(derive_seed(332, k)));
        let shuffled = x.select(Axis(0), &order);
        let null = delta_bias_empirical(x.view(), shuffled.view(), &s).unwrap();
        assert!(null <= 1e-3, "shuffle null gave {null}");
    }
}
