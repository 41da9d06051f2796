use ndarray::{Array2, Axis};
use rand::Rng as _;
use rayon::prelude::*;

use fmp::autodiff::finite_diff_check;
use fmp::dataset::{biased_classification, BiasedTaskParams, DatasetBundle};
use fmp::graph::{incident_vector, normalized_adjacency, Graph};
use fmp::propagation::{FmpConfig, Scheme};
use fmp::rng::{derive_seed, seeded};
use fmp::sweep::spearman;
use fmp::training::{loss_and_gradient, split_nodes, train, MlpParams, TrainConfig};

fn separable(n: usize, seed: u64) -> DatasetBundle {
    let mut rng = seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let groups: Vec<i8> = (0..n).map(|i| if (i / 2) % 2 == 0 { 1 } else { -1 }).collect();
    let features = Array2::from_shape_fn((n, 3), |(i, j)| {
        let centre = if j == 0 { 2.0 * labels[i] as f64 - 1.0 } else { 0.0 };
        centre + rng.random_range(-0.4..0.4)
    });
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.2) {
                edges.push((i, j));
            }
        }
    }
    DatasetBundle::new(
        Graph::from_edges(n, &edges).unwrap(),
        features,
        labels,
        incident_vector(&groups).unwrap(),
        serde_json::Value::Null,
    )
    .unwrap()
}

#[test]
fn mlp_fits_separable_toy_with_defaults() {
    let data = separable(30, 1);
    let cfg = TrainConfig { scheme: Scheme::None, ..TrainConfig::default() };
    let out = train(&cfg, &data).unwrap();
    assert_eq!(out.test.accuracy, 1.0);
    assert!(out.log.iter().all(|l| l.train_loss.is_finite()));
}

#[test]
fn pipeline_gradient_matches_finite_differences_on_twelve_nodes() {
    let data = separable(12, 2);
    let a = normalized_adjacency(&data.graph);
    let split = split_nodes(12, [0.5, 0.25, 0.25], 3);
    for (lambda_f, dp_reg) in [(0.5, 0.0), (2.0, 0.0), (1.0, 0.7)] {
        let cfg = TrainConfig {
            fmp: FmpConfig::new(1.0, lambda_f, 3).unwrap(),
            hidden: 6,
            dp_reg_weight: dp_reg,
            ..TrainConfig::default()
        };
        let params = MlpParams::init(3, 6, 2, 4);
        let points = [
            params.w1.clone(),
            params.b1.clone().insert_axis(Axis(0)),
            params.w2.clone(),
            params.b2.clone().insert_axis(Axis(0)),
        ];
        for (slot, point) in points.iter().enumerate() {
            let err = finite_diff_check(
                |m| {
                    let mut p = params.clone();
                    match slot {
                        0 => p.w1 = m.clone(),
                        1 => p.b1 = m.row(0).to_owned(),
                        2 => p.w2 = m.clone(),
                        _ => p.b2 = m.row(0).to_owned(),
                    }
                    let (loss, g) =
                        loss_and_gradient(&p, data.features.view(), &a, &data.sens, &data.labels, &split.train, &cfg)?;
                    let g = match slot {
                        0 => g.w1,
                        1 => g.b1.insert_axis(Axis(0)),
                        2 => g.w2,
                        _ => g.b2.insert_axis(Axis(0)),
                    };
                    Ok((loss, g))
                },
                point,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "λ_f {lambda_f}, dp_reg {dp_reg}, param {slot}: {err}");
        }
    }
}

fn small_task(seed: u64) -> DatasetBundle {
    biased_classification(&BiasedTaskParams { n: 1000, rho_d: 1e-2, ..Default::default() }, seed).unwrap()
}

#[test]
fn dp_regularizer_trades_off_parity() {
    let data = small_task(5);
    let weights = [0.0, 1.0, 2.0, 5.0, 8.0, 10.0, 20.0, 50.0, 80.0, 100.0];
    let dps: Vec<f64> = weights
        .par_iter()
        .map(|&w| {
            let cfg = TrainConfig { scheme: Scheme::Gcn, dp_reg_weight: w, seed: 6, ..TrainConfig::default() };
            train(&cfg, &data).unwrap().test.dp
        })
        .collect();
    let rho = spearman(&weights, &dps);
    assert!(rho <= -0.5, "spearman {rho}, dp {dps:?}");
}

#[test]
fn fmp_has_lower_parity_gap_than_gcn() {
    let runs = |scheme: Scheme, lambda_f: f64| {
        let out: Vec<(f64, f64)> = (0..5u64)
            .into_par_iter()
            .map(|k| {
                let cfg = TrainConfig {
                    scheme,
                    fmp: FmpConfig::new(1.0, lambda_f, 10).unwrap(),
                    seed: derive_seed(7, k),
                    ..TrainConfig::default()
                };
                let m = train(&cfg, &small_task(derive_seed(8, k))).unwrap().test;
                (m.accuracy, m.dp)
            })
            .collect();
        let acc = out.iter().map(|o| o.0).sum::<f64>() / 5.0;
        let dp = out.iter().map(|o| o.1).sum::<f64>() / 5.0;
        (acc, dp)
    };
    let (acc_gcn, dp_gcn) = runs(Scheme::Gcn, 0.0);
    let (acc_fmp, dp_fmp) = runs(Scheme::Fmp, 30.0);
    assert!(dp_fmp < dp_gcn, "fmp dp {dp_fmp} vs gcn {dp_gcn}");
    assert!(acc_fmp >= acc_gcn - 0.03, "fmp acc {acc_fmp} vs gcn {acc_gcn}");
}
