//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line and then
//! asserts the criterion. Tests are serialized so the timing check runs alone.

use std::io::Write as _;
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;

use fmp::autodiff::finite_diff_check;
use fmp::dataset::{biased_classification, load_dataset, write_dataset, BiasedTaskParams, DatasetBundle};
use fmp::graph::{incident_vector, normalized_adjacency, sensitive_homophily, spmm, Graph, NormalizedAdjacency};
use fmp::linalg::cholesky;
use fmp::metrics::{delta_bias_empirical, dp_gap_vector, gaussian_kl};
use fmp::propagation::{
    fmp_forward, fmp_gradient, fmp_gradient_oracle, prox_linf, softmax_rows, FmpConfig, Scheme,
};
use fmp::rng::{derive_seed, seeded};
use fmp::selfcheck::{measure_scaling, random_graph, random_matrix};
use fmp::sweep::{run_bias_sweep, spearman, Covariance, SweepParam, SweepSpec, LAMBDA_F_GRID};
use fmp::synth::{
    bias_enhance_condition, expected_aggregated_gmm, sample_gmm_features, sample_sbm, GmmParams, SbmParams,
};
use fmp::training::{loss_and_gradient, split_nodes, train_with_split, MlpParams, TrainConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, title: &str, passed: bool, detail: &str, start: Instant) {
    let tag = if passed { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line survives the harness's output capture.
    let line = format!("[{tag}] AC-{id:02} {title}: {detail} ({:.1} s)\n", start.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "AC-{id:02} {title}: {detail}");
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn ac01_gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    let mut worst_oracle = 0.0f64;
    let mut worst_fd = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = seeded(derive_seed(11, trial));
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=8);
        let (_, s) = random_graph(n, 0.0, derive_seed(12, trial));
        let f0 = random_matrix(n, d, 3.0, derive_seed(13, trial));
        let u = Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
        let fast = fmp_gradient(f0.view(), u.view(), &s).unwrap();
        let slow = fmp_gradient_oracle(f0.view(), u.view(), &s).unwrap();
        worst_oracle = worst_oracle.max(max_abs_diff(&fast, &slow));
        let err = finite_diff_check(
            |f| {
                let val = s.delta().dot(&softmax_rows(f.view())).dot(&u);
                Ok((val, fmp_gradient(f.view(), u.view(), &s)?))
            },
            &f0,
            1e-5,
        )
        .unwrap();
        worst_fd = worst_fd.max(err);
    }
    let ok = worst_oracle <= 1e-12 && worst_fd <= 1e-6 && start.elapsed().as_secs_f64() < 5.0;
    report(
        1,
        "gradient vs Jacobian oracle and finite differences",
        ok,
        &format!("oracle max abs {worst_oracle:.2e} (≤1e-12), fd max rel {worst_fd:.2e} (≤1e-6), 100 instances"),
        start,
    );
}

#[test]
fn ac02_gradient_complexity() {
    let _g = serial();
    let start = Instant::now();
    let t = measure_scaling(fmp_gradient, &[2000, 4000], 21).unwrap();
    let fast = t[1].fast_us / t[0].fast_us;
    let oracle = t[1].oracle_us / t[0].oracle_us;
    let ok = (1.5..=2.8).contains(&fast) && oracle > 3.2 && start.elapsed().as_secs_f64() < 60.0;
    report(
        2,
        "gradient cost scaling 2000→4000",
        ok,
        &format!(
            "fast {:.0}→{:.0} µs ×{fast:.2} (in [1.5, 2.8]), oracle {:.1}→{:.1} ms ×{oracle:.2} (>3.2)",
            t[0].fast_us,
            t[1].fast_us,
            t[0].oracle_us / 1e3,
            t[1].oracle_us / 1e3
        ),
        start,
    );
}

#[test]
fn ac03_fairness_objective_identity() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = seeded(derive_seed(31, trial));
        let n = rng.random_range(2..=60);
        let d = rng.random_range(1..=6);
        let (_, s) = random_graph(n, 0.0, derive_seed(32, trial));
        let f = random_matrix(n, d, 4.0, derive_seed(33, trial));
        let gap = dp_gap_vector(f.view(), &s).unwrap();
        for j in 0..d {
            let (mut sum_pos, mut sum_neg, mut n_pos, mut n_neg) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let row = f.row(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                let p = (row[j] - m).exp() / z;
                if s.groups()[i] > 0 {
                    sum_pos += p;
                    n_pos += 1.0;
                } else {
                    sum_neg += p;
                    n_neg += 1.0;
                }
            }
            worst = worst.max((gap[j] - (sum_pos / n_pos - sum_neg / n_neg)).abs());
        }
    }
    let ok = worst <= 1e-12 && start.elapsed().as_secs_f64() < 1.0;
    report(3, "Δ_s·SF(F) equals group-mean probability gap", ok, &format!("max abs diff {worst:.2e} on 50 instances"), start);
}

fn soft_threshold(v: ArrayView1<'_, f64>, t: f64) -> Array1<f64> {
    v.mapv(|x| x.signum() * (x.abs() - t).max(0.0))
}

#[test]
fn ac04_proximal_operator() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = seeded(41);
    let mut failures = 0usize;
    let mut worst_moreau = 0.0f64;
    for _ in 0..1000 {
        let d = rng.random_range(1..=12);
        let lambda = rng.random_range(0.0..5.0);
        let a = Array1::from_shape_fn(d, |_| rng.random_range(-10.0..10.0));
        let b = Array1::from_shape_fn(d, |_| rng.random_range(-10.0..10.0));
        let pa = prox_linf(a.view(), lambda);
        let pb = prox_linf(b.view(), lambda);
        let idempotent = prox_linf(pa.view(), lambda) == pa;
        let in_ball = pa.iter().all(|v| v.abs() <= lambda + 1e-12);
        let dist = |x: &Array1<f64>, y: &Array1<f64>| (x - y).mapv(|v| v * v).sum().sqrt();
        let nonexpansive = dist(&pa, &pb) <= dist(&a, &b) + 1e-12;
        // prox of β·ι_{‖·‖∞≤λ} through the Moreau decomposition:
        // v − β·prox_{(λ/β)‖·‖₁}(v/β)
        for beta in [0.05, 0.5, 1.0, 3.0, 40.0] {
            let via_moreau = &a - &(soft_threshold((&a / beta).view(), lambda / beta) * beta);
            worst_moreau = worst_moreau.max((&via_moreau - &pa).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        if !(idempotent && in_ball && nonexpansive) {
            failures += 1;
        }
    }
    let ok = failures == 0 && worst_moreau <= 1e-12 && start.elapsed().as_secs_f64() < 1.0;
    report(
        4,
        "prox idempotent, in ball, non-expansive, β-independent",
        ok,
        &format!("{failures} structural failures, β-route max diff {worst_moreau:.2e}, 1000 vectors"),
        start,
    );
}

fn appnp_recursion(a: &NormalizedAdjacency, x: &Array2<f64>, alpha: f64, k: usize) -> Array2<f64> {
    let mut f = x.clone();
    for _ in 0..k {
        let mut next = a.matrix().spmm(f.view()).unwrap();
        Zip::from(&mut next).and(x).for_each(|af, &xv| *af = alpha * xv + (1.0 - alpha) * *af);
        f = next;
    }
    f
}

#[test]
fn ac05_collapse_to_appnp() {
    let _g = serial();
    let start = Instant::now();
    let mut equal = 0;
    for trial in 0..20u64 {
        let mut rng = seeded(derive_seed(51, trial));
        let n = rng.random_range(5..=80);
        let (g, s) = random_graph(n, rng.random_range(0.02..0.4), derive_seed(52, trial));
        let a = normalized_adjacency(&g);
        let x = random_matrix(n, rng.random_range(1..=6), 3.0, derive_seed(53, trial));
        let k = 1 + trial as usize;
        let cfg = FmpConfig::new(rng.random_range(0.0..20.0), 0.0, k).unwrap();
        let (f, _) = fmp_forward(x.view(), &a, &s, &cfg).unwrap();
        let reference = appnp_recursion(&a, &x, cfg.gamma(), k);
        if f.iter().zip(reference.iter()).all(|(p, q)| p.to_bits() == q.to_bits()) {
            equal += 1;
        }
    }
    let ok = equal == 20 && start.elapsed().as_secs_f64() < 5.0;
    report(5, "λ_f = 0 is bitwise APPNP with α = γ", ok, &format!("{equal}/20 graphs bitwise equal, K = 1..20"), start);
}

fn log_density_2d(x: [f64; 2], mu: ArrayView1<'_, f64>, sigma: ArrayView2<'_, f64>) -> f64 {
    let (a, b, c) = (sigma[[0, 0]], sigma[[0, 1]], sigma[[1, 1]]);
    let det = a * c - b * b;
    let (d0, d1) = (x[0] - mu[0], x[1] - mu[1]);
    let quad = (c * d0 * d0 - 2.0 * b * d0 * d1 + a * d1 * d1) / det;
    -0.5 * quad - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
}

fn random_spd_2d(rng: &mut impl rand::Rng) -> Array2<f64> {
    let m = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
    m.dot(&m.t()) + Array2::<f64>::eye(2) * rng.random_range(0.3..1.5)
}

#[test]
fn ac06_kl_closed_form() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for trial in 0..10u64 {
        let mut rng = seeded(derive_seed(61, trial));
        let mu_p = Array1::from_shape_fn(2, |_| rng.random_range(-1.5..1.5));
        let mu_q = Array1::from_shape_fn(2, |_| rng.random_range(-1.5..1.5));
        let sp = random_spd_2d(&mut rng);
        let sq = random_spd_2d(&mut rng);
        let closed = gaussian_kl(mu_p.view(), sp.view(), mu_q.view(), sq.view()).unwrap();
        let l = cholesky(sp.view()).unwrap();
        let samples = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let x = [mu_p[0] + l[[0, 0]] * z[0], mu_p[1] + l[[1, 0]] * z[0] + l[[1, 1]] * z[1]];
            acc += log_density_2d(x, mu_p.view(), sp.view()) - log_density_2d(x, mu_q.view(), sq.view());
        }
        let mc = acc / samples as f64;
        let rel = (closed - mc).abs() / closed.abs();
        worst = worst.max(rel);
        details.push(format!("{closed:.3}"));
    }
    let ok = worst < 0.02 && start.elapsed().as_secs_f64() < 30.0;
    report(
        6,
        "Gaussian KL vs 10⁶-sample Monte Carlo",
        ok,
        &format!("max rel err {:.3}% over KL values [{}]", worst * 100.0, details.join(", ")),
        start,
    );
}

fn group_moments(x: &Array2<f64>, groups: &[i8], group: i8) -> (Array1<f64>, Array2<f64>) {
    let rows: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == group).collect();
    let sub = x.select(Axis(0), &rows);
    let mean = sub.mean_axis(Axis(0)).unwrap();
    let c = &sub - &mean;
    (mean, c.t().dot(&c) / (rows.len() - 1) as f64)
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn ac07_post_aggregation_gmm() {
    let _g = serial();
    let start = Instant::now();
    let p = SbmParams::new(10_000, 1e-3, 0.95, 0.5).unwrap();
    let gmm = GmmParams::isotropic_2d(0.5);
    let expected = expected_aggregated_gmm(&p, &gmm).unwrap();
    let seeds = 5;
    let mut mean_sum = [Array1::<f64>::zeros(2), Array1::<f64>::zeros(2)];
    let mut cov_sum = [Array2::<f64>::zeros((2, 2)), Array2::<f64>::zeros((2, 2))];
    let mut noise_sum = [0.0f64; 2];
    for k in 0..seeds {
        let (g, s) = sample_sbm(&p, derive_seed(71, k)).unwrap();
        let x = sample_gmm_features(&gmm, &s, derive_seed(72, k)).unwrap();
        let a = normalized_adjacency(&g);
        let agg = spmm(&a, x.view()).unwrap();
        for (slot, group) in [(0, -1i8), (1, 1i8)] {
            let (m, c) = group_moments(&agg, s.groups(), group);
            mean_sum[slot] += &m;
            cov_sum[slot] += &c;
            // Noise-only variance per node: Σ_j Ã_ij² (Σ = I).
            let rows: Vec<usize> = (0..s.len()).filter(|&i| s.groups()[i] == group).collect();
            let w: f64 = rows
                .iter()
                .map(|&i| a.matrix().row(i).1.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / rows.len() as f64;
            noise_sum[slot] += w;
        }
    }
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    let mut lines = Vec::new();
    for (slot, (mu, sigma, zeta)) in [
        (0, (&expected.mu1_tilde, &expected.sigma1_tilde, expected.zeta1)),
        (1, (&expected.mu2_tilde, &expected.sigma2_tilde, expected.zeta2)),
    ] {
        let m = &mean_sum[slot] / seeds as f64;
        let c = &cov_sum[slot] / seeds as f64;
        for j in 0..2 {
            worst_mean = worst_mean.max((m[j] - mu[j]).abs() / mu[j].abs());
        }
        let cov_err = frobenius(&(&c - sigma)) / frobenius(sigma);
        worst_cov = worst_cov.max(cov_err);
        lines.push(format!(
            "group {}: mean [{:.4}, {:.4}] vs [{:.4}, {:.4}], cov diag [{:.4}, {:.4}] vs 1/ζ = {:.4}, mean Σ_j Ã_ij² = {:.4}",
            slot + 1,
            m[0],
            m[1],
            mu[0],
            mu[1],
            c[[0, 0]],
            c[[1, 1]],
            1.0 / zeta,
            noise_sum[slot] / seeds as f64
        ));
    }
    for l in &lines {
        println!("       AC-07 {l}");
    }
    let ok = worst_mean <= 0.05 && worst_cov <= 0.05 && start.elapsed().as_secs_f64() < 60.0;
    report(
        7,
        "post-aggregation group moments vs ν/ζ closed forms",
        ok,
        &format!("max component mean rel err {:.2}%, max Frobenius cov rel err {:.2}% (≤5%)", worst_mean * 100.0, worst_cov * 100.0),
        start,
    );
}

/// Spearman correlation of `(value, dp_diff)` over all `(value, seed)` rows.
fn sweep_trend(param: SweepParam, fixed_eps: f64, covariance: Covariance) -> (f64, Vec<(f64, f64)>) {
    let mut spec = SweepSpec::new(param);
    spec.fixed.eps_sens = fixed_eps;
    spec.covariance = covariance;
    spec.base_seed = 81;
    let rows = run_bias_sweep(&spec).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.dp_diff).collect();
    let means = spec
        .values
        .iter()
        .map(|&v| {
            let sel: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.dp_diff).collect();
            (v, sel.iter().sum::<f64>() / sel.len() as f64)
        })
        .collect();
    (spearman(&xs, &ys), means)
}

#[test]
fn ac08_bias_amplification_trend() {
    let _g = serial();
    let start = Instant::now();
    let panels = [
        ("ε_sens", SweepParam::EpsSens, Covariance::Identity),
        ("ρ_d", SweepParam::RhoD, Covariance::Identity),
        ("n", SweepParam::N, Covariance::Identity),
        ("c", SweepParam::C, Covariance::Identity),
        ("ε_sens, Σ = diag(1, 2)", SweepParam::EpsSens, Covariance::Diagonal12),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, param, cov) in panels {
        let (rho, means) = sweep_trend(param, 0.95, cov);
        let curve: Vec<String> = means.iter().map(|(v, m)| format!("{v}:{m:.3}")).collect();
        println!("       AC-08 {label}: spearman {rho:.3}, mean dp_diff {}", curve.join(" "));
        ok &= rho > 0.9;
        parts.push(format!("{label} {rho:.3}"));
    }
    ok &= start.elapsed().as_secs_f64() < 600.0;
    report(8, "dp_diff trends (Spearman > 0.9, 5 seeds)", ok, &parts.join(", "), start);
}

#[test]
fn ac09_condition_consistency() {
    let _g = serial();
    let start = Instant::now();
    let gmm = GmmParams::isotropic_2d(0.5);
    let mut settings = Vec::new();
    for eps in [0.8, 0.9, 1.0] {
        for rho in [5e-4, 1e-3, 2e-3] {
            for c in [0.3, 0.4, 0.5] {
                let p = SbmParams::new(10_000, rho, eps, c).unwrap();
                let g = GmmParams { c, ..gmm.clone() };
                if bias_enhance_condition(&expected_aggregated_gmm(&p, &g).unwrap()) {
                    settings.push(p);
                }
            }
        }
    }
    let jobs: Vec<(SbmParams, u64)> = settings.iter().flat_map(|&p| (0..5u64).map(move |k| (p, k))).collect();
    let positive = jobs
        .iter()
        .filter(|(p, k)| {
            let seed = derive_seed(91, *k);
            let (g, s) = sample_sbm(p, derive_seed(seed, 0)).unwrap();
            let x = sample_gmm_features(&GmmParams { c: p.c, ..gmm.clone() }, &s, derive_seed(seed, 1)).unwrap();
            let agg = spmm(&normalized_adjacency(&g), x.view()).unwrap();
            delta_bias_empirical(x.view(), agg.view(), &s).unwrap() > 0.0
        })
        .count();
    let frac = positive as f64 / jobs.len().max(1) as f64;
    let ok = !jobs.is_empty() && frac >= 0.9 && start.elapsed().as_secs_f64() < 600.0;
    report(
        9,
        "ΔBias > 0 wherever the enhancement condition holds",
        ok,
        &format!("{positive}/{} pairs positive ({:.1}%) over {} of 27 settings", jobs.len(), frac * 100.0, settings.len()),
        start,
    );
}

fn separable_toy(seed: u64) -> DatasetBundle {
    let n = 30;
    let mut rng = seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let groups: Vec<i8> = (0..n).map(|i| if (i / 2) % 2 == 0 { 1 } else { -1 }).collect();
    let features = Array2::from_shape_fn((n, 2), |(i, j)| {
        let centre = if j == 0 { 3.0 * (2.0 * labels[i] as f64 - 1.0) } else { 0.0 };
        centre + rng.random_range(-0.5..0.5)
    });
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.15) {
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
fn ac10_training_sanity() {
    let _g = serial();
    let start = Instant::now();
    let data = separable_toy(101);
    let cfg = TrainConfig { scheme: Scheme::None, lr: 1e-2, epochs: 200, hidden: 16, seed: 3, ..TrainConfig::default() };
    let split = split_nodes(data.len(), cfg.split, 7);
    let out = train_with_split(&cfg, &data, split.clone()).unwrap();
    let acc = out.test.accuracy;

    let fmp_cfg = TrainConfig {
        scheme: Scheme::Fmp,
        fmp: FmpConfig::new(1.0, 2.0, 3).unwrap(),
        hidden: 8,
        ..TrainConfig::default()
    };
    let a = normalized_adjacency(&data.graph);
    let params = MlpParams::init(2, fmp_cfg.hidden, 2, 5);
    let x = data.features.view();
    let grad_for = |slot: usize| {
        let params = params.clone();
        let a = &a;
        let data = &data;
        let split = &split;
        move |m: &Array2<f64>| {
            let mut p = params.clone();
            match slot {
                0 => p.w1 = m.clone(),
                1 => p.b1 = m.row(0).to_owned(),
                2 => p.w2 = m.clone(),
                _ => p.b2 = m.row(0).to_owned(),
            }
            let (loss, g) = loss_and_gradient(&p, x, a, &data.sens, &data.labels, &split.train, &fmp_cfg)?;
            let g = match slot {
                0 => g.w1,
                1 => g.b1.insert_axis(Axis(0)),
                2 => g.w2,
                _ => g.b2.insert_axis(Axis(0)),
            };
            Ok((loss, g))
        }
    };
    let points = [
        params.w1.clone(),
        params.b1.clone().insert_axis(Axis(0)),
        params.w2.clone(),
        params.b2.clone().insert_axis(Axis(0)),
    ];
    let mut worst = 0.0f64;
    for (slot, point) in points.iter().enumerate() {
        worst = worst.max(finite_diff_check(grad_for(slot), point, 1e-4).unwrap());
    }
    let ok = acc == 1.0 && worst <= 1e-4 && start.elapsed().as_secs_f64() < 60.0;
    report(
        10,
        "MLP separates the toy set; MLP→FMP gradient matches finite differences",
        ok,
        &format!("test acc {acc:.3}, pipeline fd max rel err {worst:.2e} (≤1e-4)"),
        start,
    );
}

#[derive(Clone, Copy, Default)]
struct Summary {
    val_acc: f64,
    val_dp: f64,
    acc: f64,
    dp: f64,
}

fn run_seeds(data: &[DatasetBundle], cfg: TrainConfig) -> Summary {
    use rayon::prelude::*;
    let outs: Vec<Summary> = (0..data.len())
        .into_par_iter()
        .map(|k| {
            let cfg = TrainConfig { seed: derive_seed(111, k as u64), ..cfg };
            let split = split_nodes(data[k].len(), cfg.split, derive_seed(cfg.seed, 0));
            let o = train_with_split(&cfg, &data[k], split).unwrap();
            Summary { val_acc: o.val.accuracy, val_dp: o.val.dp, acc: o.test.accuracy, dp: o.test.dp }
        })
        .collect();
    let m = outs.len() as f64;
    outs.iter().fold(Summary::default(), |s, o| Summary {
        val_acc: s.val_acc + o.val_acc / m,
        val_dp: s.val_dp + o.val_dp / m,
        acc: s.acc + o.acc / m,
        dp: s.dp + o.dp / m,
    })
}

#[test]
fn ac11_debiasing_efficacy() {
    let _g = serial();
    let start = Instant::now();
    let params = BiasedTaskParams::default();
    let data: Vec<DatasetBundle> =
        (0..5u64).map(|k| biased_classification(&params, derive_seed(110, k)).unwrap()).collect();
    let base = TrainConfig::default();
    let gcn = run_seeds(&data, TrainConfig { scheme: Scheme::Gcn, ..base });
    println!("       AC-11 gcn: val acc {:.4} val dp {:.4} | test acc {:.4} dp {:.4}", gcn.val_acc, gcn.val_dp, gcn.acc, gcn.dp);

    // λ_f is chosen on validation: lowest ΔDP among settings whose accuracy
    // stays within 3 points of the GCN pipeline.
    let mut best: Option<(f64, Summary)> = None;
    for &lambda_f in &LAMBDA_F_GRID {
        let cfg = TrainConfig { scheme: Scheme::Fmp, fmp: FmpConfig::new(1.0, lambda_f, 10).unwrap(), ..base };
        let r = run_seeds(&data, cfg);
        println!(
            "       AC-11 fmp λ_f = {lambda_f}: val acc {:.4} val dp {:.4} | test acc {:.4} dp {:.4}",
            r.val_acc, r.val_dp, r.acc, r.dp
        );
        let eligible = r.val_acc >= gcn.val_acc - 0.03;
        if eligible && best.is_none_or(|(_, b)| r.val_dp < b.val_dp) {
            best = Some((lambda_f, r));
        }
    }
    let (lambda_f, fmp) = best.unwrap_or((f64::NAN, Summary { dp: f64::INFINITY, ..Summary::default() }));
    let ok = fmp.dp <= 0.5 * gcn.dp && fmp.acc >= gcn.acc - 0.03 && start.elapsed().as_secs_f64() < 600.0;
    report(
        11,
        "FMP halves GCN ΔDP without losing accuracy",
        ok,
        &format!(
            "λ_f = {lambda_f}: FMP acc {:.4} ΔDP {:.4} vs GCN acc {:.4} ΔDP {:.4} (ratio {:.2}, 5 seeds)",
            fmp.acc,
            fmp.dp,
            gcn.acc,
            gcn.dp,
            fmp.dp / gcn.dp
        ),
        start,
    );
}

#[test]
fn ac12_homophily_ingestion() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (k, eps) in [0.6, 0.8, 0.9, 0.95, 1.0].into_iter().enumerate() {
        let p = BiasedTaskParams { n: 10_000, rho_d: 1e-3, eps_sens: eps, ..Default::default() };
        let bundle = biased_classification(&p, derive_seed(121, k as u64)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let reported = loaded.summary().sensitive_homophily.unwrap();
        assert_eq!(reported, sensitive_homophily(&bundle.graph, &bundle.sens).unwrap());
        worst = worst.max((reported - eps).abs());
    }
    let mut ok = worst <= 0.01;
    let mut detail = format!("synthetic max |ε̂ − ε| = {worst:.4} (≤0.01)");
    match std::env::var_os("FMP_POKEC_N_DIR") {
        Some(dir) => {
            let s = load_dataset(std::path::Path::new(&dir)).unwrap().summary();
            let sens = s.sensitive_homophily.unwrap_or(f64::NAN);
            let label = s.label_homophily.unwrap_or(f64::NAN);
            ok &= (sens - 0.9530).abs() <= 0.001 && (label - 0.7323).abs() <= 0.001;
            detail += &format!(", Pokec-n sensitive {sens:.4} (0.9530), label {label:.4} (0.7323)");
        }
        None => detail += ", Pokec-n half skipped (FMP_POKEC_N_DIR unset)",
    }
    report(12, "homophily reported on ingestion", ok, &detail, start);
}
