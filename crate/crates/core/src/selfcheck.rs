//! Built-in verification suite: gradient oracles, finite differences, prox
//! properties, the `λ_f = 0` collapse, and gradient cost scaling.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::Serialize;

use crate::autodiff::{finite_diff_check, Tape};
use crate::error::Result;
use crate::graph::{incident_vector, normalized_adjacency, Graph, SensitiveVector};
use crate::propagation::{appnp, fmp_forward, fmp_gradient, fmp_gradient_oracle, prox_linf, softmax_rows, FmpConfig};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timing {
    pub n: usize,
    pub fast_us: f64,
    pub oracle_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub items: Vec<CheckItem>,
    pub timings: Vec<Timing>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfCheckOptions {
    pub seed: u64,
    /// Replace the fast gradient with one missing its row-sum correction.
    pub inject_gradient_fault: bool,
    /// Node counts for the timing check; each should double the previous.
    pub timing_sizes: Option<[usize; 3]>,
}

type GradFn = fn(ArrayView2<'_, f64>, ArrayView1<'_, f64>, &SensitiveVector) -> Result<Array2<f64>>;

fn faulty_gradient(f: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, s: &SensitiveVector) -> Result<Array2<f64>> {
    let mut p = softmax_rows(f);
    for (mut row, &d) in p.rows_mut().into_iter().zip(s.delta()) {
        row.zip_mut_with(&u, |v, &uj| *v *= d * uj);
    }
    Ok(p)
}

pub fn random_graph(n: usize, p: f64, seed: u64) -> (Graph, SensitiveVector) {
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let mut groups: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    groups[0] = 1;
    groups[n - 1] = -1;
    (Graph::from_edges(n, &edges).expect("generated edges are valid"), incident_vector(&groups).expect("both groups present"))
}

pub fn random_matrix(n: usize, d: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-scale..scale))
}

fn item(name: &str, passed: bool, detail: String) -> CheckItem {
    CheckItem { name: name.into(), passed, detail }
}

fn check_oracle(grad: GradFn, seed: u64) -> Result<CheckItem> {
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = seeded(derive_seed(seed, trial));
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=8);
        let (_, s) = random_graph(n, 0.0, derive_seed(seed, 1000 + trial));
        let f = random_matrix(n, d, 3.0, derive_seed(seed, 2000 + trial));
        let u = Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
        let fast = grad(f.view(), u.view(), &s)?;
        let slow = fmp_gradient_oracle(f.view(), u.view(), &s)?;
        worst = worst.max((&fast - &slow).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    Ok(item("gradient matches Jacobian oracle", worst <= 1e-12, format!("max abs diff {worst:.3e} over 100 instances")))
}

fn check_fd(grad: GradFn, seed: u64) -> Result<CheckItem> {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let (_, s) = random_graph(20, 0.0, derive_seed(seed, 3000 + trial));
        let f0 = random_matrix(20, 5, 2.0, derive_seed(seed, 4000 + trial));
        let u = random_matrix(1, 5, 3.0, derive_seed(seed, 5000 + trial)).row(0).to_owned();
        let err = finite_diff_check(
            |f| {
                let val = s.delta().dot(&softmax_rows(f.view())).dot(&u);
                Ok((val, grad(f.view(), u.view(), &s)?))
            },
            &f0,
            1e-5,
        )?;
        worst = worst.max(err);
    }
    Ok(item("gradient matches finite differences", worst < 1e-6, format!("max rel err {worst:.3e}")))
}

fn check_autodiff_fd(seed: u64) -> Result<CheckItem> {
    let mut worst = 0.0f64;
    for trial in 0..5u64 {
        let (g, s) = random_graph(12, 0.3, derive_seed(seed, 6000 + trial));
        let a = normalized_adjacency(&g);
        let x0 = random_matrix(12, 3, 1.0, derive_seed(seed, 7000 + trial));
        let cfg = FmpConfig::new(1.0, 0.3, 3)?;
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let err = finite_diff_check(
            |x| {
                let mut t = Tape::new();
                let xv = t.leaf(x.clone());
                let f = crate::training::propagate_on_tape(&mut t, xv, &a, &s, crate::propagation::Scheme::Fmp, &cfg, false)?;
                let loss = t.cross_entropy(f, &labels, &[true; 12])?;
                let v = t.value(loss)[[0, 0]];
                Ok((v, t.backward(loss)?.wrt(xv)))
            },
            &x0,
            1e-5,
        )?;
        worst = worst.max(err);
    }
    Ok(item("unrolled FMP tape matches finite differences", worst < 1e-5, format!("max rel err {worst:.3e}")))
}

fn check_prox(seed: u64) -> CheckItem {
    let mut rng = seeded(seed);
    let mut ok = true;
    for _ in 0..1000 {
        let d = rng.random_range(1..10);
        let lambda = rng.random_range(0.0..4.0);
        let a = Array1::from_shape_fn(d, |_| rng.random_range(-8.0..8.0));
        let b = Array1::from_shape_fn(d, |_| rng.random_range(-8.0..8.0));
        let pa = prox_linf(a.view(), lambda);
        let pb = prox_linf(b.view(), lambda);
        ok &= prox_linf(pa.view(), lambda) == pa;
        ok &= pa.iter().all(|v| v.abs() <= lambda + 1e-12);
        let lhs = (&pa - &pb).mapv(|v| v * v).sum().sqrt();
        let rhs = (&a - &b).mapv(|v| v * v).sum().sqrt();
        ok &= lhs <= rhs + 1e-12;
    }
    item("prox idempotent, in ball, non-expansive", ok, "1000 random vectors".into())
}

fn check_collapse(seed: u64) -> Result<CheckItem> {
    let mut ok = true;
    for trial in 0..20u64 {
        let (g, s) = random_graph(30, 0.15, derive_seed(seed, 8000 + trial));
        let a = normalized_adjacency(&g);
        let x = random_matrix(30, 3, 2.0, derive_seed(seed, 9000 + trial));
        let k = 1 + (trial as usize % 20);
        let cfg = FmpConfig::new(0.1 * trial as f64, 0.0, k)?;
        let (f, _) = fmp_forward(x.view(), &a, &s, &cfg)?;
        ok &= f == appnp(&a, x.view(), cfg.gamma(), k)?;
    }
    Ok(item("λ_f = 0 reproduces APPNP bitwise", ok, "20 random graphs".into()))
}

/// Median per-call time in microseconds over batches lasting at least
/// `min_batch_ms` each.
pub fn time_call(mut f: impl FnMut(), batches: usize, min_batch_ms: f64) -> f64 {
    f();
    let start = Instant::now();
    f();
    let once = start.elapsed().as_secs_f64().max(1e-9);
    let reps = ((min_batch_ms * 1e-3 / once).ceil() as usize).max(1);
    let mut samples: Vec<f64> = (0..batches)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                f();
            }
            t.elapsed().as_secs_f64() * 1e6 / reps as f64
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Times the fast gradient and the oracle at each size with `d = 4`.
pub fn measure_scaling(grad: GradFn, sizes: &[usize], seed: u64) -> Result<Vec<Timing>> {
    let d = 4;
    sizes
        .iter()
        .map(|&n| {
            let (_, s) = random_graph(n, 0.0, derive_seed(seed, n as u64));
            let f = random_matrix(n, d, 2.0, derive_seed(seed, 1 + n as u64));
            let u = Array1::from(vec![0.5, -1.0, 2.0, 0.25]);
            let fast_us = time_call(|| drop(std::hint::black_box(grad(f.view(), u.view(), &s))), 9, 20.0);
            let oracle_us = time_call(|| drop(std::hint::black_box(fmp_gradient_oracle(f.view(), u.view(), &s))), 3, 0.0);
            Ok(Timing { n, fast_us, oracle_us })
        })
        .collect()
}

pub fn run_self_check(opts: &SelfCheckOptions) -> Result<SelfCheckReport> {
    let grad: GradFn = if opts.inject_gradient_fault { faulty_gradient } else { fmp_gradient };
    let seed = opts.seed;
    let mut items = vec![
        check_oracle(grad, seed)?,
        check_fd(grad, seed)?,
        check_autodiff_fd(seed)?,
        check_prox(seed),
        check_collapse(seed)?,
    ];
    let sizes = opts.timing_sizes.unwrap_or([1000, 2000, 4000]);
    let timings = measure_scaling(grad, &sizes, seed)?;
    let factors: Vec<(f64, f64)> = timings
        .windows(2)
        .map(|w| (w[1].fast_us / w[0].fast_us, w[1].oracle_us / w[0].oracle_us))
        .collect();
    let (fast_last, oracle_last) = *factors.last().expect("three sizes");
    items.push(item(
        "fast gradient scales linearly, oracle quadratically",
        (1.5..=2.8).contains(&fast_last) && oracle_last > 3.2,
        format!(
            "doubling n {}→{}: fast ×{fast_last:.2}, oracle ×{oracle_last:.2}",
            sizes[1], sizes[2]
        ),
    ));
    Ok(SelfCheckReport { items, timings })
}
