//! Message passing as graph signal denoising: GCN/SGC/APPNP smoothing and the
//! fair primal-dual iteration that adds a demographic-parity penalty in
//! probability space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{spmm, CsrMatrix, NormalizedAdjacency, SensitiveVector};

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(f: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = f.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// One GCN aggregation `ÃX`.
pub fn gcn_aggregate(a: &NormalizedAdjacency, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    spmm(a, x)
}

/// `Ã^k X`.
pub fn sgc_aggregate(a: &NormalizedAdjacency, x: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    let mut f = x.to_owned();
    for _ in 0..k {
        f = spmm(a, f.view())?;
    }
    Ok(f)
}

/// `(1−α)ÃF + αX`.
pub fn appnp_step(
    a: &NormalizedAdjacency,
    f: ArrayView2<'_, f64>,
    x_trans: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if f.dim() != x_trans.dim() {
        return Err(Error::dims("appnp_step: state and input differ in shape"));
    }
    let mut out = spmm(a, f)?;
    Zip::from(&mut out)
        .and(&x_trans)
        .for_each(|af, &x| *af = alpha * x + (1.0 - alpha) * *af);
    Ok(out)
}

pub fn appnp(a: &NormalizedAdjacency, x_trans: ArrayView2<'_, f64>, alpha: f64, k: usize) -> Result<Array2<f64>> {
    let mut f = x_trans.to_owned();
    for _ in 0..k {
        f = appnp_step(a, f.view(), x_trans, alpha)?;
    }
    Ok(f)
}

fn frobenius_inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// `tr(Fᵀ L̃ F)` written as `‖F‖² − ⟨F, ÃF⟩`.
pub fn laplacian_quadratic(a: &NormalizedAdjacency, f: ArrayView2<'_, f64>) -> Result<f64> {
    let af = spmm(a, f)?;
    Ok(frobenius_inner(f, f) - frobenius_inner(f, af.view()))
}

/// `(λ_s/2) tr(Fᵀ L̃ F) + ½‖F − X‖²`.
pub fn smoothness_energy(
    f: ArrayView2<'_, f64>,
    l_tilde: &CsrMatrix,
    x_trans: ArrayView2<'_, f64>,
    lambda_s: f64,
) -> Result<f64> {
    if f.dim() != x_trans.dim() {
        return Err(Error::dims("smoothness_energy: state and input differ in shape"));
    }
    let lf = l_tilde.spmm(f)?;
    let diff = &f - &x_trans;
    Ok(0.5 * lambda_s * frobenius_inner(f, lf.view()) + 0.5 * frobenius_inner(diff.view(), diff.view()))
}

fn check_rows(f: ArrayView2<'_, f64>, delta: ArrayView1<'_, f64>) -> Result<()> {
    if f.nrows() != delta.len() {
        return Err(Error::dims(format!("{} rows for {} sensitive entries", f.nrows(), delta.len())));
    }
    Ok(())
}

/// `λ_f ‖Δ_s SF(F)‖₁`.
pub fn fairness_energy(f: ArrayView2<'_, f64>, s: &SensitiveVector, lambda_f: f64) -> Result<f64> {
    check_rows(f, s.delta().view())?;
    if lambda_f == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda_f * s.delta().dot(&softmax_rows(f)).mapv(f64::abs).sum())
}

/// Gradient of `⟨Δ_s SF(F), u⟩` with respect to `F` in O(n·d).
///
/// Row `i` is `w − (Σ_j w_j) p` with `p = SF(F_i)` and `w = Δ_i u ⊙ p`.
pub fn fmp_gradient(f: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>, s: &SensitiveVector) -> Result<Array2<f64>> {
    fmp_gradient_delta(f, u, s.delta().view())
}

/// [`fmp_gradient`] for an arbitrary incident vector.
pub fn fmp_gradient_delta(
    f: ArrayView2<'_, f64>,
    u: ArrayView1<'_, f64>,
    delta: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    check_rows(f, delta)?;
    if u.len() != f.ncols() {
        return Err(Error::dims(format!("dual has length {}, features have {} columns", u.len(), f.ncols())));
    }
    let mut out = softmax_rows(f);
    Zip::from(out.rows_mut()).and(delta).for_each(|mut row, &di| {
        let mut total = 0.0;
        for (p, &uj) in row.iter().zip(u) {
            total += di * uj * p;
        }
        row.zip_mut_with(&u, |p, &uj| *p = di * uj * *p - total * *p);
    });
    Ok(out)
}

/// Reference gradient built from the full Jacobian `∂SF(F)/∂F_ij` of every
/// coordinate, one dense n×d slice at a time: O(n²d²) work.
pub fn fmp_gradient_oracle(
    f: ArrayView2<'_, f64>,
    u: ArrayView1<'_, f64>,
    s: &SensitiveVector,
) -> Result<Array2<f64>> {
    let delta = s.delta();
    check_rows(f, delta.view())?;
    let (n, d) = f.dim();
    if u.len() != d {
        return Err(Error::dims(format!("dual has length {}, features have {d} columns", u.len())));
    }
    let p = softmax_rows(f);
    let mut slice = Array2::<f64>::zeros((n, d));
    let mut grad = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            slice.fill(0.0);
            for k in 0..d {
                let kron = if j == k { 1.0 } else { 0.0 };
                slice[[i, k]] = p[[i, k]] * (kron - p[[i, j]]);
            }
            let mut acc = 0.0;
            for a in 0..n {
                for k in 0..d {
                    acc += delta[a] * u[k] * slice[[a, k]];
                }
            }
            grad[[i, j]] = acc;
        }
    }
    Ok(grad)
}

/// Projection onto the l∞ ball of radius `λ_f`.
pub fn prox_linf(u_bar: ArrayView1<'_, f64>, lambda_f: f64) -> Array1<f64> {
    u_bar.mapv(|v| clip(v, lambda_f))
}

pub(crate) fn clip(v: f64, radius: f64) -> f64 {
    if v.is_nan() {
        return v;
    }
    let m = v.abs().min(radius);
    if m == 0.0 {
        0.0
    } else {
        m.copysign(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmpConfig {
    pub lambda_s: f64,
    pub lambda_f: f64,
    pub iterations: usize,
}

impl Default for FmpConfig {
    fn default() -> Self {
        Self { lambda_s: 1.0, lambda_f: 10.0, iterations: 10 }
    }
}

impl FmpConfig {
    pub fn new(lambda_s: f64, lambda_f: f64, iterations: usize) -> Result<Self> {
        let cfg = Self { lambda_s, lambda_f, iterations };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_s", self.lambda_s), ("lambda_f", self.lambda_f)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Primal step `1 / (1 + λ_s)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 + self.lambda_s)
    }

    /// Dual step `1 / (2γ)`.
    pub fn beta(&self) -> f64 {
        1.0 / (2.0 * self.gamma())
    }
}

/// Diagnostics after one propagation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub h_s: f64,
    pub h_f: f64,
    pub u: Array1<f64>,
}

impl IterationRecord {
    pub fn u_linf(&self) -> f64 {
        self.u.fold(0.0, |m, &v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FmpTrajectory {
    pub records: Vec<IterationRecord>,
}

fn record(
    a: &NormalizedAdjacency,
    f: ArrayView2<'_, f64>,
    x_trans: ArrayView2<'_, f64>,
    s: &SensitiveVector,
    cfg: &FmpConfig,
    u: Array1<f64>,
) -> Result<IterationRecord> {
    let diff = &f - &x_trans;
    let h_s = 0.5 * cfg.lambda_s * laplacian_quadratic(a, f)? + 0.5 * frobenius_inner(diff.view(), diff.view());
    Ok(IterationRecord { h_s, h_f: fairness_energy(f, s, cfg.lambda_f)?, u })
}

/// Runs `K` primal-dual iterations from `F⁰ = X`, `u⁰ = 0`:
///
/// 1. `X_agg = γX + (1−γ)ÃFᵏ`
/// 2. `F̄ = X_agg − γ ∇_F⟨Δ_s SF(F), uᵏ⟩|_{Fᵏ}`
/// 3. `ū = uᵏ + β Δ_s SF(F̄)`
/// 4. `uᵏ⁺¹ = prox(ū)`, the clip to `[−λ_f, λ_f]`
/// 5. `Fᵏ⁺¹ = X_agg − γ ∇_F⟨Δ_s SF(F), uᵏ⁺¹⟩|_{Fᵏ}`
pub fn fmp_forward(
    x_trans: ArrayView2<'_, f64>,
    a: &NormalizedAdjacency,
    s: &SensitiveVector,
    cfg: &FmpConfig,
) -> Result<(Array2<f64>, FmpTrajectory)> {
    cfg.validate()?;
    check_rows(x_trans, s.delta().view())?;
    if a.node_count() != x_trans.nrows() {
        return Err(Error::dims("fmp_forward: adjacency and features differ in node count"));
    }
    let (gamma, beta) = (cfg.gamma(), cfg.beta());
    let mut f = x_trans.to_owned();
    let mut u = Array1::<f64>::zeros(x_trans.ncols());
    let mut traj = FmpTrajectory::default();
    for _ in 0..cfg.iterations {
        let agg = appnp_step(a, f.view(), x_trans, gamma)?;
        let f_bar = descend(&agg, f.view(), u.view(), s, gamma)?;
        let u_bar = &u + &(s.delta().dot(&softmax_rows(f_bar.view())) * beta);
        u = prox_linf(u_bar.view(), cfg.lambda_f);
        f = descend(&agg, f.view(), u.view(), s, gamma)?;
        traj.records.push(record(a, f.view(), x_trans, s, cfg, u.clone())?);
    }
    Ok((f, traj))
}

fn descend(
    agg: &Array2<f64>,
    at: ArrayView2<'_, f64>,
    u: ArrayView1<'_, f64>,
    s: &SensitiveVector,
    gamma: f64,
) -> Result<Array2<f64>> {
    if u.iter().all(|&v| v == 0.0) {
        return Ok(agg.clone());
    }
    let g = fmp_gradient(at, u, s)?;
    Ok(agg - &(g * gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    None,
    /// A single `Ã` application.
    Gcn,
    /// `Ã^K`.
    Sgc,
    /// APPNP with teleport `α = γ`.
    Appnp,
    #[default]
    Fmp,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::None, Scheme::Gcn, Scheme::Sgc, Scheme::Appnp, Scheme::Fmp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Gcn => "gcn",
            Scheme::Sgc => "sgc",
            Scheme::Appnp => "appnp",
            Scheme::Fmp => "fmp",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown propagation scheme {s:?}")))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Applies `scheme` and records the energies after every step. Non-FMP
/// schemes report a zero dual.
pub fn propagate(
    scheme: Scheme,
    x_trans: ArrayView2<'_, f64>,
    a: &NormalizedAdjacency,
    s: &SensitiveVector,
    cfg: &FmpConfig,
) -> Result<(Array2<f64>, FmpTrajectory)> {
    if scheme == Scheme::Fmp {
        return fmp_forward(x_trans, a, s, cfg);
    }
    cfg.validate()?;
    check_rows(x_trans, s.delta().view())?;
    let steps = match scheme {
        Scheme::None => 0,
        Scheme::Gcn => 1,
        _ => cfg.iterations,
    };
    let zero = Array1::<f64>::zeros(x_trans.ncols());
    let mut f = x_trans.to_owned();
    let mut traj = FmpTrajectory::default();
    for _ in 0..steps {
        f = match scheme {
            Scheme::Appnp => appnp_step(a, f.view(), x_trans, cfg.gamma())?,
            _ => spmm(a, f.view())?,
        };
        traj.records.push(record(a, f.view(), x_trans, s, cfg, zero.clone())?);
    }
    Ok((f, traj))
}
