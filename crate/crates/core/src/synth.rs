//! Two-block stochastic block model realizing an `(n, ρ_d, ε_sens, c)` graph,
//! Gaussian-mixture node attributes, and the closed-form group statistics of
//! those attributes after one GCN aggregation.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{incident_vector, Graph, SensitiveVector};
use crate::linalg::{cholesky, is_symmetric};
use crate::rng::{seeded, Rng};

/// Parameters of the random graph family: node count, expected edge density,
/// target sensitive homophily and the fraction of `s = +1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub rho_d: f64,
    pub eps_sens: f64,
    pub c: f64,
}

impl SbmParams {
    /// Validated constructor; fails if the implied connection probabilities
    /// leave `[0, 1]` or a group would be empty.
    pub fn new(n: usize, rho_d: f64, eps_sens: f64, c: f64) -> Result<Self> {
        let p = Self { n, rho_d, eps_sens, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        conn_probs(self)?;
        let (neg, pos) = self.group_sizes();
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidParameter(format!(
                "n = {} with c = {} leaves an empty group",
                self.n, self.c
            )));
        }
        Ok(())
    }

    /// `(n_{-1}, n_{+1})` with `n_{+1} = round(n·c)`.
    pub fn group_sizes(&self) -> (usize, usize) {
        let pos = ((self.n as f64) * self.c).round() as usize;
        let pos = pos.min(self.n);
        (self.n - pos, pos)
    }
}

/// Intra- and inter-group connection probabilities
/// `p = ρ_d ε / (c² + (1−c)²)`, `q = ρ_d (1−ε) / (2c(1−c))`.
pub fn conn_probs(p: &SbmParams) -> Result<(f64, f64)> {
    if !(p.rho_d > 0.0 && p.rho_d < 1.0) {
        return Err(Error::InvalidParameter(format!("rho_d = {} must lie in (0, 1)", p.rho_d)));
    }
    if !(0.0..=1.0).contains(&p.eps_sens) {
        return Err(Error::InvalidParameter(format!("eps_sens = {} must lie in [0, 1]", p.eps_sens)));
    }
    if !(p.c > 0.0 && p.c < 1.0) {
        return Err(Error::InvalidParameter(format!("c = {} must lie in (0, 1)", p.c)));
    }
    let c = p.c;
    let p_conn = p.rho_d * p.eps_sens / (c * c + (1.0 - c) * (1.0 - c));
    let q_conn = p.rho_d * (1.0 - p.eps_sens) / (2.0 * c * (1.0 - c));
    for (name, value) in [("p_conn", p_conn), ("q_conn", q_conn)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::ProbabilityOutOfRange { name, value });
        }
    }
    Ok((p_conn, q_conn))
}

/// Samples a graph and its sensitive attribute.
///
/// Group sizes are fixed at `round(n·c)` / the remainder and assigned to a
/// random permutation of the nodes. Every unordered pair is an independent
/// Bernoulli draw; the sampler visits only the successes by drawing geometric
/// gaps over each block's pair index space, so cost is O(n + |E|).
pub fn sample_sbm(p: &SbmParams, seed: u64) -> Result<(Graph, SensitiveVector)> {
    let (p_conn, q_conn) = conn_probs(p)?;
    p.validate()?;
    let (_, n_pos) = p.group_sizes();
    let mut rng = seeded(seed);

    let mut groups: Vec<i8> = (0..p.n).map(|i| if i < n_pos { 1 } else { -1 }).collect();
    groups.shuffle(&mut rng);
    let pos: Vec<usize> = (0..p.n).filter(|&i| groups[i] > 0).collect();
    let neg: Vec<usize> = (0..p.n).filter(|&i| groups[i] < 0).collect();

    let mut edges = Vec::new();
    for block in [&pos, &neg] {
        let m = block.len() as u64;
        bernoulli_successes(m * m.saturating_sub(1) / 2, p_conn, &mut rng, |k| {
            let (a, b) = triangle_pair(k);
            edges.push((block[a as usize], block[b as usize]));
        });
    }
    let cols = neg.len() as u64;
    bernoulli_successes(pos.len() as u64 * cols, q_conn, &mut rng, |k| {
        edges.push((pos[(k / cols) as usize], neg[(k % cols) as usize]));
    });

    let g = Graph::from_edges(p.n, &edges)?;
    Ok((g, incident_vector(&groups)?))
}

/// Calls `emit` with the indices in `0..total` of independent
/// Bernoulli(`prob`) successes, in increasing order.
fn bernoulli_successes(total: u64, prob: f64, rng: &mut Rng, mut emit: impl FnMut(u64)) {
    if total == 0 || prob <= 0.0 {
        return;
    }
    if prob >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_fail = (-prob).ln_1p();
    let mut k = 0u64;
    while k < total {
        let u: f64 = rng.random();
        let gap = ((1.0 - u).ln() / log_fail).floor();
        if gap >= (total - k) as f64 {
            break;
        }
        k += gap as u64;
        emit(k);
        k += 1;
    }
}

/// Maps a linear index to the pair `(a, b)`, `a < b`, enumerating
/// `b = 1, 2, …` and `a = 0..b` within each `b`.
fn triangle_pair(k: u64) -> (u64, u64) {
    let mut b = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    while b * (b - 1) / 2 > k {
        b -= 1;
    }
    while (b + 1) * b / 2 <= k {
        b += 1;
    }
    (k - b * (b - 1) / 2, b)
}

/// `GMM(c, μ1, Σ1, μ2, Σ2)`: group `s = -1` draws from `N(μ1, Σ1)`, group
/// `s = +1` from `N(μ2, Σ2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub c: f64,
    pub mu1: Array1<f64>,
    pub mu2: Array1<f64>,
    pub sigma1: Array2<f64>,
    pub sigma2: Array2<f64>,
}

impl GmmParams {
    pub fn new(c: f64, mu1: Array1<f64>, sigma1: Array2<f64>, mu2: Array1<f64>, sigma2: Array2<f64>) -> Result<Self> {
        let g = Self { c, mu1, mu2, sigma1, sigma2 };
        g.validate()?;
        Ok(g)
    }

    /// `μ1 = [0, 1]`, `μ2 = [1, 0]`, `Σ = I`.
    pub fn isotropic_2d(c: f64) -> Self {
        Self::new(
            c,
            ndarray::array![0.0, 1.0],
            Array2::eye(2),
            ndarray::array![1.0, 0.0],
            Array2::eye(2),
        )
        .expect("identity covariance is valid")
    }

    /// Same means with `Σ = diag(1, 2)` for both groups.
    pub fn anisotropic_2d(c: f64) -> Self {
        let sigma = ndarray::array![[1.0, 0.0], [0.0, 2.0]];
        Self::new(c, ndarray::array![0.0, 1.0], sigma.clone(), ndarray::array![1.0, 0.0], sigma)
            .expect("diagonal covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mu1.len();
        if d == 0 || self.mu2.len() != d {
            return Err(Error::dims("GMM means must be non-empty and of equal length"));
        }
        for sigma in [&self.sigma1, &self.sigma2] {
            if sigma.dim() != (d, d) {
                return Err(Error::dims(format!("covariance must be {d}x{d}")));
            }
            if !is_symmetric(sigma.view(), 1e-12) || cholesky(sigma.view()).is_none() {
                return Err(Error::NonPositiveDefinite);
            }
        }
        Ok(())
    }
}

/// Draws one feature row per node from its group's Gaussian.
pub fn sample_gmm_features(g: &GmmParams, s: &SensitiveVector, seed: u64) -> Result<Array2<f64>> {
    g.validate()?;
    let l1 = cholesky(g.sigma1.view()).ok_or(Error::NonPositiveDefinite)?;
    let l2 = cholesky(g.sigma2.view()).ok_or(Error::NonPositiveDefinite)?;
    let d = g.dim();
    let mut rng = seeded(seed);
    let mut x = Array2::<f64>::zeros((s.len(), d));
    let mut z = Array1::<f64>::zeros(d);
    for (i, &group) in s.groups().iter().enumerate() {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let (mu, l) = if group < 0 { (&g.mu1, &l1) } else { (&g.mu2, &l2) };
        x.row_mut(i).assign(&(mu + &l.dot(&z)));
    }
    Ok(x)
}

/// Expected group statistics after `X̃ = ÃX`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedGmm {
    pub nu1: f64,
    pub nu2: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub mu1_tilde: Array1<f64>,
    pub mu2_tilde: Array1<f64>,
    pub sigma1_tilde: Array2<f64>,
    pub sigma2_tilde: Array2<f64>,
}

/// Closed-form post-aggregation parameters for the equal-covariance mixture.
///
/// With `n_{-1}`, `n_{+1}` the group sizes:
/// `ζ1 = (n_{-1}−1)p + 1 + n_{+1} q`, `ν1 = ((n_{-1}−1)p + 1) / ζ1`,
/// `ζ2 = n_{-1} q + 1 + (n_{+1}−1)p`, `ν2 = n_{-1} q / ζ2`,
/// `μ̃_k = ν_k μ1 + (1−ν_k) μ2`, `Σ̃_k = Σ / ζ_k`.
pub fn expected_aggregated_gmm(p: &SbmParams, g: &GmmParams) -> Result<AggregatedGmm> {
    g.validate()?;
    if g.sigma1 != g.sigma2 {
        return Err(Error::UnequalCovariance);
    }
    let (p_conn, q_conn) = conn_probs(p)?;
    let (n_neg, n_pos) = p.group_sizes();
    let (n_neg, n_pos) = (n_neg as f64, n_pos as f64);

    let same1 = (n_neg - 1.0) * p_conn + 1.0;
    let zeta1 = same1 + n_pos * q_conn;
    let nu1 = same1 / zeta1;
    let cross2 = n_neg * q_conn;
    let zeta2 = cross2 + 1.0 + (n_pos - 1.0) * p_conn;
    let nu2 = cross2 / zeta2;

    let mix = |nu: f64| &g.mu1 * nu + &g.mu2 * (1.0 - nu);
    Ok(AggregatedGmm {
        nu1,
        nu2,
        zeta1,
        zeta2,
        mu1_tilde: mix(nu1),
        mu2_tilde: mix(nu2),
        sigma1_tilde: &g.sigma1 / zeta1,
        sigma2_tilde: &g.sigma1 / zeta2,
    })
}

/// `(ν1 − ν2)² · min(ζ1, ζ2) > 1`: aggregation increases the KL-based bias.
pub fn bias_enhance_condition(a: &AggregatedGmm) -> bool {
    bias_enhance_score(a) > 1.0
}

/// Left-hand side of [`bias_enhance_condition`].
pub fn bias_enhance_score(a: &AggregatedGmm) -> f64 {
    (a.nu1 - a.nu2).powi(2) * a.zeta1.min(a.zeta2)
}
