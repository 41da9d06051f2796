//! Parameter sweeps: bias amplification of one GCN aggregation over the
//! random-graph family, and `(λ_s, λ_f)` grids of FMP training runs.

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_float, DatasetBundle};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, spmm};
use crate::metrics::{argmax_rows, delta_bias_empirical, demographic_parity};
use crate::propagation::{FmpConfig, Scheme};
use crate::rng::derive_seed;
use crate::synth::{bias_enhance_condition, expected_aggregated_gmm, sample_gmm_features, sample_sbm, GmmParams, SbmParams};
use crate::training::{split_nodes, train_with_split, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    EpsSens,
    RhoD,
    N,
    C,
    LambdaF,
    LambdaS,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::EpsSens => "eps_sens",
            SweepParam::RhoD => "rho_d",
            SweepParam::N => "n",
            SweepParam::C => "c",
            SweepParam::LambdaF => "lambda_f",
            SweepParam::LambdaS => "lambda_s",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::EpsSens => vec![0.80, 0.85, 0.90, 0.95, 1.0],
            SweepParam::RhoD => vec![5e-4, 1e-3, 2e-3],
            SweepParam::N => vec![1e3, 3e3, 1e4, 3e4],
            SweepParam::C => vec![0.1, 0.2, 0.3, 0.4, 0.5],
            SweepParam::LambdaF => LAMBDA_F_GRID.to_vec(),
            SweepParam::LambdaS => LAMBDA_S_GRID.to_vec(),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use SweepParam::*;
        [EpsSens, RhoD, N, C, LambdaF, LambdaS]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sweep parameter {s:?}")))
    }
}

pub const LAMBDA_F_GRID: [f64; 8] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 100.0, 1000.0];
pub const LAMBDA_S_GRID: [f64; 9] = [0.0, 0.1, 0.5, 1.0, 3.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// `Σ = I`
    #[default]
    Identity,
    /// `Σ = diag(1, 2)`
    Diagonal12,
}

impl Covariance {
    pub fn gmm(self, c: f64) -> GmmParams {
        match self {
            Covariance::Identity => GmmParams::isotropic_2d(c),
            Covariance::Diagonal12 => GmmParams::anisotropic_2d(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Setting for the parameters that are not swept.
    pub fixed: SbmParams,
    pub covariance: Covariance,
    pub seeds: usize,
    pub base_seed: u64,
}

impl SweepSpec {
    /// The synthetic defaults: `c = 0.5`, `n = 10⁴`, `ρ_d = 10⁻³`, `ε = 0.95`.
    pub fn new(param: SweepParam) -> Self {
        Self {
            param,
            values: param.default_grid(),
            fixed: SbmParams { n: 10_000, rho_d: 1e-3, eps_sens: 0.95, c: 0.5 },
            covariance: Covariance::Identity,
            seeds: 5,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("sweep needs at least one seed".into()));
        }
        for &v in &self.values {
            self.setting(v)?;
        }
        Ok(())
    }

    /// The full graph setting at one grid value.
    pub fn setting(&self, value: f64) -> Result<SbmParams> {
        let mut p = self.fixed;
        match self.param {
            SweepParam::EpsSens => p.eps_sens = value,
            SweepParam::RhoD => p.rho_d = value,
            SweepParam::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidParameter(format!("node count {value} is not a positive integer")));
                }
                p.n = value as usize;
            }
            SweepParam::C => p.c = value,
            SweepParam::LambdaF | SweepParam::LambdaS => {
                return Err(Error::InvalidParameter(format!("{} is not a graph parameter", self.param.name())));
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasSweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub dp_before: f64,
    pub dp_after: f64,
    pub dp_diff: f64,
    pub delta_bias: f64,
    pub condition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub dp_before: f64,
    pub dp_after: f64,
    pub delta_bias: f64,
    pub condition: bool,
}

/// One graph + features draw: DP of the argmax class decision before and
/// after one `Ã` aggregation, the fitted-Gaussian bias change, and the
/// closed-form enhancement condition.
pub fn bias_point(p: &SbmParams, gmm: &GmmParams, seed: u64) -> Result<BiasPoint> {
    let (g, s) = sample_sbm(p, derive_seed(seed, 0))?;
    let x = sample_gmm_features(gmm, &s, derive_seed(seed, 1))?;
    let a = normalized_adjacency(&g);
    let after = spmm(&a, x.view())?;
    let dp = |m: &Array2<f64>| demographic_parity(&argmax_rows(m.view()), &s);
    let dp_before = dp(&x)?;
    let dp_after = dp(&after)?;
    let gmm_c = GmmParams { c: p.c, ..gmm.clone() };
    Ok(BiasPoint {
        dp_before,
        dp_after,
        delta_bias: delta_bias_empirical(x.view(), after.view(), &s)?,
        condition: bias_enhance_condition(&expected_aggregated_gmm(p, &gmm_c)?),
    })
}

/// Runs every `(value, seed)` pair in parallel. Seed `k` is shared across grid
/// values so that trends compare like with like. Rows come back in grid order,
/// then seed order.
pub fn run_bias_sweep(spec: &SweepSpec) -> Result<Vec<BiasSweepRow>> {
    spec.validate()?;
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.seeds as u64).map(move |k| (v, k)))
        .collect();
    jobs.par_iter()
        .map(|&(value, k)| {
            let p = spec.setting(value)?;
            let seed = derive_seed(spec.base_seed, k);
            let r = bias_point(&p, &spec.covariance.gmm(p.c), seed)?;
            Ok(BiasSweepRow {
                param: spec.param,
                value,
                seed,
                dp_before: r.dp_before,
                dp_after: r.dp_after,
                dp_diff: r.dp_after - r.dp_before,
                delta_bias: r.delta_bias,
                condition: r.condition,
            })
        })
        .collect()
}

pub fn bias_rows_to_csv(rows: &[BiasSweepRow]) -> String {
    let mut out = String::from("param,value,seed,dp_before,dp_after,dp_diff,delta_bias,condition\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.param.name(),
            format_float(r.value),
            r.seed,
            format_float(r.dp_before),
            format_float(r.dp_after),
            format_float(r.dp_diff),
            format_float(r.delta_bias),
            r.condition
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSweepSpec {
    pub lambda_s: Vec<f64>,
    pub lambda_f: Vec<f64>,
    pub seeds: usize,
    /// Template for every run; its scheme is forced to FMP and its λ values
    /// are overwritten per grid point.
    pub train: TrainConfig,
}

impl Default for HyperSweepSpec {
    fn default() -> Self {
        Self {
            lambda_s: LAMBDA_S_GRID.to_vec(),
            lambda_f: LAMBDA_F_GRID.to_vec(),
            seeds: 1,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperSweepRow {
    pub lambda_s: f64,
    pub lambda_f: f64,
    pub seed: u64,
    pub acc: f64,
    pub dp: f64,
    pub eo: Option<f64>,
}

/// Trains one FMP model per `(λ_s, λ_f, seed)`. Runs sharing a seed share the
/// split and the initialization.
pub fn run_hyper_sweep(spec: &HyperSweepSpec, data: &DatasetBundle) -> Result<Vec<HyperSweepRow>> {
    if spec.lambda_s.is_empty() || spec.lambda_f.is_empty() || spec.seeds == 0 {
        return Err(Error::InvalidParameter("hyper sweep needs non-empty grids and at least one seed".into()));
    }
    spec.train.validate()?;
    let mut jobs = Vec::new();
    for &ls in &spec.lambda_s {
        for &lf in &spec.lambda_f {
            for k in 0..spec.seeds as u64 {
                jobs.push((ls, lf, derive_seed(spec.train.seed, k)));
            }
        }
    }
    jobs.par_iter()
        .map(|&(lambda_s, lambda_f, seed)| {
            let cfg = TrainConfig {
                seed,
                scheme: Scheme::Fmp,
                fmp: FmpConfig::new(lambda_s, lambda_f, spec.train.fmp.iterations)?,
                ..spec.train
            };
            let split = split_nodes(data.len(), cfg.split, derive_seed(seed, 0));
            let out = train_with_split(&cfg, data, split)?;
            Ok(HyperSweepRow { lambda_s, lambda_f, seed, acc: out.test.accuracy, dp: out.test.dp, eo: out.test.eo })
        })
        .collect()
}

pub fn hyper_rows_to_csv(rows: &[HyperSweepRow]) -> String {
    let mut out = String::from("lambda_s,lambda_f,seed,acc,dp,eo\n");
    for r in rows {
        let eo = r.eo.map(format_float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_float(r.lambda_s),
            format_float(r.lambda_f),
            r.seed,
            format_float(r.acc),
            format_float(r.dp),
            eo
        );
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
