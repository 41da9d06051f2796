//! Group fairness metrics and the Gaussian-fit bias surrogate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SensitiveVector;
use crate::linalg::{cholesky, cholesky_solve, cholesky_solve_matrix, log_det_from_cholesky};
use crate::propagation::softmax_rows;

pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// KL divergence `KL(N(μp, Σp) ‖ N(μq, Σq))`.
pub fn gaussian_kl(
    mu_p: ArrayView1<'_, f64>,
    sigma_p: ArrayView2<'_, f64>,
    mu_q: ArrayView1<'_, f64>,
    sigma_q: ArrayView2<'_, f64>,
) -> Result<f64> {
    let d = mu_p.len();
    if mu_q.len() != d || sigma_p.dim() != (d, d) || sigma_q.dim() != (d, d) {
        return Err(Error::dims("gaussian_kl: mean and covariance dimensions differ"));
    }
    let lq = cholesky(sigma_q).ok_or(Error::SingularCovariance)?;
    let lp = cholesky(sigma_p).ok_or(Error::SingularCovariance)?;
    let diff = &mu_p - &mu_q;
    let maha = diff.dot(&cholesky_solve(&lq, diff.view()));
    let trace = cholesky_solve_matrix(&lq, sigma_p).diag().sum();
    let kl = 0.5 * (log_det_from_cholesky(&lq) - log_det_from_cholesky(&lp) - d as f64 + maha + trace);
    Ok(kl.max(0.0))
}

/// Upper bound on the mutual information between the sensitive attribute and
/// a two-component Gaussian mixture with group-+1 weight `c`.
pub fn bias_surrogate(c: f64, kl_12: f64, kl_21: f64) -> f64 {
    -(1.0 - c) * ((1.0 - c) + c * (-kl_12).exp()).ln() - c * (c + (1.0 - c) * (-kl_21).exp()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedGaussians {
    pub c_hat: f64,
    pub mu1_hat: Array1<f64>,
    pub mu2_hat: Array1<f64>,
    pub sigma1_hat: Array2<f64>,
    pub sigma2_hat: Array2<f64>,
}

impl FittedGaussians {
    pub fn bias(&self) -> Result<f64> {
        let kl_12 = gaussian_kl(
            self.mu1_hat.view(),
            self.sigma1_hat.view(),
            self.mu2_hat.view(),
            self.sigma2_hat.view(),
        )?;
        let kl_21 = gaussian_kl(
            self.mu2_hat.view(),
            self.sigma2_hat.view(),
            self.mu1_hat.view(),
            self.sigma1_hat.view(),
        )?;
        Ok(bias_surrogate(self.c_hat, kl_12, kl_21))
    }
}

/// Per-group sample mean and unbiased covariance plus a `1e-6·I` ridge.
/// Index 1 is group `-1`, index 2 is group `+1`.
pub fn fit_group_gaussians(x: ArrayView2<'_, f64>, s: &SensitiveVector) -> Result<FittedGaussians> {
    if x.nrows() != s.len() {
        return Err(Error::dims(format!("{} feature rows for {} nodes", x.nrows(), s.len())));
    }
    let d = x.ncols();
    let fit = |group: i8| -> Result<(Array1<f64>, Array2<f64>)> {
        let rows: Vec<usize> = (0..s.len()).filter(|&i| s.groups()[i] == group).collect();
        if rows.len() < d + 1 {
            return Err(Error::GroupTooSmall { group, size: rows.len(), required: d + 1 });
        }
        let sub = x.select(Axis(0), &rows);
        let mean = sub.mean_axis(Axis(0)).expect("non-empty group");
        let centered = &sub - &mean;
        let mut cov = centered.t().dot(&centered) / (rows.len() - 1) as f64;
        cov.diag_mut().mapv_inplace(|v| v + COVARIANCE_RIDGE);
        Ok((mean, cov))
    };
    let (mu1_hat, sigma1_hat) = fit(-1)?;
    let (mu2_hat, sigma2_hat) = fit(1)?;
    Ok(FittedGaussians {
        c_hat: s.positive_count() as f64 / s.len() as f64,
        mu1_hat,
        mu2_hat,
        sigma1_hat,
        sigma2_hat,
    })
}

/// `Bias(s, X_after) − Bias(s, X_before)` via fitted Gaussians.
pub fn delta_bias_empirical(
    x_before: ArrayView2<'_, f64>,
    x_after: ArrayView2<'_, f64>,
    s: &SensitiveVector,
) -> Result<f64> {
    if x_before.dim() != x_after.dim() {
        return Err(Error::dims("delta_bias: feature matrices differ in shape"));
    }
    let before = fit_group_gaussians(x_before, s)?.bias()?;
    let after = fit_group_gaussians(x_after, s)?.bias()?;
    Ok(after - before)
}

fn check_len(what: &str, len: usize, s: &SensitiveVector) -> Result<()> {
    if len != s.len() {
        return Err(Error::dims(format!("{what} has length {len}, expected {}", s.len())));
    }
    Ok(())
}

/// `|P(ŷ=1 | s=-1) − P(ŷ=1 | s=+1)|`.
pub fn demographic_parity(y_hat: &[usize], s: &SensitiveVector) -> Result<f64> {
    check_len("predictions", y_hat.len(), s)?;
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&p, &g) in y_hat.iter().zip(s.groups()) {
        let k = usize::from(g > 0);
        tot[k] += 1;
        pos[k] += usize::from(p == 1);
    }
    if tot[0] == 0 || tot[1] == 0 {
        return Err(Error::SingleGroup);
    }
    Ok((pos[0] as f64 / tot[0] as f64 - pos[1] as f64 / tot[1] as f64).abs())
}

/// `|P(ŷ=1 | s=-1, y=1) − P(ŷ=1 | s=+1, y=1)|`.
pub fn equal_opportunity(y_hat: &[usize], y: &[usize], s: &SensitiveVector) -> Result<f64> {
    check_len("predictions", y_hat.len(), s)?;
    check_len("labels", y.len(), s)?;
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for ((&p, &t), &g) in y_hat.iter().zip(y).zip(s.groups()) {
        if t != 1 {
            continue;
        }
        let k = usize::from(g > 0);
        tot[k] += 1;
        pos[k] += usize::from(p == 1);
    }
    for (k, group) in [(0, -1i8), (1, 1)] {
        if tot[k] == 0 {
            return Err(Error::NoPositivesInGroup(group));
        }
    }
    Ok((pos[0] as f64 / tot[0] as f64 - pos[1] as f64 / tot[1] as f64).abs())
}

/// `Δ_s · SF(f)`: per-class difference of mean predicted probability between
/// group +1 and group -1.
pub fn dp_gap_vector(f: ArrayView2<'_, f64>, s: &SensitiveVector) -> Result<Array1<f64>> {
    check_len("feature rows", f.nrows(), s)?;
    Ok(s.delta().dot(&softmax_rows(f)))
}

/// Row-wise argmax; ties go to the lower index.
pub fn argmax_rows(f: ArrayView2<'_, f64>) -> Vec<usize> {
    f.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "acc")]
    pub accuracy: f64,
    pub dp: f64,
    /// `None` when a group has no ground-truth positives under the mask.
    pub eo: Option<f64>,
}

/// Accuracy, ΔDP and ΔEO of `logits` restricted to the rows where `mask` is set.
pub fn evaluate_predictions(
    logits: ArrayView2<'_, f64>,
    y: &[usize],
    s: &SensitiveVector,
    mask: &[bool],
) -> Result<MetricsRecord> {
    check_len("logits", logits.nrows(), s)?;
    check_len("labels", y.len(), s)?;
    check_len("mask", mask.len(), s)?;
    let pred = argmax_rows(logits);
    let idx: Vec<usize> = (0..s.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::InvalidParameter("evaluation mask selects no nodes".into()));
    }
    let groups: Vec<i8> = idx.iter().map(|&i| s.groups()[i]).collect();
    let sub = crate::graph::incident_vector(&groups)?;
    let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
    let t: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
    let correct = p.iter().zip(&t).filter(|(a, b)| a == b).count();
    Ok(MetricsRecord {
        accuracy: correct as f64 / idx.len() as f64,
        dp: demographic_parity(&p, &sub)?,
        eo: match equal_opportunity(&p, &t, &sub) {
            Ok(v) => Some(v),
            Err(Error::NoPositivesInGroup(_)) => None,
            Err(e) => return Err(e),
        },
    })
}
