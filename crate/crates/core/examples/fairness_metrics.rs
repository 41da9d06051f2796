//! Group fairness metrics on a handful of predictions, plus the Gaussian
//! bias surrogate.

use fmp::graph::incident_vector;
use fmp::metrics::{
    bias_surrogate, demographic_parity, dp_gap_vector, equal_opportunity, evaluate_predictions, gaussian_kl,
};
use ndarray::{array, Array2};

fn main() -> fmp::Result<()> {
    let s = incident_vector(&[1, 1, 1, -1, -1, -1])?;
    let y = [1, 0, 1, 1, 0, 1];
    let y_hat = [1, 1, 1, 0, 0, 1];
    println!("ΔDP = {:.4}", demographic_parity(&y_hat, &s)?);
    println!("ΔEO = {:.4}", equal_opportunity(&y_hat, &y, &s)?);

    let logits = array![[0.1, 2.0], [0.3, 1.0], [0.0, 0.5], [1.2, 0.2], [2.0, 0.0], [0.4, 0.6]];
    println!("soft per-class gap Δ_s·SF = {:.4}", dp_gap_vector(logits.view(), &s)?);
    let all = [true; 6];
    println!("record: {}", serde_json::to_string(&evaluate_predictions(logits.view(), &y, &s, &all)?)?);

    let i2 = Array2::<f64>::eye(2);
    let kl = gaussian_kl(array![0.0, 1.0].view(), i2.view(), array![1.0, 0.0].view(), i2.view())?;
    println!("KL(N([0,1], I) ‖ N([1,0], I)) = {kl:.4}");
    println!("bias surrogate at c = 0.5: {:.4} (upper limit ln 2 = {:.4})", bias_surrogate(0.5, kl, kl), 2f64.ln());
    Ok(())
}
