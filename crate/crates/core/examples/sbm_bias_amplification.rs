//! Samples a sensitive-attribute SBM with Gaussian features, applies one
//! normalized aggregation, and compares the measured bias change with the
//! closed-form prediction.
//!
//! ```bash
//! cargo run --release --example sbm_bias_amplification -- 0.95
//! ```

use fmp::graph::{normalized_adjacency, sensitive_homophily, spmm};
use fmp::metrics::{argmax_rows, delta_bias_empirical, demographic_parity};
use fmp::synth::{
    bias_enhance_condition, bias_enhance_score, expected_aggregated_gmm, sample_gmm_features, sample_sbm, GmmParams,
    SbmParams,
};

fn main() -> fmp::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.95);
    let p = SbmParams::new(10_000, 1e-3, eps, 0.5)?;
    let gmm = GmmParams::isotropic_2d(p.c);

    let (g, s) = sample_sbm(&p, 7)?;
    let x = sample_gmm_features(&gmm, &s, 8)?;
    let agg = spmm(&normalized_adjacency(&g), x.view())?;
    println!(
        "graph: {} edges, density {:.2e}, sensitive homophily {:.4}",
        g.edge_count(),
        g.density(),
        sensitive_homophily(&g, &s)?
    );

    let dp_before = demographic_parity(&argmax_rows(x.view()), &s)?;
    let dp_after = demographic_parity(&argmax_rows(agg.view()), &s)?;
    println!("ΔDP of argmax decision: {dp_before:.4} -> {dp_after:.4}");
    println!("ΔBias (fitted Gaussians): {:.4}", delta_bias_empirical(x.view(), agg.view(), &s)?);

    let closed = expected_aggregated_gmm(&p, &gmm)?;
    println!(
        "closed form: ν1 = {:.4}, ν2 = {:.4}, ζ1 = {:.2}, ζ2 = {:.2}",
        closed.nu1, closed.nu2, closed.zeta1, closed.zeta2
    );
    println!(
        "enhancement score (ν1−ν2)²·min ζ = {:.3} -> condition {}",
        bias_enhance_score(&closed),
        bias_enhance_condition(&closed)
    );
    Ok(())
}
