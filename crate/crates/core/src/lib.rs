//! Fair message passing for graph neural networks.
//!
//! The crate treats message passing as graph signal denoising and adds a
//! demographic-parity penalty solved by a primal-dual iteration. It also
//! ships a random-graph generator for studying how aggregation amplifies
//! sensitive-attribute bias, a small reverse-mode autodiff tape, and a
//! training pipeline with fairness metrics.
//!
//! # Examples
//!
//! | example | shows |
//! |---|---|
//! | `normalize_and_propagate` | normalized operators and every propagation scheme on a toy graph |
//! | `sbm_bias_amplification` | sensitive SBM sampling, parity before and after aggregation, closed-form moments |
//! | `fmp_denoising` | per-iteration energies and dual norm of the primal-dual solver |
//! | `gradient_complexity` | timing of the closed-form fairness gradient against the Jacobian oracle |
//! | `fairness_metrics` | ΔDP, ΔEO, soft parity gaps and the Gaussian bias surrogate |
//! | `autodiff_pipeline` | a hand-built tape with a finite-difference check |
//! | `train_fair_classifier` | MLP, GCN, APPNP and FMP training on a biased synthetic task |
//! | `bias_sweep` | a parameter sweep written as CSV |
//!
//! ```bash
//! cargo run --release --example sbm_bias_amplification -- 0.9
//! ```

pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod propagation;
pub mod rng;
pub mod selfcheck;
pub mod sweep;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
