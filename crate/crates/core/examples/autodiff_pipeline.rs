//! Builds the MLP → FMP pipeline on a tape by hand, backpropagates a
//! cross-entropy loss, and checks the input gradient with central differences.

use fmp::autodiff::{finite_diff_check, Tape};
use fmp::graph::normalized_adjacency;
use fmp::propagation::{FmpConfig, Scheme};
use fmp::selfcheck::{random_graph, random_matrix};
use fmp::training::propagate_on_tape;

fn main() -> fmp::Result<()> {
    let n = 16;
    let (g, s) = random_graph(n, 0.25, 3);
    let a = normalized_adjacency(&g);
    let x0 = random_matrix(n, 4, 1.0, 4);
    let w = random_matrix(4, 2, 0.5, 5);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
    let cfg = FmpConfig::new(1.0, 2.0, 4)?;

    let loss_and_grad = |x: &ndarray::Array2<f64>| {
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let wv = t.constant(w.clone());
        let h = t.matmul(xv, wv)?;
        let f = propagate_on_tape(&mut t, h, &a, &s, Scheme::Fmp, &cfg, false)?;
        let loss = t.cross_entropy(f, &labels, &mask)?;
        let value = t.value(loss)[[0, 0]];
        let grads = t.backward(loss)?;
        Ok((value, grads.wrt(xv)))
    };

    let (loss, grad) = loss_and_grad(&x0)?;
    println!("loss {loss:.6}, ‖∂loss/∂X‖∞ = {:.3e}", grad.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let err = finite_diff_check(loss_and_grad, &x0, 1e-5)?;
    println!("max relative error against central differences: {err:.2e}");
    Ok(())
}
