//! Builds a small two-community graph, normalizes it, and compares the
//! propagation schemes on the same input features.
//!
//! ```bash
//! cargo run --release --example normalize_and_propagate
//! ```

use fmp::graph::{incident_vector, laplacian, normalized_adjacency, Graph};
use fmp::propagation::{fairness_energy, propagate, smoothness_energy, FmpConfig, Scheme};
use ndarray::array;

fn main() -> fmp::Result<()> {
    // Two triangles joined by one bridge edge.
    let g = Graph::from_edges(6, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)])?;
    let a = normalized_adjacency(&g);
    let l = laplacian(&a);
    println!("nodes {}, edges {}, density {:.3}", g.node_count(), g.edge_count(), g.density());
    println!("Ã[2,3] = {:.4}, L̃[2,2] = {:.4}", a.get(2, 3), l.get(2, 2));

    let s = incident_vector(&[1, 1, 1, -1, -1, -1])?;
    let x = array![[2.0, 0.0], [1.5, 0.5], [1.0, 0.0], [0.0, 1.0], [0.5, 1.5], [0.0, 2.0]];
    let cfg = FmpConfig::new(1.0, 0.5, 8)?;

    println!("{:>6} {:>10} {:>10} {:>10}", "scheme", "h_s", "h_f", "F[0]");
    for scheme in Scheme::ALL {
        let (f, _) = propagate(scheme, x.view(), &a, &s, &cfg)?;
        let h_s = smoothness_energy(f.view(), &l, x.view(), cfg.lambda_s)?;
        let h_f = fairness_energy(f.view(), &s, cfg.lambda_f)?;
        println!("{:>6} {h_s:>10.4} {h_f:>10.4} {:>10}", scheme.name(), format!("{:.3}", f.row(0)));
    }
    Ok(())
}
