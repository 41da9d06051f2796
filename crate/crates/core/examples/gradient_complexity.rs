//! Times the closed-form fairness gradient against the dense softmax-Jacobian
//! oracle while doubling the node count.
//!
//! ```bash
//! cargo run --release --example gradient_complexity
//! ```

use fmp::propagation::fmp_gradient;
use fmp::selfcheck::measure_scaling;

fn main() -> fmp::Result<()> {
    let timings = measure_scaling(fmp_gradient, &[500, 1000, 2000, 4000], 0)?;
    println!("{:>6} {:>12} {:>14} {:>8} {:>8}", "n", "fast (µs)", "oracle (µs)", "×fast", "×oracle");
    let mut prev: Option<(f64, f64)> = None;
    for t in &timings {
        let (rf, ro) = prev.map_or((String::new(), String::new()), |(f, o)| {
            (format!("{:.2}", t.fast_us / f), format!("{:.2}", t.oracle_us / o))
        });
        println!("{:>6} {:>12.1} {:>14.1} {rf:>8} {ro:>8}", t.n, t.fast_us, t.oracle_us);
        prev = Some((t.fast_us, t.oracle_us));
    }
    Ok(())
}
