//! Sweeps one graph parameter and writes the per-seed parity change to stdout
//! as CSV.
//!
//! ```bash
//! cargo run --release --example bias_sweep -- rho_d > sweep.csv
//! ```

use fmp::sweep::{bias_rows_to_csv, run_bias_sweep, spearman, SweepParam, SweepSpec};

fn main() -> fmp::Result<()> {
    let param: SweepParam = std::env::args().nth(1).as_deref().unwrap_or("eps_sens").parse()?;
    let mut spec = SweepSpec::new(param);
    spec.seeds = 3;
    let rows = run_bias_sweep(&spec)?;
    print!("{}", bias_rows_to_csv(&rows));

    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.dp_diff).collect();
    eprintln!("spearman({}, dp_diff) = {:.3}", param.name(), spearman(&xs, &ys));
    Ok(())
}
