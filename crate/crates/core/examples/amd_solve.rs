//! Solve the RDD Lagrangian at a few fixed multipliers.

use rdd::{build_uniform_grid, solve, source_pmf, SolverConfig, SourceFamily};

fn main() -> rdd::Result<()> {
    let x = build_uniform_grid(8.0, 50, 1, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma: 2.0 })?;
    for lambda in [0.0, 0.005, 0.02, 0.05] {
        let res = solve(&src, &x, &SolverConfig::default().with_lambda(lambda), None)?;
        println!(
            "lambda = {lambda:<6} R = {:.4} nats  D = {:>9.3}  ({} iterations, last change {:.1e})",
            res.rate_nats, res.gromov_distortion, res.iterations_run, res.last_change
        );
    }
    Ok(())
}
