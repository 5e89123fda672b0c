//! Classical rate-distortion baseline against Shannon's Gaussian formula.

use rdd::{ba_solve, build_uniform_grid, cross_distance_matrix, source_pmf, SourceFamily};

fn main() -> rdd::Result<()> {
    let sigma: f64 = 2.0;
    let x = build_uniform_grid(8.0, 50, 1, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma })?;
    let d = cross_distance_matrix(&x, &x)?;
    println!("{:>7} {:>8} {:>8} {:>8}", "lambda", "D", "R", "shannon");
    for lambda in [0.15, 0.25, 0.5, 1.0] {
        let res = ba_solve(&src, &x, &d, lambda, 100)?;
        let dist = res.classical_distortion;
        println!(
            "{lambda:>7} {dist:>8.4} {:>8.4} {:>8.4}",
            res.rate_nats,
            0.5 * (sigma * sigma / dist).ln()
        );
    }
    Ok(())
}
