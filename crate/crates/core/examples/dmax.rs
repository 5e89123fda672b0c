//! Zero-rate threshold: the best distortion achievable by a product coupling.

use rdd::{build_uniform_grid, compute_dmax, source_pmf, SourceFamily};

fn main() -> rdd::Result<()> {
    let x = build_uniform_grid(8.0, 20, 1, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma: 2.0 })?;
    for n in [1, 2, 3, 10] {
        let y = build_uniform_grid(8.0, n, 1, 2.0)?;
        let est = compute_dmax(src.space().dist_q(), y.dist_q(), src.pmf(), 16)?;
        let support = est.r.iter().filter(|&&r| r > 1e-9).count();
        println!(
            "N = {n:>2}: D_max = {:>10.4} (vertex value {:.4}, {support} outputs used, gap {:.1e})",
            est.value, est.c1, est.stationarity_gap
        );
    }
    Ok(())
}
