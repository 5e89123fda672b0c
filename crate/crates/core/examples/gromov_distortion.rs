//! Evaluate the Gromov-type distortion of a coupling between spaces of
//! different dimension, with the quadruple-sum oracle as a cross-check.

use rdd::{
    build_uniform_grid, gromov_distortion_bruteforce, gromov_distortion_decomposed, source_pmf,
    Coupling, SourceFamily,
};

fn main() -> rdd::Result<()> {
    let x = build_uniform_grid(4.0, 4, 2, 2.0)?;
    let y = build_uniform_grid(4.0, 10, 1, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma: 1.5 })?;

    let product = Coupling::uniform(x.len(), y.len());
    let parts = gromov_distortion_decomposed(x.dist_q(), y.dist_q(), &product, src.pmf())?;
    let brute = gromov_distortion_bruteforce(x.dist_q(), y.dist_q(), &product, src.pmf())?;
    println!(
        "uniform kernel: c1 = {:.6}, c2 = {:.6}, cross = {:.6}",
        parts.c1, parts.c2, parts.cross
    );
    println!(
        "  decomposed {:.12}  quadruple sum {:.12}",
        parts.total, brute
    );

    // send each grid row to one output point
    let mut w = ndarray::Array2::zeros((x.len(), y.len()));
    for i in 0..x.len() {
        w[[i, (i / 4) * 3]] = 1.0;
    }
    let row_map = Coupling::from_conditional(w, src.pmf().view())?;
    let d = gromov_distortion_decomposed(x.dist_q(), y.dist_q(), &row_map, src.pmf())?.total;
    println!("row-collapsing kernel: {d:.6}");
    Ok(())
}
