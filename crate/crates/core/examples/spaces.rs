//! Build the supported metric spaces and discretized sources.

use rdd::{build_circle, build_sphere, build_uniform_grid, source_pmf, SourceFamily};

fn main() -> rdd::Result<()> {
    let grid = build_uniform_grid(8.0, 9, 1, 2.0)?;
    println!(
        "1-D grid: {} points, d(x0, x8) = {}",
        grid.len(),
        grid.dist_q()[[0, 8]]
    );

    let plane = build_uniform_grid(8.0, 5, 2, 2.0)?;
    println!(
        "2-D grid: {} points in dimension {}",
        plane.len(),
        plane.dim()
    );

    let circle = build_circle(20, 4.0, 2.0)?;
    let sphere = build_sphere(20, 4.0, 2.0)?;
    println!(
        "circle: {} points, sphere: {} points",
        circle.len(),
        sphere.len()
    );

    for family in [
        SourceFamily::Gaussian { sigma: 2.0 },
        SourceFamily::Laplacian { sigma: 2.0 },
        SourceFamily::Uniform,
    ] {
        let src = source_pmf(&grid, family)?;
        let pmf: Vec<String> = src.pmf().iter().map(|p| format!("{p:.4}")).collect();
        println!("{:>9}: [{}]", family.name(), pmf.join(", "));
    }
    Ok(())
}
