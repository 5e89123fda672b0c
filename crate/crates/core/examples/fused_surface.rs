//! Mix Gromov-type and squared-error distortion and read off R(D) at fixed
//! distortion levels for several mixing weights.

use rdd::sweep::interpolate_rate;
use rdd::{
    build_uniform_grid, cross_distance_matrix, source_pmf, trace_surface, SourceFamily, SweepPlan,
};

fn main() -> rdd::Result<()> {
    let x = build_uniform_grid(8.0, 50, 1, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma: 2.0 })?;
    let d = cross_distance_matrix(&x, &x)?;
    let thetas = vec![0.0, 0.01, 0.02];
    let plan = SweepPlan::new(0.0, 2.0, 100, thetas.clone());
    let out = trace_surface(&src, &x, &plan, &d)?;
    for (k, theta) in thetas.iter().enumerate() {
        let curve = &out.points[k * 100..(k + 1) * 100];
        let at =
            |target| interpolate_rate(curve, target).map_or("n/a".into(), |r| format!("{r:.4}"));
        println!("theta = {theta:<5} R(1) = {}  R(3) = {}", at(1.0), at(3.0));
    }
    Ok(())
}
