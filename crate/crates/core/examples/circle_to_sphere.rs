//! Compress a source on a circle into points on a sphere; only the pairwise
//! distance structure is compared.

use rdd::sweep::lower_envelope;
use rdd::{build_circle, build_sphere, source_pmf, trace_curve, SourceFamily, SweepPlan};

fn main() -> rdd::Result<()> {
    let circle = build_circle(20, 4.0, 2.0)?;
    let sphere = build_sphere(10, 4.0, 2.0)?;
    let src = source_pmf(&circle, SourceFamily::Gaussian { sigma: 2.0 })?;
    let plan = SweepPlan::new(0.0, 0.05, 40, vec![1.0]);
    let out = trace_curve(&src, &sphere, &plan, None)?;
    for p in lower_envelope(&out.points) {
        println!("D = {:>8.4}  R = {:.4} bits", p.distortion, p.rate_bits);
    }
    Ok(())
}
