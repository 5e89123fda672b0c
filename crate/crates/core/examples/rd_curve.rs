//! Trace an RDD curve from a 2-D source to a 3-D reproduction space and
//! print it as CSV.

use rdd::cli::write_csv;
use rdd::{build_uniform_grid, source_pmf, trace_curve, SourceFamily, SweepPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = build_uniform_grid(8.0, 6, 2, 2.0)?;
    let y = build_uniform_grid(8.0, 6, 3, 2.0)?;
    let src = source_pmf(&x, SourceFamily::Laplacian { sigma: 2.0 })?;
    let plan = SweepPlan::new(0.0, 0.001, 20, vec![1.0]);
    let out = trace_curve(&src, &y, &plan, None)?;
    write_csv(std::io::stdout().lock(), &out.points)?;
    Ok(())
}
