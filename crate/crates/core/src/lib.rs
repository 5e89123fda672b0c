//! Rate distortion-in-distortion (RDD) solver.
//!
//! The RDD function replaces the expected distortion constraint of the
//! classical rate-distortion problem with a Gromov-type distortion: the
//! expected squared mismatch between pairwise distances in the source space
//! and pairwise distances in the reproduction space, taken under two
//! independent copies of the joint law \(P_X P_{Y|X}\):
//!
//! \[
//! R_G(D) = \min_{P_{Y|X}} I(X;Y) \quad \text{s.t.} \quad
//! \mathbb{E}\,|d_X^q(X,X') - d_Y^q(Y,Y')|^2 \le D .
//! \]
//!
//! Because only the metric *structure* is compared, source and reproduction
//! may live in spaces of different dimension.
//!
//! The crate is organised as:
//!
//! - [`spaces`]: discrete metric-measure spaces (grids, circles, spheres) and
//!   source probability mass functions.
//! - [`distortion`]: Gromov-type distortion (quartic oracle and the cubic
//!   decomposition), classical and fused distortion, and the zero-rate
//!   threshold `D_max`.
//! - [`solver`]: the alternating mirror descent (AMD) iteration for a fixed
//!   Lagrange multiplier, its fused generalisation, and a Blahut-Arimoto
//!   baseline.
//! - [`sweep`]: rate-distortion curves over a multiplier grid and surfaces
//!   over (multiplier, mixing weight) grids.
//! - [`cli`]: configuration documents, CSV/JSON output and the `rdd`
//!   subcommands.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distortion;
mod error;
pub mod numeric;
pub mod solver;
pub mod spaces;
pub mod sweep;

pub use distortion::{
    compute_dmax, expected_classical_distortion, fused_distortion, gromov_distortion_bruteforce,
    gromov_distortion_decomposed, Coupling, DistortionBreakdown, DmaxEstimate, DmaxOptions,
};
pub use error::{Error, Result};
pub use solver::{
    amd_step, ba_solve, ba_solve_problem, mutual_information, solve, AmdProblem, SolverConfig,
    SolverResult,
};
pub use spaces::{
    build_circle, build_sphere, build_uniform_grid, cross_distance_matrix, source_pmf,
    DiscreteSource, MetricSpace, SourceFamily,
};
pub use sweep::{lambda_grid, trace_curve, trace_surface, CurvePoint, SweepOutput, SweepPlan};
