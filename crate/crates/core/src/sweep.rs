//! Rate-distortion curves and surfaces over multiplier / mixing-weight grids.
//!
//! Every grid point is solved independently from the uniform kernel. Points
//! may run concurrently; results come back in grid order either way.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::Coupling;
use crate::solver::{solve_problem, AmdProblem, SolverConfig, SolverResult};
use crate::spaces::{DiscreteSource, MetricSpace};
use crate::{Error, Result};

/// One solved grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub theta: f64,
    /// Constraint-side value: Gromov at `theta = 1`, classical at `theta = 0`,
    /// fused otherwise.
    pub distortion: f64,
    pub rate_nats: f64,
    pub rate_bits: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Set when the point failed numerically; value fields are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CurvePoint {
    fn from_result(lambda: f64, theta: f64, res: &SolverResult) -> Self {
        Self {
            lambda,
            theta,
            distortion: res.fused_distortion,
            rate_nats: res.rate_nats,
            rate_bits: res.rate_nats / std::f64::consts::LN_2,
            iterations_run: res.iterations_run,
            converged: res.converged,
            error: None,
        }
    }

    fn failed(lambda: f64, theta: f64, err: &Error) -> Self {
        Self {
            lambda,
            theta,
            distortion: f64::NAN,
            rate_nats: f64::NAN,
            rate_bits: f64::NAN,
            iterations_run: 0,
            converged: false,
            error: Some(err.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Grid of multipliers and mixing weights plus the per-point solver template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub lambda_count: usize,
    pub theta_values: Vec<f64>,
    /// `lambda` and `theta` are overwritten per point.
    pub solver: SolverConfig,
    /// Worker threads; `None` uses the global rayon pool, `Some(1)` runs
    /// serially.
    pub jobs: Option<usize>,
    /// Keep each point's coupling in the output.
    pub retain_couplings: bool,
}

impl SweepPlan {
    pub fn new(
        lambda_start: f64,
        lambda_end: f64,
        lambda_count: usize,
        theta_values: Vec<f64>,
    ) -> Self {
        Self {
            lambda_start,
            lambda_end,
            lambda_count,
            theta_values,
            solver: SolverConfig::default(),
            jobs: None,
            retain_couplings: false,
        }
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs);
        self
    }

    pub fn retaining_couplings(mut self) -> Self {
        self.retain_couplings = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        lambda_grid(self)?;
        if self.theta_values.is_empty() {
            return Err(Error::invalid("theta_values", "must be nonempty"));
        }
        if let Some(t) = self.theta_values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::invalid(
                "theta_values",
                format!("{t} is outside [0, 1]"),
            ));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs", "must be >= 1"));
        }
        SolverConfig {
            lambda: self.lambda_start,
            theta: self.theta_values[0],
            ..self.solver
        }
        .validate()
    }
}

/// Arithmetic multiplier grid `start + k (end - start) / (count - 1)`.
pub fn lambda_grid(plan: &SweepPlan) -> Result<Vec<f64>> {
    let (start, end, count) = (plan.lambda_start, plan.lambda_end, plan.lambda_count);
    if count == 0 {
        return Err(Error::invalid("lambda_count", "must be >= 1"));
    }
    if !(start >= 0.0 && start.is_finite()) {
        return Err(Error::invalid(
            "lambda_start",
            format!("must be finite and >= 0, got {start}"),
        ));
    }
    if !(end > start && end.is_finite()) {
        return Err(Error::invalid(
            "lambda_end",
            format!("must be finite and exceed lambda_start, got {end}"),
        ));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let span = end - start;
    let last = (count - 1) as f64;
    Ok((0..count).map(|k| start + k as f64 * span / last).collect())
}

/// Points in grid order, with optional couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<CurvePoint>,
    /// One entry per point when couplings were retained (`None` for failed
    /// points); empty otherwise.
    pub couplings: Vec<Option<Coupling>>,
}

impl SweepOutput {
    pub fn failed_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_failed()).count()
    }
}

/// Rate-distortion curve for a single `theta` over the plan's multiplier grid.
pub fn trace_curve(
    source: &DiscreteSource,
    y_space: &MetricSpace,
    plan: &SweepPlan,
    d_cross: Option<&Array2<f64>>,
) -> Result<SweepOutput> {
    if plan.theta_values.len() != 1 {
        return Err(Error::invalid(
            "theta_values",
            format!(
                "a curve needs exactly one theta, got {}",
                plan.theta_values.len()
            ),
        ));
    }
    run_grid(source, y_space, plan, d_cross)
}

/// Rate-distortion surface over `theta_values x lambda grid`, ordered by
/// `(theta, lambda)`.
pub fn trace_surface(
    source: &DiscreteSource,
    y_space: &MetricSpace,
    plan: &SweepPlan,
    d_cross: &Array2<f64>,
) -> Result<SweepOutput> {
    run_grid(source, y_space, plan, Some(d_cross))
}

fn run_grid(
    source: &DiscreteSource,
    y_space: &MetricSpace,
    plan: &SweepPlan,
    d_cross: Option<&Array2<f64>>,
) -> Result<SweepOutput> {
    plan.validate()?;
    let needs_cross = plan.theta_values.iter().any(|&t| t < 1.0);
    if needs_cross && d_cross.is_none() {
        let theta = plan
            .theta_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        return Err(Error::MissingCrossDistance { theta });
    }
    let problem = AmdProblem::from_spaces(source, y_space, d_cross.cloned())?;
    let lambdas = lambda_grid(plan)?;
    let grid: Vec<(f64, f64)> = plan
        .theta_values
        .iter()
        .flat_map(|&t| lambdas.iter().map(move |&l| (l, t)))
        .collect();

    let solve_point = |&(lambda, theta): &(f64, f64)| {
        let cfg = SolverConfig {
            lambda,
            theta,
            ..plan.solver
        };
        match solve_problem(&problem, &cfg) {
            Ok(res) => {
                let point = CurvePoint::from_result(lambda, theta, &res);
                (point, plan.retain_couplings.then_some(res.coupling))
            }
            Err(err) => {
                log::warn!("sweep point lambda={lambda} theta={theta} failed: {err}");
                (CurvePoint::failed(lambda, theta, &err), None)
            }
        }
    };

    let solved: Vec<(CurvePoint, Option<Coupling>)> = match plan.jobs {
        Some(1) => grid.iter().map(solve_point).collect(),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid("jobs", e.to_string()))?
            .install(|| grid.par_iter().map(solve_point).collect()),
        None => grid.par_iter().map(solve_point).collect(),
    };

    let (points, couplings): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok(SweepOutput {
        points,
        couplings: if plan.retain_couplings {
            couplings
        } else {
            Vec::new()
        },
    })
}

/// Lower monotone envelope of a curve: points sorted by distortion, keeping
/// only those whose rate is strictly below every point of smaller distortion.
/// Failed points are dropped. Intended for plotting.
pub fn lower_envelope(points: &[CurvePoint]) -> Vec<CurvePoint> {
    let mut sorted: Vec<&CurvePoint> = points.iter().filter(|p| !p.is_failed()).collect();
    sorted.sort_by(|a, b| {
        a.distortion
            .total_cmp(&b.distortion)
            .then(a.rate_nats.total_cmp(&b.rate_nats))
    });
    let mut out: Vec<CurvePoint> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|last| p.rate_nats < last.rate_nats) {
            out.push(p.clone());
        }
    }
    out
}

/// Linear interpolation of rate at distortion `d` along a curve. Points are
/// sorted by distortion; returns `None` if `d` lies outside the traced range.
pub fn interpolate_rate(points: &[CurvePoint], d: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.is_failed())
        .map(|p| (p.distortion, p.rate_nats))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((d0, r0), (d1, r1)) = (w[0], w[1]);
        if d0 <= d && d <= d1 {
            if d1 == d0 {
                Some(r0.min(r1))
            } else {
                Some(r0 + (r1 - r0) * (d - d0) / (d1 - d0))
            }
        } else {
            None
        }
    })
}
