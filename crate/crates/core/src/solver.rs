//! Alternating mirror descent (AMD) for the RDD function at a fixed
//! Lagrange multiplier, plus a Blahut-Arimoto baseline.
//!
//! Each AMD iteration linearizes the quadratic Gromov term of the Lagrangian
//! around the current kernel `W` and solves the resulting entropic problem in
//! closed form:
//!
//! ```text
//! L_ij    = ln r_j + 4 lt [E W dy]_ij - 2 lt [dy^2 (W^T p)]_j - l (1 - t) d_ij
//! w'_i.   = softmax(L_i.)
//! r'_j    = sum_i w'_ij p_i
//! ```
//!
//! with `l` the multiplier, `t` the Gromov weight (`t = 1` is pure RDD) and
//! `E_ij = dx_ij p_j`. At `t = 0` the Gromov terms vanish and the step is the
//! Blahut-Arimoto update for the classical RD function.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::distortion::{
    classical_unchecked, column_marginal, constant_term, decompose_with, weighted_source_matrix,
    Coupling,
};
use crate::numeric::{softmax_in_place, CompensatedSum};
use crate::spaces::{DiscreteSource, MetricSpace};
use crate::{Error, Result};

/// Threshold on the final max-abs kernel change used for the `converged`
/// diagnostic when no early-stop tolerance is set.
pub const CONVERGED_DIAGNOSTIC_TOL: f64 = 1e-6;

const SUPPORT_FLOOR: f64 = 1e-300;

/// Parameters of a single fixed-multiplier solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Lagrange multiplier on the distortion constraint.
    pub lambda: f64,
    /// Weight of the Gromov-type distortion; `1 - theta` weights the
    /// classical distortion.
    pub theta: f64,
    pub max_iter: usize,
    /// Early stop once `max |w(k+1) - w(k)|` falls below this. Zero disables.
    pub w_tol: f64,
    pub seed: u64,
    /// Floor `r_j` at 1e-300 inside the logarithm instead of letting emptied
    /// columns stay at zero.
    pub support_floor: bool,
    /// Record `rate + lambda * distortion` after every iteration.
    pub trace_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            theta: 1.0,
            max_iter: 100,
            w_tol: 0.0,
            seed: 0,
            support_floor: false,
            trace_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(
                "lambda",
                format!("must be finite and >= 0, got {}", self.lambda),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be >= 1"));
        }
        if !(self.w_tol >= 0.0) {
            return Err(Error::invalid(
                "w_tol",
                format!("must be >= 0, got {}", self.w_tol),
            ));
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub coupling: Coupling,
    /// Mutual information in nats.
    pub rate_nats: f64,
    pub gromov_distortion: f64,
    /// Zero when `theta == 1`.
    pub classical_distortion: f64,
    pub fused_distortion: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Final `max |w(k+1) - w(k)|`.
    pub last_change: f64,
    pub objective_trace: Option<Vec<f64>>,
}

/// Precomputed, immutable data for AMD iterations on one (source,
/// reproduction) pair.
#[derive(Debug, Clone)]
pub struct AmdProblem {
    dx: Array2<f64>,
    dy: Array2<f64>,
    dy_sq: Array2<f64>,
    /// `E_ij = dx_ij p_j`
    e: Array2<f64>,
    /// `C_ij = dx_ij p_i p_j`
    c: Array2<f64>,
    c1: f64,
    p: Array1<f64>,
    d_cross: Option<Array2<f64>>,
}

impl AmdProblem {
    pub fn new(
        dx: Array2<f64>,
        dy: Array2<f64>,
        p: Array1<f64>,
        d_cross: Option<Array2<f64>>,
    ) -> Result<Self> {
        let m = p.len();
        let n = dy.nrows();
        if dx.dim() != (m, m) {
            return Err(Error::ShapeMismatch {
                what: "dx",
                expected: (m, m),
                got: dx.dim(),
            });
        }
        if dy.dim() != (n, n) || n == 0 {
            return Err(Error::ShapeMismatch {
                what: "dy",
                expected: (n, n),
                got: dy.dim(),
            });
        }
        if let Some(d) = &d_cross {
            if d.dim() != (m, n) {
                return Err(Error::ShapeMismatch {
                    what: "d_cross",
                    expected: (m, n),
                    got: d.dim(),
                });
            }
        }
        let mut e = dx.clone();
        Zip::indexed(&mut e).for_each(|(_, j), v| *v *= p[j]);
        let c = weighted_source_matrix(dx.view(), p.view());
        let c1 = constant_term(dx.view(), p.view());
        let dy_sq = dy.mapv(|v| v * v);
        Ok(Self {
            dx,
            dy,
            dy_sq,
            e,
            c,
            c1,
            p,
            d_cross,
        })
    }

    /// Problem for a source against a reproduction space. `d_cross` is only
    /// needed for fused (`theta < 1`) solves.
    pub fn from_spaces(
        source: &DiscreteSource,
        y_space: &MetricSpace,
        d_cross: Option<Array2<f64>>,
    ) -> Result<Self> {
        Self::new(
            source.space().dist_q().clone(),
            y_space.dist_q().clone(),
            source.pmf().clone(),
            d_cross,
        )
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn n(&self) -> usize {
        self.dy.nrows()
    }

    pub fn p(&self) -> &Array1<f64> {
        &self.p
    }

    pub fn dx(&self) -> &Array2<f64> {
        &self.dx
    }

    pub fn dy(&self) -> &Array2<f64> {
        &self.dy
    }

    pub fn d_cross(&self) -> Option<&Array2<f64>> {
        self.d_cross.as_ref()
    }

    /// Gromov-type distortion of `w` through the cached decomposition.
    pub fn gromov(&self, w: ArrayView2<'_, f64>) -> f64 {
        decompose_with(self.c1, self.c.view(), self.dy.view(), w, self.p.view()).total
    }

    pub fn classical(&self, w: ArrayView2<'_, f64>) -> Option<f64> {
        self.d_cross
            .as_ref()
            .map(|d| classical_unchecked(d.view(), w, self.p.view()))
    }

    fn check_state(&self, state: &Coupling) -> Result<()> {
        let want = (self.m(), self.n());
        if state.shape() != want {
            return Err(Error::ShapeMismatch {
                what: "coupling",
                expected: want,
                got: state.shape(),
            });
        }
        Ok(())
    }
}

/// Per-row logits of the AMD update, before the softmax.
pub fn amd_logits(
    problem: &AmdProblem,
    state: &Coupling,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    problem.check_state(state)?;
    let (lambda, theta) = (config.lambda, config.theta);
    if theta < 1.0 && problem.d_cross.is_none() {
        return Err(Error::MissingCrossDistance { theta });
    }
    let w = state.w();
    let ln_r = state.r().mapv(|r| {
        if config.support_floor {
            r.max(SUPPORT_FLOOR).ln()
        } else {
            r.ln()
        }
    });
    let mut logits = Array2::from_shape_fn(w.dim(), |(_, j)| ln_r[j]);

    let gromov_weight = lambda * theta;
    if gromov_weight != 0.0 {
        let marginal = column_marginal(w.view(), problem.p.view());
        let ewd = problem.e.dot(w).dot(&problem.dy);
        let h = problem.dy_sq.dot(&marginal);
        Zip::indexed(&mut logits)
            .and(&ewd)
            .for_each(|(_, j), l, &f| *l += 4.0 * gromov_weight * f - 2.0 * gromov_weight * h[j]);
    }
    let classical_weight = lambda * (1.0 - theta);
    if classical_weight != 0.0 {
        let d = problem.d_cross.as_ref().expect("checked above");
        Zip::from(&mut logits)
            .and(d)
            .for_each(|l, &dij| *l -= classical_weight * dij);
    }
    Ok(logits)
}

/// One AMD iteration: closed-form kernel update followed by `r <- W^T p`.
///
/// With `theta == 1` this is the pure RDD iteration; with `theta < 1` it is
/// the fused iteration.
pub fn amd_step(problem: &AmdProblem, state: &Coupling, config: &SolverConfig) -> Result<Coupling> {
    let mut w = amd_logits(problem, state, config)?;
    normalize_rows(&mut w, config.lambda)?;
    let r = column_marginal(w.view(), problem.p.view());
    Ok(Coupling::from_parts_unchecked(w, r))
}

fn normalize_rows(logits: &mut Array2<f64>, lambda: f64) -> Result<()> {
    for (i, row) in logits.axis_iter_mut(Axis(0)).enumerate() {
        if !softmax_in_place(row) {
            return Err(Error::NumericalFailure {
                lambda,
                reason: format!("non-finite or empty logits in row {i}"),
            });
        }
    }
    Ok(())
}

/// Mutual information `sum_ij p_i w_ij (ln w_ij - ln r_j)` in nats, with `r`
/// recomputed from `W` and `p`.
pub fn mutual_information(coupling: &Coupling, p: &Array1<f64>) -> Result<f64> {
    if p.len() != coupling.shape().0 {
        return Err(Error::ShapeMismatch {
            what: "p",
            expected: (coupling.shape().0, 1),
            got: (p.len(), 1),
        });
    }
    let r = column_marginal(coupling.w().view(), p.view());
    let value = rate_objective(coupling.w().view(), r.view(), p.view())?;
    if value < -1e-10 {
        return Err(Error::InvalidCoupling(format!(
            "mutual information is negative: {value}"
        )));
    }
    Ok(value.max(0.0))
}

/// The discrete objective `sum_ij p_i w_ij (ln w_ij - ln r_j)` for an
/// arbitrary `r` (no marginal recomputation, no clamping).
pub fn rate_objective(
    w: ArrayView2<'_, f64>,
    r: ArrayView1<'_, f64>,
    p: ArrayView1<'_, f64>,
) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (i, row) in w.axis_iter(Axis(0)).enumerate() {
        let pi = p[i];
        for (j, &wij) in row.iter().enumerate() {
            let mass = pi * wij;
            if mass <= 0.0 {
                continue;
            }
            if r[j] <= 0.0 {
                return Err(Error::InconsistentMarginal { column: j, mass });
            }
            acc.add(mass * (wij / r[j]).ln());
        }
    }
    Ok(acc.value())
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs AMD from the uniform kernel for a source against a reproduction space.
pub fn solve(
    source: &DiscreteSource,
    y_space: &MetricSpace,
    config: &SolverConfig,
    d_cross: Option<&Array2<f64>>,
) -> Result<SolverResult> {
    let problem = AmdProblem::from_spaces(source, y_space, d_cross.cloned())?;
    solve_problem(&problem, config)
}

/// Runs AMD from the uniform kernel on a prepared problem.
pub fn solve_problem(problem: &AmdProblem, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    if config.theta < 1.0 && problem.d_cross.is_none() {
        return Err(Error::MissingCrossDistance {
            theta: config.theta,
        });
    }
    let mut state = Coupling::uniform(problem.m(), problem.n());
    let mut trace = config.trace_objective.then(Vec::new);
    let mut iterations_run = 0;
    let mut last_change = f64::INFINITY;
    let mut stopped_early = false;

    for _ in 0..config.max_iter {
        let next = amd_step(problem, &state, config)?;
        last_change = max_abs_diff(next.w(), state.w());
        state = next;
        iterations_run += 1;
        if let Some(t) = trace.as_mut() {
            let rate = mutual_information(&state, &problem.p)?;
            t.push(rate + config.lambda * fused_of(problem, state.w().view(), config.theta).2);
        }
        if config.w_tol > 0.0 && last_change < config.w_tol {
            stopped_early = true;
            break;
        }
    }

    let rate_nats = mutual_information(&state, &problem.p)?;
    let (gromov, classical, fused) = fused_of(problem, state.w().view(), config.theta);
    Ok(SolverResult {
        coupling: state,
        rate_nats,
        gromov_distortion: gromov,
        classical_distortion: classical,
        fused_distortion: fused,
        iterations_run,
        converged: stopped_early || last_change <= CONVERGED_DIAGNOSTIC_TOL,
        last_change,
        objective_trace: trace,
    })
}

/// (gromov, classical, fused). Classical is reported as zero at `theta == 1`.
fn fused_of(problem: &AmdProblem, w: ArrayView2<'_, f64>, theta: f64) -> (f64, f64, f64) {
    let gromov = problem.gromov(w);
    if theta == 1.0 {
        return (gromov, 0.0, gromov);
    }
    let classical = problem.classical(w).unwrap_or(0.0);
    (
        gromov,
        classical,
        theta * gromov + (1.0 - theta) * classical,
    )
}

/// One Blahut-Arimoto iteration for the classical RD problem:
/// `w_ij ∝ r_j exp(-lambda d_ij)`, then `r <- W^T p`.
pub fn ba_step(
    d_cross: &Array2<f64>,
    p: &Array1<f64>,
    state: &Coupling,
    lambda: f64,
) -> Result<Coupling> {
    if d_cross.dim() != state.shape() {
        return Err(Error::ShapeMismatch {
            what: "d_cross",
            expected: state.shape(),
            got: d_cross.dim(),
        });
    }
    let r = state.r();
    let mut w = Array2::zeros(d_cross.dim());
    for (i, (drow, mut wrow)) in d_cross
        .axis_iter(Axis(0))
        .zip(w.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        // shift by the row's smallest distance over the support of r
        let shift = drow
            .iter()
            .zip(r.iter())
            .filter(|(_, &rj)| rj > 0.0)
            .map(|(&d, _)| d)
            .fold(f64::INFINITY, f64::min);
        if !shift.is_finite() {
            return Err(Error::NumericalFailure {
                lambda,
                reason: format!("empty support in row {i}"),
            });
        }
        let mut total = 0.0;
        for ((wij, &dij), &rj) in wrow.iter_mut().zip(drow.iter()).zip(r.iter()) {
            *wij = if rj > 0.0 {
                rj * (-lambda * (dij - shift)).exp()
            } else {
                0.0
            };
            total += *wij;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NumericalFailure {
                lambda,
                reason: format!("row {i} normalizer is {total}"),
            });
        }
        wrow.mapv_inplace(|v| v / total);
    }
    let r = column_marginal(w.view(), p.view());
    Ok(Coupling::from_parts_unchecked(w, r))
}

/// Blahut-Arimoto solve of the classical RD problem at fixed `lambda`, from
/// the uniform kernel.
///
/// The reproduction space is only used to report the Gromov-type distortion of
/// the resulting kernel alongside the classical one.
pub fn ba_solve(
    source: &DiscreteSource,
    y_space: &MetricSpace,
    d_cross: &Array2<f64>,
    lambda: f64,
    max_iter: usize,
) -> Result<SolverResult> {
    let problem = AmdProblem::from_spaces(source, y_space, Some(d_cross.clone()))?;
    ba_solve_problem(&problem, lambda, max_iter)
}

/// [`ba_solve`] on prebuilt matrices; the problem must carry cross distances.
pub fn ba_solve_problem(
    problem: &AmdProblem,
    lambda: f64,
    max_iter: usize,
) -> Result<SolverResult> {
    let config = SolverConfig {
        lambda,
        theta: 0.0,
        max_iter,
        ..SolverConfig::default()
    };
    config.validate()?;
    let d_cross = problem
        .d_cross()
        .ok_or(Error::MissingCrossDistance { theta: 0.0 })?;
    let p = problem.p();
    let mut state = Coupling::uniform(problem.m(), problem.n());
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = ba_step(d_cross, p, &state, lambda)?;
        last_change = max_abs_diff(next.w(), state.w());
        state = next;
    }
    let rate_nats = mutual_information(&state, p)?;
    let (gromov, classical, fused) = fused_of(problem, state.w().view(), 0.0);
    Ok(SolverResult {
        coupling: state,
        rate_nats,
        gromov_distortion: gromov,
        classical_distortion: classical,
        fused_distortion: fused,
        iterations_run: max_iter,
        converged: last_change <= CONVERGED_DIAGNOSTIC_TOL,
        last_change,
        objective_trace: None,
    })
}
