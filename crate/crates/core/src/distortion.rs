//! Gromov-type, classical and fused distortion of a coupling.
//!
//! For a source pmf `p` on `M` points with q-distance matrix `dx`, a
//! reproduction space with q-distance matrix `dy` on `N` points, and a
//! row-stochastic conditional kernel `W`, the Gromov-type distortion is
//!
//! ```text
//! E(W) = sum_{i,i',j,j'} (dx[i][i'] - dy[j][j'])^2 w_ij w_i'j' p_i p_i'
//! ```
//!
//! Expanding the square gives `E = c1 + c2 - 2 <C W dy, W>` with
//! `c1 = p^T dx^2 p`, `c2 = (W^T p)^T dy^2 (W^T p)` and
//! `C_ij = dx_ij p_i p_j`, which costs `O(M^2 N + M N^2)` instead of
//! `O(M^2 N^2)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{compensated_sum, CompensatedSum};
use crate::{Error, Result};

/// Largest `M * N` the quartic oracle accepts.
pub const BRUTE_FORCE_CAP: usize = 256;

const ROW_SUM_TOL: f64 = 1e-10;

/// Conditional kernel `W` (rows indexed by source points) and output marginal `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    w: Array2<f64>,
    r: Array1<f64>,
}

impl Coupling {
    /// Wraps `w` and `r`, checking row-stochasticity and that `r` is a pmf.
    pub fn new(w: Array2<f64>, r: Array1<f64>) -> Result<Self> {
        if r.len() != w.ncols() {
            return Err(Error::ShapeMismatch {
                what: "r",
                expected: (w.ncols(), 1),
                got: (r.len(), 1),
            });
        }
        let c = Self { w, r };
        c.validate()?;
        Ok(c)
    }

    /// Kernel `w` with `r` set to its exact column marginal under `p`.
    pub fn from_conditional(w: Array2<f64>, p: ArrayView1<'_, f64>) -> Result<Self> {
        check_len("p", w.nrows(), p.len())?;
        let r = column_marginal(w.view(), p);
        Self::new(w, r)
    }

    /// Uniform kernel `1 1^T / N` with uniform marginal.
    pub fn uniform(m: usize, n: usize) -> Self {
        let v = 1.0 / n as f64;
        Self {
            w: Array2::from_elem((m, n), v),
            r: Array1::from_elem(n, v),
        }
    }

    /// Product coupling: every row equals `r`, making X and Y independent.
    pub fn product(m: usize, r: ArrayView1<'_, f64>) -> Self {
        let w = Array2::from_shape_fn((m, r.len()), |(_, j)| r[j]);
        Self { w, r: r.to_owned() }
    }

    /// Assembles a coupling without checks. Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(w: Array2<f64>, r: Array1<f64>) -> Self {
        Self { w, r }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidCoupling(
                "w entries must be finite and nonnegative".into(),
            ));
        }
        for (i, row) in self.w.axis_iter(Axis(0)).enumerate() {
            let s = compensated_sum(row.iter().copied());
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidCoupling(format!("row {i} sums to {s}")));
            }
        }
        if self.r.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidCoupling(
                "r entries must be finite and nonnegative".into(),
            ));
        }
        let s = compensated_sum(self.r.iter().copied());
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidCoupling(format!("r sums to {s}")));
        }
        Ok(())
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn r(&self) -> &Array1<f64> {
        &self.r
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.dim()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.w, self.r)
    }
}

/// `r_j = sum_i w_ij p_i`.
pub fn column_marginal(w: ArrayView2<'_, f64>, p: ArrayView1<'_, f64>) -> Array1<f64> {
    w.t().dot(&p)
}

/// Terms of the cubic-time evaluation of the Gromov-type distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionBreakdown {
    /// `p^T dx^2 p`, independent of the coupling.
    pub c1: f64,
    /// `(W^T p)^T dy^2 (W^T p)`.
    pub c2: f64,
    /// `<C W dy, W>` with `C_ij = dx_ij p_i p_j`.
    pub cross: f64,
    pub total: f64,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch {
            what,
            expected: (expected, 1),
            got: (got, 1),
        });
    }
    Ok(())
}

fn check_shape(what: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn check_gromov_shapes(
    dx: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    p: ArrayView1<'_, f64>,
) -> Result<(usize, usize)> {
    let (m, n) = w.dim();
    check_shape("dx", (m, m), dx.dim())?;
    check_shape("dy", (n, n), dy.dim())?;
    check_len("p", m, p.len())?;
    Ok((m, n))
}

/// Exact quadruple sum. `O(M^2 N^2)`: a test oracle, refused above
/// [`BRUTE_FORCE_CAP`].
pub fn gromov_distortion_bruteforce(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    coupling: &Coupling,
    p: &Array1<f64>,
) -> Result<f64> {
    gromov_distortion_bruteforce_capped(dx, dy, coupling, p, BRUTE_FORCE_CAP)
}

pub fn gromov_distortion_bruteforce_capped(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    coupling: &Coupling,
    p: &Array1<f64>,
    cap: usize,
) -> Result<f64> {
    let w = coupling.w();
    let (m, n) = check_gromov_shapes(dx.view(), dy.view(), w.view(), p.view())?;
    if m * n > cap {
        return Err(Error::OracleCapExceeded { size: m * n, cap });
    }
    let mut acc = CompensatedSum::new();
    for i in 0..m {
        for ip in 0..m {
            let a = dx[[i, ip]];
            let pp = p[i] * p[ip];
            for j in 0..n {
                for jp in 0..n {
                    let diff = a - dy[[j, jp]];
                    acc.add(diff * diff * w[[i, j]] * w[[ip, jp]] * pp);
                }
            }
        }
    }
    Ok(acc.value())
}

/// `p^T dx^2 p`.
pub fn constant_term(dx: ArrayView2<'_, f64>, p: ArrayView1<'_, f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for (i, row) in dx.axis_iter(Axis(0)).enumerate() {
        let inner = compensated_sum(row.iter().zip(p.iter()).map(|(d, pj)| d * d * pj));
        acc.add(p[i] * inner);
    }
    acc.value()
}

/// Quadratic form `v^T A v` with compensated accumulation.
fn quad_form(a: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let av = a.dot(&v);
    compensated_sum(av.iter().zip(v.iter()).map(|(x, y)| x * y))
}

fn frobenius_inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    compensated_sum(a.iter().zip(b.iter()).map(|(x, y)| x * y))
}

/// `C = diag(p) dx diag(p)`.
pub fn weighted_source_matrix(dx: ArrayView2<'_, f64>, p: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut c = dx.to_owned();
    Zip::indexed(&mut c).for_each(|(i, j), v| *v *= p[i] * p[j]);
    c
}

/// Cubic-time Gromov-type distortion via `c1 + c2 - 2 <C W dy, W>`.
pub fn gromov_distortion_decomposed(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    coupling: &Coupling,
    p: &Array1<f64>,
) -> Result<DistortionBreakdown> {
    let w = coupling.w();
    check_gromov_shapes(dx.view(), dy.view(), w.view(), p.view())?;
    let c1 = constant_term(dx.view(), p.view());
    let c = weighted_source_matrix(dx.view(), p.view());
    Ok(decompose_with(c1, c.view(), dy.view(), w.view(), p.view()))
}

/// Decomposition with `c1` and `C` already computed.
pub(crate) fn decompose_with(
    c1: f64,
    c: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    p: ArrayView1<'_, f64>,
) -> DistortionBreakdown {
    let marginal = column_marginal(w, p);
    let dy_sq = dy.mapv(|v| v * v);
    let c2 = quad_form(dy_sq.view(), marginal.view());
    let cwd = c.dot(&w).dot(&dy);
    let cross = frobenius_inner(cwd.view(), w);
    DistortionBreakdown {
        c1,
        c2,
        cross,
        total: c1 + c2 - 2.0 * cross,
    }
}

/// `sum_ij d_ij w_ij p_i`.
pub fn expected_classical_distortion(
    d_cross: &Array2<f64>,
    coupling: &Coupling,
    p: &Array1<f64>,
) -> Result<f64> {
    let w = coupling.w();
    check_shape("d_cross", w.dim(), d_cross.dim())?;
    check_len("p", w.nrows(), p.len())?;
    Ok(classical_unchecked(d_cross.view(), w.view(), p.view()))
}

pub(crate) fn classical_unchecked(
    d: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    p: ArrayView1<'_, f64>,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for (i, (drow, wrow)) in d.axis_iter(Axis(0)).zip(w.axis_iter(Axis(0))).enumerate() {
        let inner = compensated_sum(drow.iter().zip(wrow.iter()).map(|(a, b)| a * b));
        acc.add(p[i] * inner);
    }
    acc.value()
}

/// `theta * gromov + (1 - theta) * classical`. `d_cross` may be omitted only
/// when `theta == 1`.
pub fn fused_distortion(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    d_cross: Option<&Array2<f64>>,
    coupling: &Coupling,
    p: &Array1<f64>,
    theta: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(
            "theta",
            format!("must lie in [0, 1], got {theta}"),
        ));
    }
    let gromov = gromov_distortion_decomposed(dx, dy, coupling, p)?.total;
    if theta == 1.0 {
        return Ok(gromov);
    }
    let d = d_cross.ok_or(Error::MissingCrossDistance { theta })?;
    let classical = expected_classical_distortion(d, coupling, p)?;
    Ok(theta * gromov + (1.0 - theta) * classical)
}

/// Settings for the zero-rate threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmaxOptions {
    /// Number of mirror-descent starts: one uniform, the rest Dirichlet(1).
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for DmaxOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            iterations: 5_000,
            seed: 0,
        }
    }
}

/// Best product-coupling distortion found, with per-start diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmaxEstimate {
    pub value: f64,
    /// Minimizing output marginal.
    pub r: Array1<f64>,
    /// `p^T dx^2 p`; also the value at every simplex vertex.
    pub c1: f64,
    /// Final objective of each start, in start order.
    pub restart_values: Vec<f64>,
    /// `r^T g - min_j g_j` for the gradient `g` at the returned point; zero
    /// at a first-order stationary point.
    pub stationarity_gap: f64,
}

/// Objective of the zero-rate problem at a product coupling with output
/// marginal `r`: `c1 + r^T Q r`, `Q = dy^2 - 2 m_x dy`, `m_x = p^T dx p`.
pub struct DmaxObjective {
    c1: f64,
    q: Array2<f64>,
}

impl DmaxObjective {
    pub fn new(dx: &Array2<f64>, dy: &Array2<f64>, p: &Array1<f64>) -> Result<Self> {
        let m = p.len();
        check_shape("dx", (m, m), dx.dim())?;
        let n = dy.nrows();
        check_shape("dy", (n, n), dy.dim())?;
        if n == 0 {
            return Err(Error::invalid("dy", "reproduction space is empty"));
        }
        let c1 = constant_term(dx.view(), p.view());
        let mean_dx = quad_form(dx.view(), p.view());
        let q = dy.mapv(|v| v * v - 2.0 * mean_dx * v);
        Ok(Self { c1, q })
    }

    pub fn value(&self, r: ArrayView1<'_, f64>) -> f64 {
        self.c1 + quad_form(self.q.view(), r)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn minimize_from(&self, mut r: Array1<f64>, iterations: usize) -> Array1<f64> {
        let scale = self.q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            return r;
        }
        let step = 1.0 / (2.0 * scale);
        let mut logits = Array1::zeros(r.len());
        for _ in 0..iterations {
            let grad = self.q.dot(&r) * 2.0;
            Zip::from(&mut logits)
                .and(&r)
                .and(&grad)
                .for_each(|l, &rj, &g| *l = rj.ln() - step * g);
            r.assign(&logits);
            if !crate::numeric::softmax_in_place(r.view_mut()) {
                break;
            }
        }
        self.polish(r, iterations)
    }

    /// Pairwise Frank-Wolfe with exact line search: shifts mass from the
    /// worst supported coordinate to the best one. Recovers coordinates that
    /// the multiplicative phase drove to (numerically) zero.
    fn polish(&self, mut r: Array1<f64>, max_steps: usize) -> Array1<f64> {
        let scale = self.q.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut qr = self.q.dot(&r);
        for _ in 0..max_steps {
            let (mut s, mut a) = (0, usize::MAX);
            for j in 0..r.len() {
                if qr[j] < qr[s] {
                    s = j;
                }
                if r[j] > 0.0 && (a == usize::MAX || qr[j] > qr[a]) {
                    a = j;
                }
            }
            let slope = 2.0 * (qr[s] - qr[a]);
            if s == a || slope >= -1e-13 * scale {
                break;
            }
            let curvature = self.q[[s, s]] + self.q[[a, a]] - 2.0 * self.q[[s, a]];
            let t = if curvature > 0.0 {
                (-slope / (2.0 * curvature)).min(r[a])
            } else {
                r[a]
            };
            if t <= 0.0 {
                break;
            }
            r[s] += t;
            r[a] = if t == r[a] { 0.0 } else { r[a] - t };
            let (col_s, col_a) = (self.q.column(s), self.q.column(a));
            Zip::from(&mut qr)
                .and(&col_s)
                .and(&col_a)
                .for_each(|v, &x, &y| *v += t * (x - y));
        }
        r
    }

    fn stationarity_gap(&self, r: ArrayView1<'_, f64>) -> f64 {
        let g = self.q.dot(&r) * 2.0;
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        g.dot(&r) - min
    }
}

/// Estimates the zero-rate threshold: the minimum Gromov-type distortion over
/// product couplings.
pub fn compute_dmax(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    p: &Array1<f64>,
    restarts: usize,
) -> Result<DmaxEstimate> {
    compute_dmax_with(
        dx,
        dy,
        p,
        &DmaxOptions {
            restarts,
            ..DmaxOptions::default()
        },
    )
}

pub fn compute_dmax_with(
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    p: &Array1<f64>,
    opts: &DmaxOptions,
) -> Result<DmaxEstimate> {
    if opts.restarts == 0 {
        return Err(Error::invalid("restarts", "must be >= 1"));
    }
    let objective = DmaxObjective::new(dx, dy, p)?;
    let n = objective.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
    let starts: Vec<Array1<f64>> = (0..opts.restarts)
        .map(|k| {
            if k == 0 {
                Array1::from_elem(n, 1.0 / n as f64)
            } else {
                let g = Array1::from_iter((0..n).map(|_| {
                    let g: f64 = gamma.sample(&mut rng);
                    g.max(1e-300)
                }));
                let s = g.sum();
                g / s
            }
        })
        .collect();

    let finals: Vec<(f64, Array1<f64>)> = starts
        .into_par_iter()
        .map(|r0| {
            let r = objective.minimize_from(r0, opts.iterations);
            (objective.value(r.view()), r)
        })
        .collect();

    let restart_values: Vec<f64> = finals.iter().map(|(v, _)| *v).collect();
    let (mut value, mut r) = finals
        .into_iter()
        .reduce(|best, cand| if cand.0 < best.0 { cand } else { best })
        .expect("at least one restart");

    // every vertex of the simplex attains c1
    if objective.c1() < value {
        value = objective.c1();
        r = Array1::zeros(n);
        r[0] = 1.0;
    }
    let stationarity_gap = objective.stationarity_gap(r.view());
    Ok(DmaxEstimate {
        value,
        r,
        c1: objective.c1(),
        restart_values,
        stationarity_gap,
    })
}
