//! Discrete metric-measure spaces and source distributions.
//!
//! A [`MetricSpace`] is a finite point set in \(\mathbb{R}^d\) together with
//! its matrix of Euclidean distances raised to a power `q >= 1`. A
//! [`DiscreteSource`] attaches a probability mass function to one.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::numeric::compensated_sum;
use crate::{Error, Result};

/// Default ceiling on the number of points a constructor will produce.
pub const DEFAULT_POINT_CAP: usize = 10_000;

/// Finite metric space: points plus their q-th power distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    points: Array2<f64>,
    q: f64,
    dist_q: Array2<f64>,
}

impl MetricSpace {
    /// Builds a space from an `n x dim` point matrix, computing
    /// `dist_q[i][j] = |x_i - x_j|_2^q`.
    pub fn from_points(points: Array2<f64>, q: f64) -> Result<Self> {
        Self::from_points_capped(points, q, DEFAULT_POINT_CAP)
    }

    pub fn from_points_capped(points: Array2<f64>, q: f64, cap: usize) -> Result<Self> {
        validate_q(q)?;
        let n = points.nrows();
        if n == 0 {
            return Err(Error::invalid(
                "points",
                "space must contain at least one point",
            ));
        }
        if points.ncols() == 0 {
            return Err(Error::invalid("points", "points must have dimension >= 1"));
        }
        if n > cap {
            return Err(Error::PointCapExceeded { count: n, cap });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points", "coordinates must be finite"));
        }
        let dist_q = pairwise_distance_pow(points.view(), points.view(), q);
        Ok(Self { points, q, dist_q })
    }

    /// Builds a space from explicit parts, checking the metric-matrix axioms.
    ///
    /// Used when a distance matrix comes from outside (tests, self-checks);
    /// the matrix is validated but not recomputed from the points.
    pub fn from_parts(points: Array2<f64>, q: f64, dist_q: Array2<f64>) -> Result<Self> {
        validate_q(q)?;
        let n = points.nrows();
        if dist_q.dim() != (n, n) {
            return Err(Error::ShapeMismatch {
                what: "dist_q",
                expected: (n, n),
                got: dist_q.dim(),
            });
        }
        validate_distance_matrix(dist_q.view())?;
        Ok(Self { points, q, dist_q })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Matrix of q-th power distances.
    pub fn dist_q(&self) -> &Array2<f64> {
        &self.dist_q
    }

    /// Re-checks symmetry, zero diagonal and nonnegativity of `dist_q`.
    pub fn validate(&self) -> Result<()> {
        validate_distance_matrix(self.dist_q.view())
    }
}

fn validate_q(q: f64) -> Result<()> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::invalid(
            "q",
            format!("must be a finite real >= 1, got {q}"),
        ));
    }
    Ok(())
}

/// Checks that `d` is square, symmetric, zero on the diagonal and nonnegative.
pub fn validate_distance_matrix(d: ArrayView2<'_, f64>) -> Result<()> {
    let (rows, cols) = d.dim();
    if rows != cols {
        return Err(Error::InvalidDistanceMatrix(format!(
            "matrix is {rows}x{cols}, expected square"
        )));
    }
    for i in 0..rows {
        if d[[i, i]] != 0.0 {
            return Err(Error::InvalidDistanceMatrix(format!(
                "diagonal entry ({i},{i}) = {} is not zero",
                d[[i, i]]
            )));
        }
        for j in 0..i {
            let (a, b) = (d[[i, j]], d[[j, i]]);
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "entry ({i},{j}) = {a} is negative or not finite"
                )));
            }
            if a != b {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "asymmetric at ({i},{j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

fn pairwise_distance_pow(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, q: f64) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, xi) in a.axis_iter(Axis(0)).enumerate() {
        for (j, yj) in b.axis_iter(Axis(0)).enumerate() {
            let sq: f64 = xi
                .iter()
                .zip(yj.iter())
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            out[[i, j]] = if q == 2.0 { sq } else { sq.sqrt().powf(q) };
        }
    }
    out
}

/// One-dimensional cell-centred grid on `[-h, h]` with `k` cells.
pub fn grid_coordinates(h: f64, k: usize) -> Vec<f64> {
    let delta = 2.0 * h / k as f64;
    (0..k)
        .map(|i| -h + delta / 2.0 + i as f64 * delta)
        .collect()
}

/// Uniform grid: the `dim`-fold Cartesian product of the cell centres of
/// `[-h, h]` split into `k` cells. Produces `k^dim` points.
pub fn build_uniform_grid(h: f64, k: usize, dim: usize, q: f64) -> Result<MetricSpace> {
    build_uniform_grid_capped(h, k, dim, q, DEFAULT_POINT_CAP)
}

pub fn build_uniform_grid_capped(
    h: f64,
    k: usize,
    dim: usize,
    q: f64,
    cap: usize,
) -> Result<MetricSpace> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("must be > 0, got {h}")));
    }
    if k == 0 {
        return Err(Error::invalid("K", "must be >= 1"));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid(
            "dim",
            format!("must be 1, 2 or 3, got {dim}"),
        ));
    }
    let count = k.checked_pow(dim as u32).ok_or(Error::PointCapExceeded {
        count: usize::MAX,
        cap,
    })?;
    if count > cap {
        return Err(Error::PointCapExceeded { count, cap });
    }
    let coords = grid_coordinates(h, k);
    let mut points = Array2::zeros((count, dim));
    for idx in 0..count {
        // last axis varies fastest
        let mut rem = idx;
        for axis in (0..dim).rev() {
            points[[idx, axis]] = coords[rem % k];
            rem /= k;
        }
    }
    MetricSpace::from_points_capped(points, q, cap)
}

/// `n` points evenly spaced on a circle of the given radius, at angles
/// `2 pi k / n`. Distances are chordal.
pub fn build_circle(n: usize, radius: f64, q: f64) -> Result<MetricSpace> {
    if n < 2 {
        return Err(Error::invalid(
            "n",
            format!("circle needs at least 2 points, got {n}"),
        ));
    }
    validate_radius(radius)?;
    let mut points = Array2::zeros((n, 2));
    for k in 0..n {
        let phi = 2.0 * PI * k as f64 / n as f64;
        points[[k, 0]] = radius * phi.cos();
        points[[k, 1]] = radius * phi.sin();
    }
    MetricSpace::from_points(points, q)
}

/// `n_per_axis^2` points on a sphere: a longitude/colatitude mesh with
/// longitudes `2 pi a / n` and colatitudes `pi (b + 1/2) / n`. The half-step
/// keeps the poles from collapsing into repeated points.
pub fn build_sphere(n_per_axis: usize, radius: f64, q: f64) -> Result<MetricSpace> {
    build_sphere_capped(n_per_axis, radius, q, DEFAULT_POINT_CAP)
}

pub fn build_sphere_capped(
    n_per_axis: usize,
    radius: f64,
    q: f64,
    cap: usize,
) -> Result<MetricSpace> {
    if n_per_axis < 2 {
        return Err(Error::invalid(
            "n_per_axis",
            format!("sphere needs at least 2 positions per axis, got {n_per_axis}"),
        ));
    }
    validate_radius(radius)?;
    let n = n_per_axis;
    let count = n * n;
    if count > cap {
        return Err(Error::PointCapExceeded { count, cap });
    }
    let mut points = Array2::zeros((count, 3));
    for a in 0..n {
        let phi = 2.0 * PI * a as f64 / n as f64;
        for b in 0..n {
            let theta = PI * (b as f64 + 0.5) / n as f64;
            let row = a * n + b;
            points[[row, 0]] = radius * theta.sin() * phi.cos();
            points[[row, 1]] = radius * theta.sin() * phi.sin();
            points[[row, 2]] = radius * theta.cos();
        }
    }
    MetricSpace::from_points_capped(points, q, cap)
}

fn validate_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(
            "radius",
            format!("must be > 0, got {radius}"),
        ));
    }
    Ok(())
}

/// Source density family. Scale parameters must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceFamily {
    /// Density proportional to `exp(-|x|_2^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
    /// Density proportional to `exp(-|x|_1 / sigma)`.
    Laplacian { sigma: f64 },
    /// Constant density over the support.
    Uniform,
}

impl SourceFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceFamily::Gaussian { sigma } | SourceFamily::Laplacian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
                }
                Ok(())
            }
            SourceFamily::Uniform => Ok(()),
        }
    }

    /// Log of the unnormalized density at `x`.
    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> f64 {
        match *self {
            SourceFamily::Gaussian { sigma } => {
                -x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)
            }
            SourceFamily::Laplacian { sigma } => -x.iter().map(|v| v.abs()).sum::<f64>() / sigma,
            SourceFamily::Uniform => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SourceFamily::Gaussian { .. } => "gaussian",
            SourceFamily::Laplacian { .. } => "laplacian",
            SourceFamily::Uniform => "uniform",
        }
    }
}

/// A metric space with a probability mass function on its points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSource {
    space: MetricSpace,
    pmf: Array1<f64>,
}

impl DiscreteSource {
    /// Wraps an explicit pmf, checking length, sign and normalization.
    pub fn new(space: MetricSpace, pmf: Array1<f64>) -> Result<Self> {
        if pmf.len() != space.len() {
            return Err(Error::ShapeMismatch {
                what: "pmf",
                expected: (space.len(), 1),
                got: (pmf.len(), 1),
            });
        }
        if pmf.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "pmf",
                "entries must be finite and nonnegative",
            ));
        }
        let total = compensated_sum(pmf.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "pmf",
                format!("must sum to 1, sums to {total}"),
            ));
        }
        Ok(Self { space, pmf })
    }

    /// Normalizes nonnegative weights into a pmf.
    pub fn from_weights(space: MetricSpace, weights: ArrayView1<'_, f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::ShapeMismatch {
                what: "weights",
                expected: (space.len(), 1),
                got: (weights.len(), 1),
            });
        }
        if weights.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("weights", "must be nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateSource);
        }
        let pmf = weights.mapv(|w| w / total);
        Ok(Self { space, pmf })
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn pmf(&self) -> &Array1<f64> {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }
}

/// Evaluates `family`'s density on every point of `space` and normalizes.
///
/// Log-densities are shifted by their maximum before exponentiating, so tails
/// far below `f64::MIN_POSITIVE` relative to the mode underflow to zero
/// without taking the whole vector with them.
pub fn source_pmf(space: &MetricSpace, family: SourceFamily) -> Result<DiscreteSource> {
    family.validate()?;
    if space.is_empty() {
        return Err(Error::invalid("space", "must be nonempty"));
    }
    let log_mass: Vec<f64> = space
        .points()
        .axis_iter(Axis(0))
        .map(|x| family.log_density(x))
        .collect();
    let max = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateSource);
    }
    let weights = Array1::from_iter(log_mass.iter().map(|&l| (l - max).exp()));
    DiscreteSource::from_weights(space.clone(), weights.view())
}

/// Squared-error cross distances `|x_i - y_j|^2` between two spaces of equal
/// dimension.
pub fn cross_distance_matrix(x_space: &MetricSpace, y_space: &MetricSpace) -> Result<Array2<f64>> {
    if x_space.dim() != y_space.dim() {
        return Err(Error::DimensionMismatch {
            x_dim: x_space.dim(),
            y_dim: y_space.dim(),
        });
    }
    Ok(pairwise_distance_pow(
        x_space.points(),
        y_space.points(),
        2.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assert_metric(space: &MetricSpace) {
        let d = space.dist_q();
        for i in 0..space.len() {
            assert_eq!(d[[i, i]], 0.0);
            for j in 0..space.len() {
                assert_eq!(d[[i, j]], d[[j, i]]);
                assert!(d[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn grid_1d_matches_cell_centres() {
        let s = build_uniform_grid(8.0, 4, 1, 2.0).unwrap();
        let xs: Vec<f64> = s.points().column(0).to_vec();
        assert_eq!(xs, vec![-6.0, -2.0, 2.0, 6.0]);
    }

    #[test]
    fn grid_2d_has_k_squared_points() {
        let s = build_uniform_grid(8.0, 3, 2, 2.0).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.dim(), 2);
        assert_metric(&s);
    }

    #[test]
    fn grid_two_cells_unit_interval() {
        let s = build_uniform_grid(1.0, 2, 1, 2.0).unwrap();
        assert_eq!(s.points().column(0).to_vec(), vec![-0.5, 0.5]);
        assert_eq!(s.dist_q(), &array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn grid_rejects_bad_dim_and_cap() {
        assert!(matches!(
            build_uniform_grid(1.0, 3, 4, 2.0),
            Err(Error::InvalidParameter { name: "dim", .. })
        ));
        assert!(matches!(
            build_uniform_grid(1.0, 22, 3, 2.0),
            Err(Error::PointCapExceeded {
                count: 10648,
                cap: 10_000
            })
        ));
        assert_eq!(
            build_uniform_grid_capped(1.0, 22, 3, 2.0, 20_000)
                .unwrap()
                .len(),
            10648
        );
        assert!(build_uniform_grid(0.0, 3, 1, 2.0).is_err());
        assert!(build_uniform_grid(1.0, 0, 1, 2.0).is_err());
        assert!(build_uniform_grid(1.0, 3, 1, 0.5).is_err());
    }

    #[test]
    fn grid_3d_cell_count() {
        let s = build_uniform_grid(8.0, 4, 3, 2.0).unwrap();
        assert_eq!(s.len(), 64);
    }

    #[test]
    fn circle_points_on_radius() {
        let s = build_circle(20, 4.0, 2.0).unwrap();
        assert_eq!(s.len(), 20);
        for p in s.points().axis_iter(Axis(0)) {
            let norm = p.dot(&p).sqrt();
            assert!((norm - 4.0).abs() < 1e-12);
        }
        assert_metric(&s);
    }

    #[test]
    fn circle_right_angle_chord() {
        let s = build_circle(4, 1.0, 2.0).unwrap();
        assert!((s.dist_q()[[0, 1]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circle_antipodal_q1() {
        let s = build_circle(2, 3.0, 1.0).unwrap();
        assert!((s.dist_q()[[0, 1]] - 6.0).abs() < 1e-12);
        assert!(build_circle(1, 1.0, 2.0).is_err());
    }

    #[test]
    fn sphere_count_and_radius() {
        let s = build_sphere(20, 4.0, 2.0).unwrap();
        assert_eq!(s.len(), 400);
        for p in s.points().axis_iter(Axis(0)) {
            assert!((p.dot(&p).sqrt() - 4.0).abs() < 1e-12);
        }
        // no two points coincide
        let d = s.dist_q();
        for i in 0..s.len() {
            for j in 0..i {
                assert!(d[[i, j]] > 1e-6);
            }
        }
    }

    #[test]
    fn sphere_small_is_metric() {
        let s = build_sphere(2, 1.0, 2.0).unwrap();
        assert_eq!(s.len(), 4);
        assert_metric(&s);
    }

    #[test]
    fn dist_matches_pow_of_l2() {
        let s = build_uniform_grid(2.0, 3, 2, 1.5).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                let diff = &s.point(i) - &s.point(j);
                let want = diff.dot(&diff).sqrt().powf(1.5);
                let got = s.dist_q()[[i, j]];
                assert!((got - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }

    #[test]
    fn uniform_pmf() {
        let s = build_uniform_grid(1.0, 5, 1, 2.0).unwrap();
        let src = source_pmf(&s, SourceFamily::Uniform).unwrap();
        for &p in src.pmf() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_pmf_symmetric() {
        let s = build_uniform_grid(8.0, 4, 1, 2.0).unwrap();
        let src = source_pmf(&s, SourceFamily::Gaussian { sigma: 2.0 }).unwrap();
        let p = src.pmf();
        assert!((p[0] - p[3]).abs() < 1e-15);
        assert!((p[1] - p[2]).abs() < 1e-15);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_pmf_by_hand() {
        let s = MetricSpace::from_points(array![[-1.0], [0.0], [1.0]], 2.0).unwrap();
        let src = source_pmf(&s, SourceFamily::Laplacian { sigma: 1.0 }).unwrap();
        let e = (-1f64).exp();
        let z = 1.0 + 2.0 * e;
        let want = [e / z, 1.0 / z, e / z];
        for (g, w) in src.pmf().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!((src.pmf()[0] - 0.2119).abs() < 1e-4);
        assert!((src.pmf()[1] - 0.5761).abs() < 1e-4);
    }

    #[test]
    fn tiny_sigma_does_not_underflow_to_zero() {
        let s = build_uniform_grid(8.0, 50, 1, 2.0).unwrap();
        let src = source_pmf(&s, SourceFamily::Gaussian { sigma: 1e-3 }).unwrap();
        assert!((src.pmf().sum() - 1.0).abs() < 1e-12);
        assert!(source_pmf(&s, SourceFamily::Laplacian { sigma: 0.0 }).is_err());
    }

    #[test]
    fn cross_distances() {
        let x = MetricSpace::from_points(array![[0.0]], 2.0).unwrap();
        assert_eq!(cross_distance_matrix(&x, &x).unwrap(), array![[0.0]]);
        let x = MetricSpace::from_points(array![[0.0], [1.0]], 2.0).unwrap();
        let y = MetricSpace::from_points(array![[0.5]], 2.0).unwrap();
        assert_eq!(
            cross_distance_matrix(&x, &y).unwrap(),
            array![[0.25], [0.25]]
        );
        let a = build_uniform_grid(1.0, 2, 2, 2.0).unwrap();
        let b = build_uniform_grid(1.0, 2, 3, 2.0).unwrap();
        assert_eq!(
            cross_distance_matrix(&a, &b),
            Err(Error::DimensionMismatch { x_dim: 2, y_dim: 3 })
        );
    }

    #[test]
    fn from_parts_rejects_asymmetric() {
        let pts = array![[0.0], [1.0]];
        let bad = array![[0.0, 1.0], [2.0, 0.0]];
        assert!(matches!(
            MetricSpace::from_parts(pts, 2.0, bad),
            Err(Error::InvalidDistanceMatrix(_))
        ));
    }
}
