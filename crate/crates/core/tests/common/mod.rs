#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdd::{Coupling, DiscreteSource, MetricSpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let v = Array1::from_shape_fn(n, |_| -(rng.gen::<f64>().max(1e-12)).ln());
    let s = v.sum();
    v / s
}

pub fn random_space(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> MetricSpace {
    let pts = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-3.0..3.0));
    MetricSpace::from_points(pts, 2.0).unwrap()
}

pub fn random_source(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> DiscreteSource {
    let space = random_space(rng, m, dim);
    let p = random_simplex(rng, m);
    DiscreteSource::new(space, p).unwrap()
}

pub fn random_conditional(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let mut w = Array2::zeros((m, n));
    for i in 0..m {
        w.row_mut(i).assign(&random_simplex(rng, n));
    }
    w
}

pub fn random_coupling(rng: &mut ChaCha8Rng, m: usize, n: usize, p: &Array1<f64>) -> Coupling {
    Coupling::from_conditional(random_conditional(rng, m, n), p.view()).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
