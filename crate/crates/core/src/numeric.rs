//! Small numerical kernels shared by the distortion and solver modules.

use ndarray::{ArrayView1, ArrayViewMut1};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of floats.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `ln(sum(exp(x)))`, stable for large magnitudes. Returns `-inf` when every
/// entry is `-inf`.
pub fn log_sum_exp(x: ArrayView1<'_, f64>) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = x.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// In-place softmax of a row of logits with max subtraction.
///
/// Entries equal to `-inf` map to exactly zero. Returns `false` if the row
/// has no finite maximum (all `-inf`, or a NaN / `+inf` present), leaving the
/// row in an unspecified state.
pub fn softmax_in_place(mut row: ArrayViewMut1<'_, f64>) -> bool {
    let mut max = f64::NEG_INFINITY;
    for &v in row.iter() {
        if v.is_nan() || v == f64::INFINITY {
            return false;
        }
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.mapv_inplace(|v| v / total);
    true
}

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}
