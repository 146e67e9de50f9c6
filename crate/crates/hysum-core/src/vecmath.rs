//! Shared float helpers. Transcendentals go through `libm` so results are
//! bit-identical everywhere, with or without std.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// Mean over the rows of a non-empty row matrix.
pub(crate) fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    debug_assert!(!rows.is_empty());
    let dim = rows[0].len();
    let mut acc = vec![0.0; dim];
    for row in rows {
        for (a, x) in acc.iter_mut().zip(row.iter()) {
            *a += x;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    for a in &mut acc {
        *a *= scale;
    }
    acc
}

/// Numerically stable log(sum(exp(x))).
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        max = max.max(x);
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += exp(x - max);
    }
    max + ln(sum)
}
