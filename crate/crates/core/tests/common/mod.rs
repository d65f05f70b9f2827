#![allow(dead_code)]

use dynamask::numerics::sample_standard_normal;
use dynamask::{Mask, RngStream, TimeMatrix};
use rand::Rng;

pub fn normal_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> TimeMatrix {
    TimeMatrix::from_vec(rows, cols, sample_standard_normal(rng, rows * cols).unwrap()).unwrap()
}

pub fn uniform_mask(rng: &mut RngStream, rows: usize, cols: usize, lo: f64, hi: f64) -> Mask {
    Mask::new(TimeMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi)).unwrap()).unwrap()
}

/// Entrywise `|a - b| / (|a| + 1e-8)`, maximized.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + 1e-8))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at every entry of `x`.
pub fn central_differences(x: &TimeMatrix, h: f64, mut f: impl FnMut(&TimeMatrix) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut plus = x.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = x.clone();
            minus.as_mut_slice()[k] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}
