//! Perturbation operators `pi(X, m; t, i)`.
//!
//! Each operator replaces entry `(t, i)` of the input by a value that depends
//! on the mask only through `m_{t,i}`: `m = 1` leaves the entry untouched and
//! smaller values move it toward a substitute built from the same feature at
//! neighbouring times. All operators are linear in `X` for a fixed mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::Mask;
use crate::numerics::TimeMatrix;

/// Below this width the Gaussian blur returns the input value itself.
pub const BLUR_SIGMA_FLOOR: f64 = 1e-6;

/// Kernel weights below this value (relative to the centre weight of 1) are
/// dropped from the blur sums. They are far below double-precision resolution
/// of the retained terms.
const BLUR_WEIGHT_CUTOFF: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationOperator {
    /// Temporal Gaussian blur with width `sigma_max * (1 - m)`.
    GaussianBlur { sigma_max: f64 },
    /// Fade toward the centred moving average over `[t - W, t + W]`.
    FadeMovingAverage { window: usize },
    /// Fade toward the average over the past window `[t - W, t]`.
    FadePastAverage { window: usize },
    /// `m * x`; depends on no other time step.
    StaticHadamard,
}

impl PerturbationOperator {
    pub fn gaussian_blur(sigma_max: f64) -> Result<Self> {
        let op = PerturbationOperator::GaussianBlur { sigma_max };
        op.validate()?;
        Ok(op)
    }

    pub fn fade_moving_average(window: usize) -> Result<Self> {
        let op = PerturbationOperator::FadeMovingAverage { window };
        op.validate()?;
        Ok(op)
    }

    pub fn fade_past_average(window: usize) -> Result<Self> {
        let op = PerturbationOperator::FadePastAverage { window };
        op.validate()?;
        Ok(op)
    }

    /// Rejects a non-positive blur width and zero-width averaging windows,
    /// which would make the perturbation a no-op.
    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationOperator::GaussianBlur { sigma_max } if !(sigma_max > 0.0 && sigma_max.is_finite()) => Err(
                Error::InvalidOperator(format!("sigma_max must be positive, got {sigma_max}")),
            ),
            PerturbationOperator::FadeMovingAverage { window: 0 }
            | PerturbationOperator::FadePastAverage { window: 0 } => Err(Error::InvalidOperator(
                "averaging window must be at least 1 (W = 0 leaves the input unchanged)".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Short label used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationOperator::GaussianBlur { .. } => "gaussian-blur",
            PerturbationOperator::FadeMovingAverage { .. } => "fade-moving-average",
            PerturbationOperator::FadePastAverage { .. } => "fade-past-average",
            PerturbationOperator::StaticHadamard => "static-hadamard",
        }
    }

    /// Declared dependence `(W1, W2)` on past and future time steps for a
    /// series of length `rows`.
    pub fn declared_window(&self, rows: usize) -> (usize, usize) {
        match *self {
            PerturbationOperator::GaussianBlur { .. } => (rows.saturating_sub(1), rows.saturating_sub(1)),
            PerturbationOperator::FadeMovingAverage { window } => (window, window),
            PerturbationOperator::FadePastAverage { window } => (window, 0),
            PerturbationOperator::StaticHadamard => (0, 0),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        let (w1, w2) = self.declared_window(usize::MAX);
        w1 > 0 || w2 > 0
    }

    /// `Pi_M(X)`.
    pub fn apply(&self, x: &TimeMatrix, mask: &Mask) -> Result<TimeMatrix> {
        Ok(self.evaluate(x, mask, false)?.0)
    }

    /// `d pi(X, m_{t,i}; t, i) / d m_{t,i}` for every entry.
    pub fn mask_derivative(&self, x: &TimeMatrix, mask: &Mask) -> Result<TimeMatrix> {
        Ok(self.evaluate(x, mask, true)?.1)
    }

    /// `Pi_M(X)` together with its entrywise mask derivative, sharing the work.
    pub fn apply_with_derivative(&self, x: &TimeMatrix, mask: &Mask) -> Result<(TimeMatrix, TimeMatrix)> {
        self.evaluate(x, mask, true)
    }

    fn evaluate(&self, x: &TimeMatrix, mask: &Mask, want_derivative: bool) -> Result<(TimeMatrix, TimeMatrix)> {
        self.validate()?;
        x.expect_shape(mask.shape(), "perturbation input vs mask")?;
        let (rows, cols) = x.shape();
        let m = mask.values();
        let mut out = vec![0.0; rows * cols];
        let mut der = if want_derivative { vec![0.0; rows * cols] } else { Vec::new() };
        match *self {
            PerturbationOperator::StaticHadamard => {
                for k in 0..rows * cols {
                    out[k] = m.as_slice()[k] * x.as_slice()[k];
                    if want_derivative {
                        der[k] = x.as_slice()[k];
                    }
                }
            }
            PerturbationOperator::FadeMovingAverage { window } | PerturbationOperator::FadePastAverage { window } => {
                let future = if matches!(self, PerturbationOperator::FadeMovingAverage { .. }) {
                    window
                } else {
                    0
                };
                let mu = window_means(x, window, future);
                for k in 0..rows * cols {
                    let (xv, mv) = (x.as_slice()[k], m.as_slice()[k]);
                    out[k] = mv * xv + (1.0 - mv) * mu[k];
                    if want_derivative {
                        der[k] = xv - mu[k];
                    }
                }
            }
            PerturbationOperator::GaussianBlur { sigma_max } => {
                let mut column = vec![0.0; rows];
                for i in 0..cols {
                    for (t, c) in column.iter_mut().enumerate() {
                        *c = x[(t, i)];
                    }
                    for t in 0..rows {
                        let k = t * cols + i;
                        let (value, d_sigma) = blur_entry(&column, t, sigma_max * (1.0 - m.as_slice()[k]));
                        out[k] = value;
                        if want_derivative {
                            der[k] = -sigma_max * d_sigma;
                        }
                    }
                }
            }
        }
        let out = TimeMatrix::from_vec(rows, cols, out)?;
        let der = if want_derivative {
            TimeMatrix::from_vec(rows, cols, der)?
        } else {
            TimeMatrix::zeros(rows, cols)
        };
        Ok((out, der))
    }

    /// Finite-difference sensitivity of the perturbed entry `(t, i)` (0-based)
    /// to `x_{t', i}` for every `t'` inside the declared window, with the mask
    /// fixed at 0.5.
    pub fn check_dynamicity(&self, x: &TimeMatrix, t: usize, i: usize) -> Result<DynamicityReport> {
        self.validate()?;
        let (rows, cols) = x.shape();
        if t >= rows || i >= cols {
            return Err(Error::IndexOutOfBounds {
                t: t + 1,
                i: i + 1,
                rows,
                cols,
            });
        }
        let mask = Mask::filled(rows, cols, 0.5);
        let (w1, w2) = self.declared_window(rows);
        let lo = t.saturating_sub(w1);
        let hi = (t + w2).min(rows - 1);
        let h = 1e-4;
        let mut sensitivities = Vec::with_capacity(hi - lo + 1);
        for tp in lo..=hi {
            let mut plus = x.clone();
            plus[(tp, i)] += h;
            let mut minus = x.clone();
            minus[(tp, i)] -= h;
            let d = (self.apply(&plus, &mask)?[(t, i)] - self.apply(&minus, &mask)?[(t, i)]) / (2.0 * h);
            sensitivities.push((tp as isize - t as isize, d));
        }
        Ok(DynamicityReport { t, i, sensitivities })
    }
}

/// Input sensitivities found by [`PerturbationOperator::check_dynamicity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicityReport {
    pub t: usize,
    pub i: usize,
    /// `(t' - t, d pi / d x_{t',i})` for every probed offset.
    pub sensitivities: Vec<(isize, f64)>,
}

impl DynamicityReport {
    /// Offsets whose sensitivity exceeds `tol` in magnitude.
    pub fn nonzero_offsets(&self, tol: f64) -> Vec<isize> {
        self.sensitivities
            .iter()
            .filter(|(_, d)| d.abs() > tol)
            .map(|&(o, _)| o)
            .collect()
    }

    pub fn is_dynamic(&self, tol: f64) -> bool {
        self.nonzero_offsets(tol).iter().any(|&o| o != 0)
    }
}

/// Per-entry means over `[t - past, t + future]`, truncated at the sequence
/// ends and divided by the number of terms actually included.
fn window_means(x: &TimeMatrix, past: usize, future: usize) -> Vec<f64> {
    let (rows, cols) = x.shape();
    let mut mu = vec![0.0; rows * cols];
    let mut prefix = vec![0.0; rows + 1];
    for i in 0..cols {
        for t in 0..rows {
            prefix[t + 1] = prefix[t] + x[(t, i)];
        }
        for t in 0..rows {
            let lo = t.saturating_sub(past);
            let hi = (t + future).min(rows - 1);
            mu[t * cols + i] = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64;
        }
    }
    mu
}

/// Normalized Gaussian average of `column` around `t` with width `sigma`,
/// and its derivative with respect to `sigma`.
fn blur_entry(column: &[f64], t: usize, sigma: f64) -> (f64, f64) {
    if sigma < BLUR_SIGMA_FLOOR {
        return (column[t], 0.0);
    }
    // w_k = q^(k^2) with q = exp(-1 / (2 sigma^2)), built incrementally.
    let q = (-0.5 / (sigma * sigma)).exp();
    let q2 = q * q;
    let (mut s0, mut s1, mut d0, mut d1) = (1.0, column[t], 0.0, 0.0);
    let mut w = 1.0;
    let mut step = q;
    let reach = t.max(column.len() - 1 - t);
    for k in 1..=reach {
        w *= step;
        step *= q2;
        if w < BLUR_WEIGHT_CUTOFF {
            break;
        }
        let d2 = (k * k) as f64;
        let mut add = |xv: f64| {
            s0 += w;
            s1 += w * xv;
            d0 += w * d2;
            d1 += w * d2 * xv;
        };
        if k <= t {
            add(column[t - k]);
        }
        if t + k < column.len() {
            add(column[t + k]);
        }
    }
    let value = s1 / s0;
    // d w / d sigma = w * d^2 / sigma^3; quotient rule on s1 / s0.
    let d_sigma = (d1 * s0 - s1 * d0) / (s0 * s0 * sigma.powi(3));
    (value, d_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_standard_normal, RngStream};
    use rand::Rng;

    fn column(values: &[f64]) -> TimeMatrix {
        TimeMatrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    fn mask_col(values: &[f64]) -> Mask {
        Mask::new(column(values)).unwrap()
    }

    fn all_ops() -> Vec<PerturbationOperator> {
        vec![
            PerturbationOperator::GaussianBlur { sigma_max: 1.0 },
            PerturbationOperator::GaussianBlur { sigma_max: 3.0 },
            PerturbationOperator::FadeMovingAverage { window: 2 },
            PerturbationOperator::FadePastAverage { window: 3 },
            PerturbationOperator::StaticHadamard,
        ]
    }

    #[test]
    fn moving_average_worked_value() {
        let op = PerturbationOperator::fade_moving_average(1).unwrap();
        let y = op.apply(&column(&[1.0, 5.0, 3.0]), &mask_col(&[1.0, 0.5, 1.0])).unwrap();
        assert!((y[(1, 0)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn past_average_worked_value() {
        let op = PerturbationOperator::fade_past_average(1).unwrap();
        let y = op.apply(&column(&[1.0, 5.0]), &mask_col(&[1.0, 0.0])).unwrap();
        assert_eq!(y[(1, 0)], 3.0);
    }

    #[test]
    fn blur_worked_value() {
        let op = PerturbationOperator::gaussian_blur(1.0).unwrap();
        let y = op.apply(&column(&[0.0, 1.0, 0.0]), &Mask::filled(3, 1, 0.0)).unwrap();
        let e = (-0.5f64).exp();
        assert!((y[(1, 0)] - 1.0 / (1.0 + 2.0 * e)).abs() < 1e-15);
    }

    #[test]
    fn blur_truncation_matches_full_sum() {
        let mut rng = RngStream::new(4);
        let xs = sample_standard_normal(&mut rng, 40).unwrap();
        for &sigma in &[0.3, 1.0, 2.5, 7.0] {
            for t in [0, 7, 39] {
                let (v, _) = blur_entry(&xs, t, sigma);
                let w: Vec<f64> = (0..40)
                    .map(|tp| (-((t as f64 - tp as f64).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect();
                let full = w.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
                assert!((v - full).abs() < 1e-13, "sigma {sigma} t {t}: {v} vs {full}");
            }
        }
    }

    #[test]
    fn identity_at_full_mask() {
        let mut rng = RngStream::new(1);
        let x = TimeMatrix::from_vec(9, 3, sample_standard_normal(&mut rng, 27).unwrap()).unwrap();
        for op in all_ops() {
            assert_eq!(op.apply(&x, &Mask::filled(9, 3, 1.0)).unwrap(), x, "{op:?}");
        }
    }

    #[test]
    fn derivative_special_cases() {
        let x = column(&[2.0, 2.0, 2.0]);
        let m = Mask::filled(3, 1, 0.3);
        let d = PerturbationOperator::fade_moving_average(1).unwrap().mask_derivative(&x, &m).unwrap();
        assert!(d.as_slice().iter().all(|v| v.abs() < 1e-15));
        let x = column(&[1.0, -4.0, 2.5]);
        let d = PerturbationOperator::StaticHadamard.mask_derivative(&x, &m).unwrap();
        assert_eq!(d, x);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = RngStream::new(11);
        for op in all_ops() {
            for _ in 0..20 {
                let x = TimeMatrix::from_vec(8, 2, sample_standard_normal(&mut rng, 16).unwrap()).unwrap();
                let m = TimeMatrix::from_fn(8, 2, |_, _| rng.gen_range(0.1..0.9)).unwrap();
                let d = op.mask_derivative(&x, &Mask::new(m.clone()).unwrap()).unwrap();
                let h = 1e-6;
                let plus = Mask::new(m.map(|v| v + h).unwrap()).unwrap();
                let minus = Mask::new(m.map(|v| v - h).unwrap()).unwrap();
                // Locality in M lets one shifted mask probe every entry at once.
                let (yp, ym) = (op.apply(&x, &plus).unwrap(), op.apply(&x, &minus).unwrap());
                for k in 0..16 {
                    let fd = (yp.as_slice()[k] - ym.as_slice()[k]) / (2.0 * h);
                    let a = d.as_slice()[k];
                    assert!((a - fd).abs() / (a.abs() + 1e-8) < 1e-6 || (a - fd).abs() < 1e-9, "{op:?}: {a} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn mask_locality() {
        let mut rng = RngStream::new(2);
        let x = TimeMatrix::from_vec(6, 2, sample_standard_normal(&mut rng, 12).unwrap()).unwrap();
        let m = Mask::filled(6, 2, 0.4);
        let mut other = m.values().clone();
        other[(2, 1)] = 0.9;
        let other = Mask::new(other).unwrap();
        for op in all_ops() {
            let (a, b) = (op.apply(&x, &m).unwrap(), op.apply(&x, &other).unwrap());
            for t in 0..6 {
                for i in 0..2 {
                    if (t, i) != (2, 1) {
                        assert_eq!(a[(t, i)], b[(t, i)]);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(PerturbationOperator::fade_moving_average(0).is_err());
        assert!(PerturbationOperator::fade_past_average(0).is_err());
        assert!(PerturbationOperator::gaussian_blur(0.0).is_err());
        let x = column(&[1.0, 2.0]);
        let op = PerturbationOperator::FadeMovingAverage { window: 0 };
        assert!(matches!(op.apply(&x, &Mask::filled(2, 1, 0.5)), Err(Error::InvalidOperator(_))));
    }

    #[test]
    fn shape_mismatch() {
        let op = PerturbationOperator::StaticHadamard;
        assert!(matches!(op.apply(&column(&[1.0, 2.0]), &Mask::filled(3, 1, 0.5)), Err(Error::Dimension(_))));
    }

    #[test]
    fn dynamicity_reports() {
        let mut rng = RngStream::new(3);
        let x = TimeMatrix::from_vec(10, 2, sample_standard_normal(&mut rng, 20).unwrap()).unwrap();
        let r = PerturbationOperator::StaticHadamard.check_dynamicity(&x, 5, 0).unwrap();
        assert_eq!(r.nonzero_offsets(1e-9), vec![0]);
        assert!(!r.is_dynamic(1e-9));
        let r = PerturbationOperator::fade_moving_average(1).unwrap().check_dynamicity(&x, 5, 0).unwrap();
        assert_eq!(r.nonzero_offsets(1e-9), vec![-1, 0, 1]);
        let r = PerturbationOperator::fade_past_average(2).unwrap().check_dynamicity(&x, 5, 1).unwrap();
        assert_eq!(r.nonzero_offsets(1e-9), vec![-2, -1, 0]);
        let r = PerturbationOperator::gaussian_blur(1.0).unwrap().check_dynamicity(&x, 5, 1).unwrap();
        assert!(r.is_dynamic(1e-9));
        assert!(r.nonzero_offsets(1e-9).contains(&-1) && r.nonzero_offsets(1e-9).contains(&1));
    }

    #[test]
    fn declared_windows() {
        assert_eq!(PerturbationOperator::GaussianBlur { sigma_max: 1.0 }.declared_window(50), (49, 49));
        assert_eq!(PerturbationOperator::FadeMovingAverage { window: 3 }.declared_window(50), (3, 3));
        assert_eq!(PerturbationOperator::FadePastAverage { window: 6 }.declared_window(50), (6, 0));
        assert_eq!(PerturbationOperator::StaticHadamard.declared_window(50), (0, 0));
        assert!(!PerturbationOperator::StaticHadamard.is_dynamic());
    }

    #[test]
    fn json_config_shape() {
        let op: PerturbationOperator = serde_json::from_str(r#"{"kind": "gaussian-blur", "sigma_max": 1.0}"#).unwrap();
        assert_eq!(op, PerturbationOperator::GaussianBlur { sigma_max: 1.0 });
        let op: PerturbationOperator = serde_json::from_str(r#"{"kind": "fade-past-average", "window": 6}"#).unwrap();
        assert_eq!(op, PerturbationOperator::FadePastAverage { window: 6 });
        let text = serde_json::to_string(&PerturbationOperator::StaticHadamard).unwrap();
        assert_eq!(text, r#"{"kind":"static-hadamard"}"#);
    }
}
