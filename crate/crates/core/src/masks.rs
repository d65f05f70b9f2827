//! Masks, their losses, and the momentum-descent fitting loop.
//!
//! A fit minimizes `L_e(M) + lambda_a * L_a(M) + lambda_c * L_c(M)` where
//! `L_e` compares the model's prediction on the perturbed input with the
//! unperturbed prediction, `L_a` pulls the sorted mask toward a step vector
//! with a fraction `a` of ones, and `L_c` is the total variation in time.
//! `lambda_a` grows geometrically from `lambda_0` to `delta * lambda_0` over
//! the run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::SaliencyTarget;
use crate::error::{Error, Result};
use crate::models::{DifferentiableModel, OutputKind};
use crate::numerics::{argsort_ascending, TimeMatrix};
use crate::perturbations::PerturbationOperator;

/// Floor applied to probabilities inside every logarithm of the
/// classification loss.
pub const PROBABILITY_FLOOR: f64 = 1e-8;

/// A `T x d` matrix with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask(TimeMatrix);

impl Mask {
    pub fn new(values: TimeMatrix) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRequest(format!("mask entry {v} outside [0, 1]")));
        }
        Ok(Mask(values))
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "mask fill value {value} outside [0, 1]");
        Mask(TimeMatrix::filled(rows, cols, value))
    }

    /// Projects arbitrary values onto `[0, 1]`.
    pub fn clamped(values: TimeMatrix) -> Self {
        let mut values = values;
        values.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Mask(values)
    }

    /// Binary mask that is 1 exactly on the target's salient set.
    pub fn indicator(target: &SaliencyTarget) -> Self {
        Mask(target.indicator())
    }

    pub fn values(&self) -> &TimeMatrix {
        &self.0
    }

    pub fn into_values(self) -> TimeMatrix {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.0[(t, i)]
    }

    /// `1 - M`.
    pub fn complement(&self) -> Mask {
        Mask::clamped(self.0.map(|v| 1.0 - v).expect("finite"))
    }

    /// Fraction of entries at or above `threshold`.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        self.as_slice().iter().filter(|&&v| v >= threshold).count() as f64 / self.len() as f64
    }

    /// 8-bit portable graymap (binary P5) with one pixel per entry, time along
    /// the horizontal axis and features down the vertical one. White is 1.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (rows, cols) = self.shape();
        let mut out = format!("P5\n{rows} {cols}\n255\n").into_bytes();
        for i in 0..cols {
            for t in 0..rows {
                out.push((self.get(t, i) * 255.0).round() as u8);
            }
        }
        out
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        TimeMatrix::from_rows(&rows)
            .and_then(Mask::new)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Keep the salient inputs: minimize the error of `Pi_M(X)`.
    Preserve,
    /// Remove the salient inputs: maximize the error of `Pi_{1-M}(X)`.
    Delete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Summed squared difference between perturbed and unperturbed outputs.
    Regression,
    /// Cross-entropy of the perturbed prediction against the unperturbed one.
    Classification,
}

impl From<OutputKind> for LossKind {
    fn from(kind: OutputKind) -> Self {
        match kind {
            OutputKind::Regression => LossKind::Regression,
            OutputKind::Probabilities => LossKind::Classification,
        }
    }
}

/// How each loss term is aggregated over its entries inside the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScale {
    /// Plain sums over outputs, mask entries and time differences.
    Sum,
    /// Each term divided by its number of summands: outputs for the error,
    /// mask entries for the area term, time differences for connectedness.
    Mean,
}

/// Hyperparameters of one mask fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskFitConfig {
    pub area: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lambda_0: f64,
    pub dilation: f64,
    pub lambda_c: f64,
    pub epochs: usize,
    pub mode: FitMode,
    /// Defaults to the loss matching the model's output kind.
    pub loss_kind: Option<LossKind>,
    /// Aggregation used by the optimizer. Reported loss values are always
    /// plain sums.
    pub loss_scale: LossScale,
}

impl Default for MaskFitConfig {
    fn default() -> Self {
        MaskFitConfig {
            area: 0.05,
            learning_rate: 1.0,
            momentum: 1.0,
            lambda_0: 1.0,
            dilation: 1000.0,
            lambda_c: 0.0,
            epochs: 1000,
            mode: FitMode::Preserve,
            loss_kind: None,
            loss_scale: LossScale::Mean,
        }
    }
}

impl MaskFitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.area)
            && self.learning_rate > 0.0
            && self.momentum >= 0.0
            && self.lambda_0 > 0.0
            && self.dilation >= 1.0
            && self.lambda_c >= 0.0
            && [self.learning_rate, self.momentum, self.lambda_0, self.dilation, self.lambda_c]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mask fit config {self:?}")))
        }
    }

    /// `lambda_a` at the start of epoch `n` (0-based).
    pub fn lambda_a_at(&self, n: usize) -> f64 {
        if self.epochs == 0 {
            return self.lambda_0;
        }
        self.lambda_0 * (n as f64 * self.dilation.ln() / self.epochs as f64).exp()
    }

    fn loss_kind_for(&self, model: &dyn DifferentiableModel) -> LossKind {
        self.loss_kind.unwrap_or_else(|| model.output_kind().into())
    }
}

/// Area grid and error threshold of the extremal-mask search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalConfig {
    pub area_grid: Vec<f64>,
    pub epsilon: f64,
    /// When the error is a cross-entropy against the model's own prediction,
    /// `L_e(M) >= L_e(1)` for every mask (up to the probability floor), so a
    /// threshold below that bound can never be met. With this flag set, such
    /// searches fit only the largest area, which is what the full search
    /// would return.
    #[serde(default = "default_true")]
    pub skip_unreachable: bool,
}

fn default_true() -> bool {
    true
}

impl ExtremalConfig {
    pub fn new(area_grid: Vec<f64>, epsilon: f64) -> Self {
        ExtremalConfig {
            area_grid,
            epsilon,
            skip_unreachable: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.area_grid)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("area grid is empty".into()));
    }
    if grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("area grid must be strictly ascending in (0, 1]: {grid:?}")));
    }
    Ok(())
}

/// `{start + k * step : k in 0..count}`, rounded to 12 decimals so that grid
/// values print cleanly.
pub fn area_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect()
}

/// The three loss terms at one mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Error of the perturbed prediction, evaluated at `M` (preserve) or at
    /// `1 - M` (delete). Always reported with its natural, unflipped sign.
    pub error: f64,
    pub area: f64,
    pub connectedness: f64,
}

/// Outcome of [`fit_mask`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mask: Mask,
    pub area: f64,
    /// Error term at the returned mask (see [`LossTerms::error`]).
    pub final_error: f64,
    pub final_lambda_a: f64,
    /// Loss terms at the start of every epoch.
    pub loss_history: Vec<LossTerms>,
    pub config: MaskFitConfig,
    pub operator: PerturbationOperator,
}

/// `r_a`: `round(a * n)` ones preceded by zeros.
pub fn area_reference(n: usize, area: f64) -> Vec<f64> {
    let ones = ((area * n as f64).round() as usize).min(n);
    let mut r = vec![0.0; n - ones];
    r.resize(n, 1.0);
    r
}

/// `||vecsort(M) - r_a||^2`.
pub fn area_loss(mask: &Mask, area: f64) -> f64 {
    area_loss_and_gradient(mask, area, false).0
}

/// Area loss and, optionally, its gradient `2 (m_j - r_a[rank(j)])` with
/// ranks taken from the stable ascending sort.
fn area_loss_and_gradient(mask: &Mask, area: f64, want_grad: bool) -> (f64, Vec<f64>) {
    let m = mask.as_slice();
    let r = area_reference(m.len(), area);
    let order = argsort_ascending(m);
    let mut loss = 0.0;
    let mut grad = if want_grad { vec![0.0; m.len()] } else { Vec::new() };
    for (rank, &j) in order.iter().enumerate() {
        let diff = m[j] - r[rank];
        loss += diff * diff;
        if want_grad {
            grad[j] = 2.0 * diff;
        }
    }
    (loss, grad)
}

/// `sum_t sum_i |m_{t+1,i} - m_{t,i}|`.
pub fn connectedness_loss(mask: &Mask) -> f64 {
    connectedness_loss_and_gradient(mask, false).0
}

fn connectedness_loss_and_gradient(mask: &Mask, want_grad: bool) -> (f64, Vec<f64>) {
    let (rows, cols) = mask.shape();
    let m = mask.as_slice();
    let mut loss = 0.0;
    let mut grad = if want_grad { vec![0.0; m.len()] } else { Vec::new() };
    for t in 0..rows.saturating_sub(1) {
        for i in 0..cols {
            let (a, b) = (t * cols + i, (t + 1) * cols + i);
            let diff = m[b] - m[a];
            loss += diff.abs();
            if want_grad && diff != 0.0 {
                let s = diff.signum();
                grad[b] += s;
                grad[a] -= s;
            }
        }
    }
    (loss, grad)
}

/// Error between a reference prediction and a perturbed one, plus the
/// gradient with respect to the perturbed prediction.
fn prediction_error(kind: LossKind, reference: &TimeMatrix, perturbed: &TimeMatrix) -> Result<(f64, TimeMatrix)> {
    perturbed.expect_shape(reference.shape(), "perturbed prediction")?;
    let (rows, cols) = reference.shape();
    let mut upstream = vec![0.0; rows * cols];
    let mut loss = 0.0;
    match kind {
        LossKind::Regression => {
            for (k, (&p, &r)) in perturbed.as_slice().iter().zip(reference.as_slice()).enumerate() {
                loss += (p - r) * (p - r);
                upstream[k] = 2.0 * (p - r);
            }
        }
        LossKind::Classification => {
            let floored = |q: f64| -> (f64, f64) {
                // ln max(q, floor) and its derivative in q.
                if q > PROBABILITY_FLOOR {
                    (q.ln(), 1.0 / q)
                } else {
                    (PROBABILITY_FLOOR.ln(), 0.0)
                }
            };
            for (k, (&q, &p)) in perturbed.as_slice().iter().zip(reference.as_slice()).enumerate() {
                check_probability(p)?;
                check_probability(q)?;
                let (lq, dq) = floored(q);
                if cols == 1 {
                    // Binary head: expand p to the two-class vector (p, 1 - p).
                    let (lr, dr) = floored(1.0 - q);
                    loss -= p * lq + (1.0 - p) * lr;
                    upstream[k] = -p * dq + (1.0 - p) * dr;
                } else {
                    loss -= p * lq;
                    upstream[k] = -p * dq;
                }
            }
        }
    }
    Ok((loss, TimeMatrix::from_vec(rows, cols, upstream)?))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Contract(format!("expected a probability, got {p}")))
    }
}

/// Evaluates the fit objective for one model, operator and input. The
/// unperturbed prediction is computed once at construction.
pub struct MaskObjective<'a> {
    model: &'a dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &'a TimeMatrix,
    reference: TimeMatrix,
    kind: LossKind,
}

impl<'a> MaskObjective<'a> {
    pub fn new(
        model: &'a dyn DifferentiableModel,
        op: PerturbationOperator,
        x: &'a TimeMatrix,
        kind: LossKind,
    ) -> Result<Self> {
        op.validate()?;
        if kind == LossKind::Classification && model.output_kind() != OutputKind::Probabilities {
            return Err(Error::Contract("classification loss needs a probability model".into()));
        }
        let reference = model.forward(x)?;
        Ok(MaskObjective {
            model,
            op,
            x,
            reference,
            kind,
        })
    }

    pub fn reference(&self) -> &TimeMatrix {
        &self.reference
    }

    /// Error of the prediction on `Pi_M(X)`.
    pub fn error(&self, mask: &Mask) -> Result<f64> {
        let perturbed = self.model.forward(&self.op.apply(self.x, mask)?)?;
        Ok(prediction_error(self.kind, &self.reference, &perturbed)?.0)
    }

    /// Error at `mask` and its gradient with respect to the mask entries.
    pub fn error_and_gradient(&self, mask: &Mask) -> Result<(f64, TimeMatrix)> {
        let (xp, dpi) = self.op.apply_with_derivative(self.x, mask)?;
        let mut loss = 0.0;
        let (_, gx) = self.model.forward_and_vjp(&xp, &mut |y| {
            let (l, u) = prediction_error(self.kind, &self.reference, y)?;
            loss = l;
            Ok(u)
        })?;
        let grad = gx.as_slice().iter().zip(dpi.as_slice()).map(|(a, b)| a * b).collect();
        Ok((loss, TimeMatrix::from_vec(gx.rows(), gx.cols(), grad)?))
    }

    /// Loss terms and gradient of the full objective at `mask` for the given
    /// area weight.
    pub fn total(&self, mask: &Mask, cfg: &MaskFitConfig, lambda_a: f64) -> Result<(LossTerms, TimeMatrix)> {
        mask.values().expect_shape(self.x.shape(), "mask vs input")?;
        let (error, mut grad) = match cfg.mode {
            FitMode::Preserve => self.error_and_gradient(mask)?,
            // d/dM [-L_e(1 - M)] = +L_e'(1 - M).
            FitMode::Delete => self.error_and_gradient(&mask.complement())?,
        };
        let (area, ga) = area_loss_and_gradient(mask, cfg.area, true);
        let (connectedness, gc) = if cfg.lambda_c > 0.0 {
            connectedness_loss_and_gradient(mask, true)
        } else {
            (connectedness_loss(mask), vec![0.0; mask.len()])
        };
        let (se, sa, sc) = match cfg.loss_scale {
            LossScale::Sum => (1.0, 1.0, 1.0),
            LossScale::Mean => {
                let (rows, cols) = mask.shape();
                (
                    1.0 / self.reference.len() as f64,
                    1.0 / mask.len() as f64,
                    1.0 / (rows.saturating_sub(1).max(1) * cols) as f64,
                )
            }
        };
        for ((g, a), c) in grad.as_mut_slice().iter_mut().zip(&ga).zip(&gc) {
            *g = se * *g + lambda_a * sa * a + cfg.lambda_c * sc * c;
        }
        Ok((
            LossTerms {
                error,
                area,
                connectedness,
            },
            grad,
        ))
    }
}

/// Squared error between `f(Pi_M(X))` and `f(X)`.
pub fn error_loss_regression(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    mask: &Mask,
) -> Result<f64> {
    MaskObjective::new(model, op, x, LossKind::Regression)?.error(mask)
}

/// Cross-entropy of `f(Pi_M(X))` against the target distribution `f(X)`.
pub fn error_loss_classification(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    mask: &Mask,
) -> Result<f64> {
    MaskObjective::new(model, op, x, LossKind::Classification)?.error(mask)
}

/// Error loss of the kind matching the model's output.
pub fn error_loss(model: &dyn DifferentiableModel, op: PerturbationOperator, x: &TimeMatrix, mask: &Mask) -> Result<f64> {
    MaskObjective::new(model, op, x, model.output_kind().into())?.error(mask)
}

/// Gradient of `L_e + lambda_a L_a + lambda_c L_c` (or the deletion
/// objective) with respect to the mask.
pub fn total_gradient(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    mask: &Mask,
    cfg: &MaskFitConfig,
    lambda_a: f64,
) -> Result<TimeMatrix> {
    let objective = MaskObjective::new(model, op, x, cfg.loss_kind_for(model))?;
    Ok(objective.total(mask, cfg, lambda_a)?.1)
}

/// Momentum descent from the all-0.5 mask with projection onto `[0, 1]`
/// after every step.
pub fn fit_mask(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    cfg: &MaskFitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let objective = MaskObjective::new(model, op, x, cfg.loss_kind_for(model))?;
    let (rows, cols) = x.shape();
    let mut mask = Mask::filled(rows, cols, 0.5);
    let mut velocity = vec![0.0; rows * cols];
    let mut lambda_a = cfg.lambda_0;
    let growth = (cfg.dilation.ln() / cfg.epochs.max(1) as f64).exp();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (terms, grad) = objective.total(&mask, cfg, lambda_a)?;
        if !(terms.error.is_finite() && terms.area.is_finite() && terms.connectedness.is_finite())
            || grad.as_slice().iter().any(|g| !g.is_finite())
        {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(terms);
        let mut next = mask.into_values();
        for ((m, v), g) in next.as_mut_slice().iter_mut().zip(&mut velocity).zip(grad.as_slice()) {
            *v = cfg.learning_rate * g + cfg.momentum * *v;
            *m = (*m - *v).clamp(0.0, 1.0);
        }
        mask = Mask(next);
        lambda_a *= growth;
    }
    if cfg.epochs > 0 {
        // Recompute from the closed form so the endpoint carries no drift.
        lambda_a = cfg.lambda_a_at(cfg.epochs);
    }

    let final_error = match cfg.mode {
        FitMode::Preserve => objective.error(&mask)?,
        FitMode::Delete => objective.error(&mask.complement())?,
    };
    if !final_error.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(FitResult {
        mask,
        area: cfg.area,
        final_error,
        final_lambda_a: lambda_a,
        loss_history: history,
        config: cfg.clone(),
        operator: op,
    })
}

/// [`fit_mask`] in deletion mode.
pub fn fit_mask_deletion(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    cfg: &MaskFitConfig,
) -> Result<FitResult> {
    if cfg.mode != FitMode::Delete {
        return Err(Error::Config("fit_mask_deletion needs mode = delete".into()));
    }
    fit_mask(model, op, x, cfg)
}

/// Final error of one fitted area in a search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaCandidate {
    pub area: f64,
    pub final_error: f64,
}

/// Result of a search over mask areas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaSearch {
    pub fit: FitResult,
    /// False when no grid area met the extremal threshold and the largest
    /// area was returned instead.
    pub converged: bool,
    /// Every area fitted, in the order tried.
    pub candidates: Vec<AreaCandidate>,
    /// Grid areas not fitted because the threshold was provably out of
    /// reach for them.
    #[serde(default)]
    pub skipped_areas: Vec<f64>,
}

fn with_area(base: &MaskFitConfig, area: f64) -> MaskFitConfig {
    MaskFitConfig { area, ..base.clone() }
}

/// Fits areas in ascending order and returns the first whose final error is
/// below `epsilon`; if none is, returns the largest area flagged unconverged.
pub fn fit_extremal_mask(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    base: &MaskFitConfig,
    ext: &ExtremalConfig,
) -> Result<AreaSearch> {
    ext.validate()?;
    let mut grid = ext.area_grid.as_slice();
    let mut skipped = Vec::new();
    if ext.skip_unreachable && threshold_unreachable(model, op, x, base, ext.epsilon)? {
        let (below, top) = grid.split_at(grid.len() - 1);
        skipped = below.to_vec();
        grid = top;
    }
    let mut candidates = Vec::with_capacity(grid.len());
    let mut last = None;
    for &area in grid {
        let fit = fit_mask(model, op, x, &with_area(base, area))?;
        candidates.push(AreaCandidate {
            area,
            final_error: fit.final_error,
        });
        if fit.final_error < ext.epsilon {
            return Ok(AreaSearch {
                fit,
                converged: true,
                candidates,
                skipped_areas: skipped,
            });
        }
        last = Some(fit);
    }
    Ok(AreaSearch {
        fit: last.expect("grid is nonempty"),
        converged: false,
        candidates,
        skipped_areas: skipped,
    })
}

/// True when `epsilon` lies below the lower bound that Gibbs' inequality
/// puts on a preserve-mode cross-entropy error. Each floored output term can
/// undercut the bound by at most the floor itself; ten times that is kept
/// as margin.
pub fn threshold_unreachable(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    base: &MaskFitConfig,
    epsilon: f64,
) -> Result<bool> {
    if base.mode != FitMode::Preserve || base.loss_kind_for(model) != LossKind::Classification {
        return Ok(false);
    }
    let objective = MaskObjective::new(model, op, x, LossKind::Classification)?;
    let (rows, cols) = x.shape();
    let at_identity = objective.error(&Mask::filled(rows, cols, 1.0))?;
    let margin = 10.0 * PROBABILITY_FLOOR * objective.reference().len() as f64;
    Ok(epsilon < at_identity - margin)
}

/// Fits every area of the grid and keeps the mask with the lowest final
/// error (ties go to the smaller area). Areas are fitted in parallel.
pub fn fit_lowest_error_mask(
    model: &dyn DifferentiableModel,
    op: PerturbationOperator,
    x: &TimeMatrix,
    base: &MaskFitConfig,
    area_grid: &[f64],
) -> Result<AreaSearch> {
    validate_grid(area_grid)?;
    let fits = area_grid
        .par_iter()
        .map(|&a| fit_mask(model, op, x, &with_area(base, a)))
        .collect::<Result<Vec<_>>>()?;
    let candidates = fits
        .iter()
        .map(|f| AreaCandidate {
            area: f.area,
            final_error: f.final_error,
        })
        .collect();
    let best = fits
        .into_iter()
        .reduce(|best, f| if f.final_error < best.final_error { f } else { best })
        .expect("grid is nonempty");
    Ok(AreaSearch {
        fit: best,
        converged: true,
        candidates,
        skipped_areas: Vec::new(),
    })
}
