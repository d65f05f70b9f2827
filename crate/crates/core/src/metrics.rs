//! Scores for fitted masks and attribution maps.
//!
//! Two families live here. Information and entropy read a mask as a set of
//! independent Bernoulli probabilities and need no ground truth. The
//! detection metrics (precision/recall areas, ROC and PR areas) compare a
//! mask against a known salient set, and the prediction-shift metrics measure
//! how much the model's output moves when the top-ranked inputs are erased.

use serde::{Deserialize, Serialize};

use crate::datagen::{IndexSet, SaliencyTarget};
use crate::error::{Error, Result};
use crate::masks::{Mask, PROBABILITY_FLOOR};
use crate::models::{DifferentiableModel, OutputKind};
use crate::numerics::TimeMatrix;

/// Upper clamp `1 - METRIC_CLAMP` applied to mask values inside
/// `ln(1 - m)`.
pub const METRIC_CLAMP: f64 = 1e-6;

fn check_set(mask: &Mask, set: &IndexSet) -> Result<()> {
    let (rows, cols) = mask.shape();
    set.check_bounds(rows, cols)
}

/// `I_M(A) = -sum_{(t,i) in A} ln(1 - m_{t,i})`.
pub fn mask_information(mask: &Mask, set: &IndexSet) -> Result<f64> {
    check_set(mask, set)?;
    Ok(set
        .iter()
        .map(|(t, i)| -(1.0 - mask.get(t, i).min(1.0 - METRIC_CLAMP)).ln())
        .sum())
}

fn binary_entropy(m: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(m) + term(1.0 - m)
}

/// `S_M(A) = -sum_{(t,i) in A} [m ln m + (1 - m) ln(1 - m)]` with
/// `0 ln 0 = 0`.
pub fn mask_entropy(mask: &Mask, set: &IndexSet) -> Result<f64> {
    check_set(mask, set)?;
    Ok(set.iter().map(|(t, i)| binary_entropy(mask.get(t, i))).sum())
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::UndefinedRatio(format!("{what} of the whole mask is zero")))
    }
}

/// `I_M(A)` as a fraction of the information of the whole mask.
pub fn normalized_information(mask: &Mask, set: &IndexSet) -> Result<f64> {
    let (rows, cols) = mask.shape();
    let total = mask_information(mask, &IndexSet::full(rows, cols))?;
    ratio(mask_information(mask, set)?, total, "information")
}

/// `S_M(A)` as a fraction of the entropy of the whole mask.
pub fn normalized_entropy(mask: &Mask, set: &IndexSet) -> Result<f64> {
    let (rows, cols) = mask.shape();
    let total = mask_entropy(mask, &IndexSet::full(rows, cols))?;
    ratio(mask_entropy(mask, set)?, total, "entropy")
}

/// Min-max normalization of a score matrix into a mask. A constant matrix
/// carries no ranking and becomes the all-0.5 mask.
pub fn scores_to_mask(scores: &TimeMatrix) -> Mask {
    let s = scores.as_slice();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (rows, cols) = scores.shape();
    if hi <= lo {
        return Mask::filled(rows, cols, 0.5);
    }
    let range = hi - lo;
    Mask::clamped(scores.map(|v| (v - lo) / range).expect("finite scores"))
}

/// Ascending detection thresholds strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid(Vec<f64>);

impl ThresholdGrid {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty()
            || thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0))
            || thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "thresholds must be nonempty, ascending and inside (0, 1): {thresholds:?}"
            )));
        }
        Ok(ThresholdGrid(thresholds))
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ThresholdGrid {
    /// `{0.01, 0.02, ..., 0.99}`.
    fn default() -> Self {
        ThresholdGrid((1..100).map(|k| k as f64 / 100.0).collect())
    }
}

/// Precision and recall of the detector `{m >= tau}` at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionPoint {
    pub threshold: f64,
    /// `None` when nothing is selected.
    pub precision: Option<f64>,
    pub recall: f64,
}

fn check_target(mask: &Mask, target: &SaliencyTarget) -> Result<()> {
    mask.values().expect_shape(target.shape(), "mask vs target")?;
    if target.salient().is_empty() {
        return Err(Error::InvalidTarget("salient set is empty".into()));
    }
    Ok(())
}

/// Precision/recall curve of the mask as a detector of the salient set.
pub fn detection_curve(mask: &Mask, target: &SaliencyTarget, grid: &ThresholdGrid) -> Result<Vec<DetectionPoint>> {
    check_target(mask, target)?;
    let (_, cols) = mask.shape();
    let n_salient = target.salient().len() as f64;
    Ok(grid
        .thresholds()
        .iter()
        .map(|&tau| {
            let (mut selected, mut hits) = (0usize, 0usize);
            for (k, &m) in mask.as_slice().iter().enumerate() {
                if m >= tau {
                    selected += 1;
                    if target.contains(k / cols, k % cols) {
                        hits += 1;
                    }
                }
            }
            DetectionPoint {
                threshold: tau,
                precision: (selected > 0).then(|| hits as f64 / selected as f64),
                recall: hits as f64 / n_salient,
            }
        })
        .collect())
}

/// Trapezoidal mean of `y` over `x`; a single point is its own mean.
fn trapezoid_mean(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => 0.0,
        [(_, y)] => *y,
        _ => {
            let area: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
            area / (points[points.len() - 1].0 - points[0].0)
        }
    }
}

/// Areas under the precision and recall curves, each divided by the length
/// of its integration range. Thresholds that select nothing are left out of
/// the precision integral; if every threshold selects nothing, AUP is 0.
pub fn aup_aur(mask: &Mask, target: &SaliencyTarget, grid: &ThresholdGrid) -> Result<(f64, f64)> {
    let curve = detection_curve(mask, target, grid)?;
    let precision: Vec<(f64, f64)> = curve
        .iter()
        .filter_map(|p| p.precision.map(|v| (p.threshold, v)))
        .collect();
    let recall: Vec<(f64, f64)> = curve.iter().map(|p| (p.threshold, p.recall)).collect();
    Ok((trapezoid_mean(&precision), trapezoid_mean(&recall)))
}

/// Area under the ROC curve (ties by midrank) and average precision, using
/// the mask values as saliency scores.
pub fn auroc_auprc(mask: &Mask, target: &SaliencyTarget) -> Result<(f64, f64)> {
    mask.values().expect_shape(target.shape(), "mask vs target")?;
    let (_, cols) = mask.shape();
    let labels: Vec<bool> = (0..mask.len()).map(|k| target.contains(k / cols, k % cols)).collect();
    ranking_areas(mask.as_slice(), &labels)
}

/// AUROC and average precision of `scores` against binary `labels`.
pub fn ranking_areas(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidTarget(
            "ranking areas need both salient and non-salient entries".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Mann-Whitney statistic from midranks.
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        pos_rank_sum += midrank * order[start..=end].iter().filter(|&&k| labels[k]).count() as f64;
        start = end + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let auroc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);

    // Average precision: sum over distinct thresholds, highest first.
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut end = order.len();
    while end > 0 {
        let mut start = end - 1;
        while start > 0 && scores[order[start - 1]] == scores[order[end - 1]] {
            start -= 1;
        }
        let group_tp = order[start..end].iter().filter(|&&k| labels[k]).count();
        tp += group_tp;
        seen += end - start;
        ap += (group_tp as f64 / p) * (tp as f64 / seen as f64);
        end = start;
    }
    Ok((auroc, ap))
}

/// Replaces the `round(fraction * T * d)` entries with the highest mask
/// values (ties by row-major index) by their feature's mean over time.
pub fn replace_top_fraction_by_time_average(x: &TimeMatrix, mask: &Mask, fraction: f64) -> Result<TimeMatrix> {
    x.expect_shape(mask.shape(), "input vs mask")?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidRequest(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = x.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    let m = mask.as_slice();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
    let means = x.column_means();
    let cols = x.cols();
    let mut out = x.clone();
    for &k in &order[..count] {
        out.as_mut_slice()[k] = means[k % cols];
    }
    Ok(out)
}

/// Change of a binary classifier's prediction under a perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionShift {
    /// Log-loss of the perturbed probability against the class predicted on
    /// the original input.
    pub cross_entropy: f64,
    pub flipped: bool,
}

fn single_probability(model: &dyn DifferentiableModel, x: &TimeMatrix) -> Result<f64> {
    if model.output_kind() != OutputKind::Probabilities {
        return Err(Error::Contract("prediction shift needs a probability model".into()));
    }
    let y = model.forward(x)?;
    if y.len() != 1 {
        return Err(Error::Contract(format!(
            "prediction shift needs a single probability, model returned {}x{}",
            y.rows(),
            y.cols()
        )));
    }
    let p = y[(0, 0)];
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("model output {p} is not a probability")));
    }
    Ok(p)
}

/// Cross-entropy and class flip between `f(X)` and `f(X_tilde)`, with the
/// class decided at 0.5.
pub fn prediction_shift(model: &dyn DifferentiableModel, x: &TimeMatrix, x_tilde: &TimeMatrix) -> Result<PredictionShift> {
    let p = single_probability(model, x)?;
    let q = single_probability(model, x_tilde)?.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
    let class = p >= 0.5;
    let cross_entropy = if class { -q.ln() } else { -(1.0 - q).ln() };
    Ok(PredictionShift {
        cross_entropy,
        flipped: class != (q >= 0.5),
    })
}

/// Mean cross-entropy and fraction of unflipped predictions.
pub fn shift_summary(shifts: &[PredictionShift]) -> (f64, f64) {
    let n = shifts.len() as f64;
    let ce = shifts.iter().map(|s| s.cross_entropy).sum::<f64>() / n;
    let acc = shifts.iter().filter(|s| !s.flipped).count() as f64 / n;
    (ce, acc)
}

/// Fraction of entries on which two masks agree after binarizing at 0.5.
pub fn pairwise_mask_accuracy(a: &Mask, b: &Mask) -> Result<f64> {
    a.values().expect_shape(b.shape(), "mask pair")?;
    let agree = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .filter(|(x, y)| (**x >= 0.5) == (**y >= 0.5))
        .count();
    Ok(agree as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FinalStep;
    use crate::numerics::RngStream;
    use rand::Rng;

    fn mask(rows: usize, cols: usize, v: &[f64]) -> Mask {
        Mask::new(TimeMatrix::from_vec(rows, cols, v.to_vec()).unwrap()).unwrap()
    }

    /// Ten entries in a 2x5 mask; `A` is the whole thing.
    fn worked(values: &[f64]) -> (Mask, IndexSet) {
        (mask(2, 5, values), IndexSet::full(2, 5))
    }

    #[test]
    fn worked_example_information_and_entropy() {
        let (ma, a) = worked(&[0.9, 0.9, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (mb, b) = worked(&[0.5; 10]);
        assert!((mask_information(&ma, &a).unwrap() - 3.0 * 10f64.ln()).abs() < 1e-12);
        assert!((mask_information(&ma, &a).unwrap() - 6.908).abs() < 1e-3);
        assert!((mask_information(&mb, &b).unwrap() - 6.931).abs() < 1e-3);
        assert!((mask_entropy(&ma, &a).unwrap() - 0.975).abs() < 1e-3);
        assert!((mask_entropy(&mb, &b).unwrap() - 6.931).abs() < 1e-3);
    }

    #[test]
    fn degenerate_masks() {
        let full = IndexSet::full(3, 3);
        assert_eq!(mask_information(&Mask::filled(3, 3, 0.0), &full).unwrap(), 0.0);
        let binary = mask(3, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(mask_entropy(&binary, &full).unwrap(), 0.0);
        // m = 1 is clamped inside the log.
        let one = mask_information(&Mask::filled(1, 1, 1.0), &IndexSet::full(1, 1)).unwrap();
        assert!((one - 1e6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn out_of_bounds_set() {
        let set: IndexSet = [(3, 0)].into_iter().collect();
        assert!(matches!(
            mask_information(&Mask::filled(3, 1, 0.5), &set),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn normalized_metrics() {
        let m = mask(2, 2, &[0.1, 0.7, 0.4, 0.9]);
        assert!((normalized_information(&m, &IndexSet::full(2, 2)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(normalized_entropy(&m, &IndexSet::new()).unwrap(), 0.0);
        let a: IndexSet = [(0, 1), (1, 1)].into_iter().collect();
        let expected = mask_information(&m, &a).unwrap() / mask_information(&m, &IndexSet::full(2, 2)).unwrap();
        assert_eq!(normalized_information(&m, &a).unwrap(), expected);
        assert!(matches!(
            normalized_information(&Mask::filled(2, 2, 0.0), &a),
            Err(Error::UndefinedRatio(_))
        ));
        assert!(matches!(
            normalized_entropy(&Mask::filled(2, 2, 1.0), &a),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn scores_to_mask_examples() {
        let r = TimeMatrix::from_vec(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let m = scores_to_mask(&r);
        let expected = [0.0, 2.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in m.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(scores_to_mask(&TimeMatrix::filled(2, 3, -4.0)), Mask::filled(2, 3, 0.5));
        let unit = TimeMatrix::from_vec(1, 3, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(scores_to_mask(&unit).values(), &unit);
    }

    fn target(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> SaliencyTarget {
        SaliencyTarget::new(pairs.iter().copied().collect(), rows, cols).unwrap()
    }

    #[test]
    fn aup_aur_fixtures() {
        let tgt = target(4, 4, &[(0, 0), (1, 2), (3, 3)]);
        let grid = ThresholdGrid::default();
        let (aup, aur) = aup_aur(&Mask::indicator(&tgt), &tgt, &grid).unwrap();
        assert!((aup - 1.0).abs() < 1e-12 && (aur - 1.0).abs() < 1e-12);
        let (aup, aur) = aup_aur(&Mask::filled(4, 4, 1.0), &tgt, &grid).unwrap();
        assert!((aup - 3.0 / 16.0).abs() < 1e-12);
        assert!((aur - 1.0).abs() < 1e-12);
        // Nothing selected anywhere: no precision points.
        let (aup, aur) = aup_aur(&Mask::filled(4, 4, 0.0), &tgt, &grid).unwrap();
        assert_eq!((aup, aur), (0.0, 0.0));
        let empty = SaliencyTarget::new(IndexSet::new(), 4, 4).unwrap();
        assert!(matches!(aup_aur(&Mask::filled(4, 4, 1.0), &empty, &grid), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn aup_aur_brute_force() {
        let mut rng = RngStream::new(3);
        let grid = ThresholdGrid::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        for _ in 0..50 {
            let m = Mask::new(TimeMatrix::from_fn(4, 4, |_, _| rng.gen_range(0.0..1.0)).unwrap()).unwrap();
            let pairs: Vec<(usize, usize)> = (0..16)
                .filter(|_| rng.gen_bool(0.3))
                .map(|k| (k / 4, k % 4))
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let tgt = target(4, 4, &pairs);
            let mut p = Vec::new();
            let mut r = Vec::new();
            for &tau in grid.thresholds() {
                let sel: Vec<(usize, usize)> =
                    (0..16).map(|k| (k / 4, k % 4)).filter(|&(t, i)| m.get(t, i) >= tau).collect();
                let hits = sel.iter().filter(|&&(t, i)| tgt.contains(t, i)).count() as f64;
                if !sel.is_empty() {
                    p.push((tau, hits / sel.len() as f64));
                }
                r.push(hits / pairs.len() as f64);
            }
            let aur = (0.2 * (r[0] + 2.0 * r[1] + 2.0 * r[2] + r[3]) / 2.0) / 0.6;
            let aup = match p.len() {
                0 => 0.0,
                1 => p[0].1,
                _ => {
                    let area: f64 = p.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
                    area / (p[p.len() - 1].0 - p[0].0)
                }
            };
            let (got_p, got_r) = aup_aur(&m, &tgt, &grid).unwrap();
            assert!((got_p - aup).abs() < 1e-12);
            assert!((got_r - aur).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_examples() {
        let tgt = target(3, 3, &[(0, 0), (2, 1)]);
        let (roc, pr) = auroc_auprc(&Mask::indicator(&tgt), &tgt).unwrap();
        assert_eq!((roc, pr), (1.0, 1.0));
        let (roc, pr) = auroc_auprc(&Mask::filled(3, 3, 0.3), &tgt).unwrap();
        assert_eq!(roc, 0.5);
        assert!((pr - 2.0 / 9.0).abs() < 1e-15);
        let all = SaliencyTarget::new(IndexSet::full(3, 3), 3, 3).unwrap();
        assert!(auroc_auprc(&Mask::filled(3, 3, 0.3), &all).is_err());
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = RngStream::new(9);
        for _ in 0..30 {
            // Coarse values make ties frequent.
            let scores: Vec<f64> = (0..25).map(|_| (rng.gen_range(0..6) as f64) / 5.0).collect();
            let labels: Vec<bool> = (0..25).map(|_| rng.gen_bool(0.4)).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let mut concordant = 0.0;
            let mut pairs = 0.0;
            for a in 0..25 {
                for b in 0..25 {
                    if labels[a] && !labels[b] {
                        pairs += 1.0;
                        concordant += if scores[a] > scores[b] {
                            1.0
                        } else if scores[a] == scores[b] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            let (roc, _) = ranking_areas(&scores, &labels).unwrap();
            assert!((roc - concordant / pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn average_precision_known_value() {
        // Ranked: pos, neg, pos -> AP = (1/2)(1) + (1/2)(2/3).
        let (_, ap) = ranking_areas(&[0.9, 0.5, 0.2], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn replacement_examples() {
        let x = TimeMatrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let m = mask(3, 1, &[0.1, 0.2, 0.9]);
        let y = replace_top_fraction_by_time_average(&x, &m, 1.0 / 3.0).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 2.0]);
        let x2 = TimeMatrix::from_vec(2, 2, vec![1.0, 10.0, 3.0, 30.0]).unwrap();
        let y = replace_top_fraction_by_time_average(&x2, &Mask::filled(2, 2, 0.5), 0.5).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 20.0, 3.0, 30.0]);
        let y = replace_top_fraction_by_time_average(&x2, &Mask::filled(2, 2, 0.5), 1.0).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 20.0, 2.0, 20.0]);
        assert!(replace_top_fraction_by_time_average(&x2, &Mask::filled(2, 2, 0.5), 0.0).is_err());
    }

    /// Sequence-to-one model returning a fixed-weight logistic of the last row.
    struct LastRow;

    impl DifferentiableModel for LastRow {
        fn output_kind(&self) -> OutputKind {
            OutputKind::Probabilities
        }
        fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
            let p = x.row(x.rows() - 1)[0].clamp(0.0, 1.0);
            TimeMatrix::from_vec(x.rows(), 1, vec![p; x.rows()])
        }
        fn input_vjp(&self, x: &TimeMatrix, _: &TimeMatrix) -> Result<TimeMatrix> {
            Ok(TimeMatrix::zeros(x.rows(), x.cols()))
        }
    }

    #[test]
    fn prediction_shift_examples() {
        let f = FinalStep(LastRow);
        let x = TimeMatrix::from_vec(2, 1, vec![0.0, 0.9]).unwrap();
        let s = prediction_shift(&f, &x, &x).unwrap();
        assert!((s.cross_entropy - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(!s.flipped);
        let xt = TimeMatrix::from_vec(2, 1, vec![0.0, 0.4]).unwrap();
        assert!(prediction_shift(&f, &x, &xt).unwrap().flipped);
        assert_eq!(shift_summary(&[s, s]).1, 1.0);
        // Per-step outputs are not a single probability.
        assert!(matches!(prediction_shift(&LastRow, &x, &x), Err(Error::Contract(_))));
    }

    #[test]
    fn pairwise_accuracy_examples() {
        let a = mask(2, 2, &[1.0, 0.0, 0.7, 0.2]);
        assert_eq!(pairwise_mask_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(pairwise_mask_accuracy(&a, &a.complement()).unwrap(), 0.0);
        assert!(pairwise_mask_accuracy(&a, &Mask::filled(3, 2, 0.5)).is_err());
    }
}
