//! Deletion masks on the white-box rare-experiment regressors select salient
//! entries far more often than a uniformly random selection of the same size.

use dynamask::datagen::{generate_arma, make_rare_feature_target, make_rare_time_target, SaliencyTarget};
use dynamask::masks::{fit_mask_deletion, FitMode, MaskFitConfig};
use dynamask::models::WhiteBoxRegressor;
use dynamask::perturbations::PerturbationOperator;
use dynamask::RngStream;

const SEEDS: u64 = 10;

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Smallest overlap `q` with `P(X >= q) <= tail` when `draws` cells are
/// picked uniformly without replacement out of `population`, `marked` of
/// which are salient.
fn hypergeometric_upper_quantile(population: usize, marked: usize, draws: usize, tail: f64) -> usize {
    let hi = marked.min(draws);
    let total = ln_choose(population, draws);
    let pmf = |k: usize| (ln_choose(marked, k) + ln_choose(population - marked, draws - k) - total).exp();
    let mut upper = 0.0;
    for q in (0..=hi).rev() {
        upper += pmf(q);
        if upper > tail {
            return q + 1;
        }
    }
    0
}

fn top_overlap(values: &[f64], target: &SaliencyTarget, k: usize) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let cols = target.shape().1;
    order[..k]
        .iter()
        .filter(|&&idx| target.contains(idx / cols, idx % cols))
        .count()
}

fn check_deletion(make_target: fn(&mut RngStream) -> SaliencyTarget) {
    let op = PerturbationOperator::gaussian_blur(1.0).unwrap();
    let mut overlaps = Vec::new();
    for seed in 0..SEEDS {
        let mut rng = RngStream::new(seed);
        let x = generate_arma(&mut rng, 50, 50).unwrap();
        let target = make_target(&mut rng);
        let model = WhiteBoxRegressor::new(target.clone());
        let area = target.salient_fraction();
        let cfg = MaskFitConfig {
            area,
            mode: FitMode::Delete,
            ..MaskFitConfig::default()
        };
        let fit = fit_mask_deletion(&model, op, &x, &cfg).unwrap();
        let n = x.rows() * x.cols();
        let k = (area * n as f64).round() as usize;
        let overlap = top_overlap(fit.mask.as_slice(), &target, k);
        let random_bound = hypergeometric_upper_quantile(n, target.salient().len(), k, 1e-3);
        assert!(
            overlap >= random_bound,
            "seed {seed}: overlap {overlap} of {k} is within the random-selection range (< {random_bound})"
        );
        overlaps.push(overlap);
    }
    eprintln!("top-entry overlaps: {overlaps:?}");
}

#[test]
fn hypergeometric_quantile_matches_small_case() {
    // Two draws from four cells with two marked: P(X = 2) = 1/6.
    assert_eq!(hypergeometric_upper_quantile(4, 2, 2, 0.1), 3);
    assert_eq!(hypergeometric_upper_quantile(4, 2, 2, 0.2), 2);
}

#[test]
fn deletion_mask_beats_random_selection_rare_feature() {
    check_deletion(|rng| make_rare_feature_target(rng, 50, 50, 5).unwrap());
}

#[test]
fn deletion_mask_beats_random_selection_rare_time() {
    check_deletion(|rng| make_rare_time_target(rng, 50, 50, 5).unwrap());
}
