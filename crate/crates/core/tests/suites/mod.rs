//! Randomized invariants of metrics, perturbations, gradients, the area
//! schedule and the attribution baselines. Each check takes the seed of one
//! random case; [`SUITES`] lists them with their case counts.

use dynamask::baselines::{integrated_gradients, shapley_value_sampling_signed, AttributionConfig, BaselineInput};
use dynamask::datagen::{IndexSet, SaliencyTarget};
use dynamask::masks::{area_loss, area_reference, LossKind, LossScale, MaskFitConfig, MaskObjective};
use dynamask::metrics::{
    detection_curve, mask_entropy, mask_information, normalized_entropy, normalized_information, scores_to_mask,
    ThresholdGrid,
};
use dynamask::models::{DifferentiableModel, GruClassifier, LinearModel, OutputKind, WhiteBoxRegressor};
use dynamask::perturbations::PerturbationOperator;
use dynamask::{Mask, Result, RngStream, TimeMatrix};
use proptest::prelude::*;
use proptest::test_runner::{RngSeed, TestCaseError, TestRunner};
use rand::Rng;

use crate::common::{central_differences, max_relative_error, normal_matrix, uniform_mask};

pub type CaseResult = std::result::Result<(), TestCaseError>;

/// A named property with the number of random cases it is checked on.
pub struct Suite {
    pub name: &'static str,
    pub cases: u32,
    pub check: fn(u64) -> CaseResult,
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "metric_axioms",
        cases: 1000,
        check: metric_axioms,
    },
    Suite {
        name: "normalized_metrics_in_unit_interval",
        cases: 200,
        check: normalized_metrics_in_unit_interval,
    },
    Suite {
        name: "entropy_vanishes_exactly_on_binary_restrictions",
        cases: 200,
        check: entropy_vanishes_exactly_on_binary_restrictions,
    },
    Suite {
        name: "scores_to_mask_keeps_order",
        cases: 200,
        check: scores_to_mask_keeps_order,
    },
    Suite {
        name: "recall_curve_is_monotone",
        cases: 200,
        check: recall_curve_is_monotone,
    },
    Suite {
        name: "identity_at_full_mask",
        cases: 200,
        check: identity_at_full_mask,
    },
    Suite {
        name: "area_loss_zero_iff_reference",
        cases: 200,
        check: area_loss_zero_iff_reference,
    },
    Suite {
        name: "operator_mask_derivative_matches_finite_differences",
        cases: 60,
        check: operator_mask_derivative_matches_finite_differences,
    },
    Suite {
        name: "white_box_vjp_matches_finite_differences",
        cases: 60,
        check: white_box_vjp_matches_finite_differences,
    },
    Suite {
        name: "gru_vjp_matches_finite_differences",
        cases: 60,
        check: gru_vjp_matches_finite_differences,
    },
    Suite {
        name: "total_mask_gradient_matches_finite_differences",
        cases: 60,
        check: total_mask_gradient_matches_finite_differences,
    },
    Suite {
        name: "lambda_schedule_reaches_dilation",
        cases: 60,
        check: lambda_schedule_reaches_dilation,
    },
    Suite {
        name: "integrated_gradients_exact_on_linear_models",
        cases: 60,
        check: integrated_gradients_exact_on_linear_models,
    },
    Suite {
        name: "shapley_sampling_matches_enumeration",
        cases: 8,
        check: shapley_sampling_matches_enumeration,
    },
];

/// Runs every case of `suite` from a fixed seed, so each run checks the same
/// inputs.
pub fn run(suite: &Suite) -> std::result::Result<(), String> {
    let config = ProptestConfig {
        cases: suite.cases,
        rng_seed: RngSeed::Fixed(0x00d1_a3a5),
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    TestRunner::new(config)
        .run(&any::<u64>(), suite.check)
        .map_err(|e| format!("{}: {e}", suite.name))
}

fn random_set(rng: &mut RngStream, rows: usize, cols: usize, p: f64) -> IndexSet {
    let mut set = IndexSet::new();
    for t in 0..rows {
        for i in 0..cols {
            if rng.gen_bool(p) {
                set.insert(t, i);
            }
        }
    }
    set
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn random_operator(rng: &mut RngStream) -> PerturbationOperator {
    match rng.gen_range(0..4) {
        0 => PerturbationOperator::GaussianBlur {
            sigma_max: rng.gen_range(0.3..3.0),
        },
        1 => PerturbationOperator::FadeMovingAverage {
            window: rng.gen_range(1..4),
        },
        2 => PerturbationOperator::FadePastAverage {
            window: rng.gen_range(1..5),
        },
        _ => PerturbationOperator::StaticHadamard,
    }
}


pub fn metric_axioms(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..7), rng.gen_range(1..5));
    // Include exact 0 and 1 entries so the clamp is exercised.
    let mask = Mask::new(TimeMatrix::from_fn(rows, cols, |_, _| match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.0..1.0),
    }).unwrap()).unwrap();
    let a = random_set(&mut rng, rows, cols, 0.4);
    let b = random_set(&mut rng, rows, cols, 0.4);
    let union = a.union(&b);
    let inter = a.intersection(&b);
    for metric in [mask_information, mask_entropy] {
        let (ma, mb) = (metric(&mask, &a).unwrap(), metric(&mask, &b).unwrap());
        let (mu, mi) = (metric(&mask, &union).unwrap(), metric(&mask, &inter).unwrap());
        prop_assert!(ma >= 0.0 && mb >= 0.0);
        prop_assert!(close(mu, ma + mb - mi, 1e-12), "additivity: {mu} vs {}", ma + mb - mi);
        prop_assert!(ma <= mu && mb <= mu && mi <= ma);
    }
    Ok(())
}


pub fn normalized_metrics_in_unit_interval(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..6), rng.gen_range(1..4));
    let mask = uniform_mask(&mut rng, rows, cols, 0.01, 0.99);
    let full = IndexSet::full(rows, cols);
    let a = random_set(&mut rng, rows, cols, 0.5);
    for f in [normalized_information, normalized_entropy] {
        let v = f(&mask, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((f(&mask, &full).unwrap() - 1.0).abs() < 1e-12);
    }
    Ok(())
}

pub fn entropy_vanishes_exactly_on_binary_restrictions(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let binary = rng.gen_bool(0.5);
    let mask = Mask::new(TimeMatrix::from_fn(4, 3, |_, _| {
        if binary { f64::from(rng.gen_range(0..2u8)) } else { rng.gen_range(0.0..1.0) }
    }).unwrap()).unwrap();
    let s = mask_entropy(&mask, &IndexSet::full(4, 3)).unwrap();
    prop_assert_eq!(s == 0.0, binary);
    Ok(())
}

pub fn scores_to_mask_keeps_order(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let scores = normal_matrix(&mut rng, 5, 4).map(|v| v * 10.0).unwrap();
    let mask = scores_to_mask(&scores);
    let (s, m) = (scores.as_slice(), mask.as_slice());
    for i in 0..s.len() {
        for j in 0..s.len() {
            if s[i] < s[j] {
                prop_assert!(m[i] < m[j]);
            }
        }
    }
    prop_assert!(m.contains(&0.0) && m.contains(&1.0));
    Ok(())
}

pub fn recall_curve_is_monotone(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let mask = uniform_mask(&mut rng, 6, 4, 0.0, 1.0);
    let mut set = random_set(&mut rng, 6, 4, 0.3);
    set.insert(0, 0);
    let target = SaliencyTarget::new(set, 6, 4).unwrap();
    let curve = detection_curve(&mask, &target, &ThresholdGrid::default()).unwrap();
    for w in curve.windows(2) {
        prop_assert!(w[1].recall <= w[0].recall);
    }
    prop_assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.recall)));
    Ok(())
}

pub fn identity_at_full_mask(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..12), rng.gen_range(1..4));
    let x = normal_matrix(&mut rng, rows, cols);
    let op = random_operator(&mut rng);
    prop_assert_eq!(op.apply(&x, &Mask::filled(rows, cols, 1.0)).unwrap(), x);
    Ok(())
}

pub fn area_loss_zero_iff_reference(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..8), rng.gen_range(1..5));
    let n = rows * cols;
    let ones = rng.gen_range(0..=n);
    let mut values = vec![0.0; n];
    for v in values.iter_mut().take(ones) {
        *v = 1.0;
    }
    // Shuffle positions: the loss only sees the sorted values.
    for k in (1..n).rev() {
        values.swap(k, rng.gen_range(0..=k));
    }
    let mask = Mask::new(TimeMatrix::from_vec(rows, cols, values).unwrap()).unwrap();
    // Half the time pick the area whose reference has exactly `ones` ones.
    let area = if rng.gen_bool(0.5) { ones as f64 / n as f64 } else { rng.gen_range(0.0..=1.0) };
    let mut sorted = mask.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let matches = sorted == area_reference(n, area);
    prop_assert_eq!(area_loss(&mask, area) == 0.0, matches);
    Ok(())
}


pub fn operator_mask_derivative_matches_finite_differences(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(2..10), rng.gen_range(1..4));
    let x = normal_matrix(&mut rng, rows, cols);
    let mask = uniform_mask(&mut rng, rows, cols, 0.05, 0.95);
    let op = random_operator(&mut rng);
    let analytic = op.mask_derivative(&x, &mask).unwrap();
    // The perturbed entry (t, i) depends on m_{t,i} only. The fades are
    // linear in the mask, so a wide step costs nothing and keeps roundoff
    // below the tolerance where their derivative is 0.
    let h = if matches!(op, PerturbationOperator::GaussianBlur { .. }) { 1e-5 } else { 1e-3 };
    let numeric = central_differences(mask.values(), h, |m| {
        let k = (0..m.len()).find(|&k| m.as_slice()[k] != mask.as_slice()[k]).unwrap();
        op.apply(&x, &Mask::new(m.clone()).unwrap()).unwrap().as_slice()[k]
    });
    // Where sigma is small the derivative can be ~1e-12, below what a
    // difference quotient resolves; allow for the quotient's own
    // rounding error on top of the relative tolerance.
    let scale = op.apply(&x, &mask).unwrap().as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let fd_noise = 8.0 * f64::EPSILON * scale / h;
    for (a, n) in analytic.as_slice().iter().zip(&numeric) {
        prop_assert!((a - n).abs() <= 1e-4 * (a.abs() + 1e-8) + fd_noise, "{op:?}: {a} vs {n}");
    }
    Ok(())
}

pub fn white_box_vjp_matches_finite_differences(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..8), rng.gen_range(1..5));
    let mut set = random_set(&mut rng, rows, cols, 0.4);
    set.insert(0, 0);
    let f = WhiteBoxRegressor::new(SaliencyTarget::new(set, rows, cols).unwrap());
    let x = normal_matrix(&mut rng, rows, cols);
    let u = normal_matrix(&mut rng, rows, 1);
    let analytic = f.input_vjp(&x, &u).unwrap();
    let numeric = central_differences(&x, 1e-5, |x| u.dot(&f.forward(x).unwrap()));
    let err = max_relative_error(analytic.as_slice(), &numeric);
    prop_assert!(err < 1e-4, "{err}");
    Ok(())
}

pub fn gru_vjp_matches_finite_differences(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, hidden) = (rng.gen_range(1..8), rng.gen_range(1..6));
    let m = GruClassifier::init(3, hidden, &mut rng).unwrap();
    let x = normal_matrix(&mut rng, rows, 3);
    let u = normal_matrix(&mut rng, rows, 1);
    let analytic = m.input_vjp(&x, &u).unwrap();
    let numeric = central_differences(&x, 1e-5, |x| u.dot(&m.forward(x).unwrap()));
    let err = max_relative_error(analytic.as_slice(), &numeric);
    prop_assert!(err < 1e-4, "{err}");
    Ok(())
}

pub fn total_mask_gradient_matches_finite_differences(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let rows = rng.gen_range(3..8);
    let gru;
    let white;
    let (model, cols): (&dyn DifferentiableModel, usize) = if rng.gen_bool(0.5) {
        gru = GruClassifier::init(3, 4, &mut rng).unwrap();
        (&gru, 3)
    } else {
        let cols = rng.gen_range(1..4);
        let mut set = random_set(&mut rng, rows, cols, 0.5);
        set.insert(1, 0);
        white = WhiteBoxRegressor::new(SaliencyTarget::new(set, rows, cols).unwrap());
        (&white, cols)
    };
    let x = normal_matrix(&mut rng, rows, cols);
    let mask = uniform_mask(&mut rng, rows, cols, 0.05, 0.95);
    let cfg = MaskFitConfig {
        area: rng.gen_range(0.1..0.9),
        lambda_c: rng.gen_range(0.0..2.0),
        mode: if rng.gen_bool(0.5) { dynamask::masks::FitMode::Preserve } else { dynamask::masks::FitMode::Delete },
        loss_scale: if rng.gen_bool(0.5) { LossScale::Mean } else { LossScale::Sum },
        ..MaskFitConfig::default()
    };
    let op = random_operator(&mut rng);
    let lambda_a = rng.gen_range(0.1..5.0);
    let kind = LossKind::from(model.output_kind());
    let obj = MaskObjective::new(model, op, &x, kind).unwrap();
    let (_, analytic) = obj.total(&mask, &cfg, lambda_a).unwrap();
    let outputs = obj.reference().len() as f64;
    let (se, sa, sc) = match cfg.loss_scale {
        LossScale::Sum => (1.0, 1.0, 1.0),
        LossScale::Mean => (1.0 / outputs, 1.0 / (rows * cols) as f64, 1.0 / ((rows - 1) * cols) as f64),
    };
    let sign = if cfg.mode == dynamask::masks::FitMode::Delete { -1.0 } else { 1.0 };
    let numeric = central_differences(mask.values(), 1e-6, |m| {
        let t = obj.total(&Mask::new(m.clone()).unwrap(), &cfg, lambda_a).unwrap().0;
        sign * se * t.error + lambda_a * sa * t.area + cfg.lambda_c * sc * t.connectedness
    });
    let err = max_relative_error(analytic.as_slice(), &numeric);
    prop_assert!(err < 1e-4, "{op:?} {:?}: {err}", cfg.mode);
    Ok(())
}

pub fn lambda_schedule_reaches_dilation(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let cfg = MaskFitConfig {
        lambda_0: rng.gen_range(0.01..10.0),
        dilation: rng.gen_range(1.0..1e4),
        epochs: rng.gen_range(1..2000),
        ..MaskFitConfig::default()
    };
    // The iterated product, as the optimizer would accumulate it.
    let growth = (cfg.dilation.ln() / cfg.epochs as f64).exp();
    let iterated = (0..cfg.epochs).fold(cfg.lambda_0, |l, _| l * growth);
    let target = cfg.dilation * cfg.lambda_0;
    prop_assert!(close(iterated, target, 1e-6), "{iterated} vs {target}");
    prop_assert!(close(cfg.lambda_a_at(cfg.epochs), target, 1e-12));
    for n in [0, cfg.epochs / 2] {
        let expected = cfg.lambda_0 * (n as f64 * cfg.dilation.ln() / cfg.epochs as f64).exp();
        prop_assert!(close(cfg.lambda_a_at(n), expected, 1e-12));
    }
    Ok(())
}

pub fn integrated_gradients_exact_on_linear_models(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let (rows, cols) = (rng.gen_range(1..6), rng.gen_range(1..4));
    let w = normal_matrix(&mut rng, rows, cols);
    let x = normal_matrix(&mut rng, rows, cols);
    let cfg = AttributionConfig { ig_steps: rng.gen_range(1..30), ..AttributionConfig::default() };
    let ig = integrated_gradients(&LinearModel::new(w.clone()), &x, &cfg).unwrap();
    for k in 0..x.len() {
        let exact = (w.as_slice()[k] * x.as_slice()[k]).abs();
        prop_assert!((ig.as_slice()[k] - exact).abs() <= 1e-12 * exact.max(1.0));
    }
    Ok(())
}

/// `g(X) = x00 * x01 + sin(x10) * exp(x11 / 2)`: not additive, so Shapley
/// values differ from occlusion scores.
struct Interacting;

impl DifferentiableModel for Interacting {
    fn output_kind(&self) -> OutputKind {
        OutputKind::Regression
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        let v = x[(0, 0)] * x[(0, 1)] + x[(1, 0)].sin() * (x[(1, 1)] / 2.0).exp();
        TimeMatrix::from_vec(1, 1, vec![v])
    }

    fn input_vjp(&self, _: &TimeMatrix, _: &TimeMatrix) -> Result<TimeMatrix> {
        unimplemented!("sampling methods never call the gradient")
    }
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.clone();
        let first = rest.remove(k);
        for mut p in permutations(rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

/// Shapley values by enumerating all orderings of the entries.
fn exact_shapley(model: &dyn DifferentiableModel, x: &TimeMatrix, base: &TimeMatrix) -> Vec<f64> {
    let n = x.len();
    let perms = permutations((0..n).collect());
    let mut phi = vec![0.0; n];
    for p in &perms {
        let mut cur = base.clone();
        let mut prev = model.forward(&cur).unwrap().sum();
        for &k in p {
            cur.as_mut_slice()[k] = x.as_slice()[k];
            let next = model.forward(&cur).unwrap().sum();
            phi[k] += (next - prev) / perms.len() as f64;
            prev = next;
        }
    }
    phi
}


pub fn shapley_sampling_matches_enumeration(seed: u64) -> CaseResult {
    let mut rng = RngStream::new(seed);
    let x = normal_matrix(&mut rng, 2, 2);
    let cfg = AttributionConfig {
        svs_samples: 40_000,
        svs_baseline: BaselineInput::FeatureMean,
        ..AttributionConfig::default()
    };
    let sampled = shapley_value_sampling_signed(&Interacting, &x, &cfg, &mut rng).unwrap();
    let exact = exact_shapley(&Interacting, &x, &BaselineInput::FeatureMean.materialize(&x));
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (s, e) in sampled.as_slice().iter().zip(&exact) {
        prop_assert!((s - e).abs() <= 1e-2 * scale, "{s} vs {e}");
    }
    Ok(())
}
