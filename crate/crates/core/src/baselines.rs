//! Reference attribution methods. Each returns a score matrix the shape of
//! the input; larger means more important. Convert with
//! [`crate::metrics::scores_to_mask`] to compare them against masks.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DifferentiableModel;
use crate::numerics::{RngStream, TimeMatrix};

/// Reference input that stands for "feature absent".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineInput {
    Zero,
    /// Each feature's mean over time, repeated at every time step.
    FeatureMean,
}

impl BaselineInput {
    pub fn materialize(&self, x: &TimeMatrix) -> TimeMatrix {
        match self {
            BaselineInput::Zero => TimeMatrix::zeros(x.rows(), x.cols()),
            BaselineInput::FeatureMean => {
                let means = x.column_means();
                TimeMatrix::from_fn(x.rows(), x.cols(), |_, i| means[i]).expect("finite means")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub ig_steps: usize,
    pub ig_baseline: BaselineInput,
    pub svs_samples: usize,
    pub svs_baseline: BaselineInput,
    pub occlusion_baseline: BaselineInput,
    /// Replacement draws per entry for augmented occlusion.
    pub afo_draws: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            ig_steps: 50,
            ig_baseline: BaselineInput::Zero,
            svs_samples: 25,
            svs_baseline: BaselineInput::FeatureMean,
            occlusion_baseline: BaselineInput::Zero,
            afo_draws: 10,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps == 0 || self.svs_samples == 0 || self.afo_draws == 0 {
            return Err(Error::Config(format!("attribution counts must be at least 1: {self:?}")));
        }
        Ok(())
    }
}

fn l1_distance(a: &TimeMatrix, b: &TimeMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum()
}

/// Scores every entry in parallel with `score(k, scratch)`, where `scratch`
/// is a private copy of `x` that must be restored before returning.
fn per_entry<F>(x: &TimeMatrix, score: F) -> Result<TimeMatrix>
where
    F: Fn(usize, &mut TimeMatrix) -> Result<f64> + Sync,
{
    let scores = (0..x.len())
        .into_par_iter()
        .map_init(|| x.clone(), |scratch, k| score(k, scratch))
        .collect::<Result<Vec<_>>>()?;
    TimeMatrix::from_vec(x.rows(), x.cols(), scores)
}

/// `score(t, i) = ||f(X) - f(X with x_{t,i} := b_{t,i})||_1`.
pub fn feature_occlusion(model: &dyn DifferentiableModel, x: &TimeMatrix, cfg: &AttributionConfig) -> Result<TimeMatrix> {
    let y = model.forward(x)?;
    let b = cfg.occlusion_baseline.materialize(x);
    per_entry(x, |k, scratch| {
        let original = scratch.as_slice()[k];
        scratch.as_mut_slice()[k] = b.as_slice()[k];
        let shift = l1_distance(&model.forward(scratch)?, &y);
        scratch.as_mut_slice()[k] = original;
        Ok(shift)
    })
}

/// Occlusion with replacement values drawn from each feature's empirical
/// distribution over `reference` (all series, all times), averaged over
/// `cfg.afo_draws` draws. Entry `k` (row-major) draws from sub-stream `k` of
/// a stream seeded from `rng`.
pub fn augmented_feature_occlusion(
    model: &dyn DifferentiableModel,
    x: &TimeMatrix,
    reference: &[TimeMatrix],
    cfg: &AttributionConfig,
    rng: &mut RngStream,
) -> Result<TimeMatrix> {
    cfg.validate()?;
    if reference.is_empty() {
        return Err(Error::InvalidRequest("augmented occlusion needs a nonempty reference set".into()));
    }
    for r in reference {
        if r.cols() != x.cols() {
            return Err(Error::Dimension("reference series feature count differs from input".into()));
        }
    }
    let pools: Vec<Vec<f64>> = (0..x.cols())
        .map(|i| reference.iter().flat_map(|r| r.column(i)).collect())
        .collect();
    let streams = RngStream::new(rng.next_u64());
    let y = model.forward(x)?;
    let cols = x.cols();
    per_entry(x, |k, scratch| {
        let mut local = streams.substream(k as u64);
        let pool = &pools[k % cols];
        let original = scratch.as_slice()[k];
        let mut total = 0.0;
        for _ in 0..cfg.afo_draws {
            scratch.as_mut_slice()[k] = pool[local.gen_range(0..pool.len())];
            total += l1_distance(&model.forward(scratch)?, &y);
        }
        scratch.as_mut_slice()[k] = original;
        Ok(total / cfg.afo_draws as f64)
    })
}

/// For each entry `(t, i)`, permutes `x_{t,i}` across the batch with one
/// shared random permutation and scores each member by the L1 shift of its
/// prediction. Entries use permutations drawn in row-major order from `rng`.
pub fn feature_permutation(
    model: &dyn DifferentiableModel,
    batch: &[TimeMatrix],
    rng: &mut RngStream,
) -> Result<Vec<TimeMatrix>> {
    if batch.len() < 2 {
        return Err(Error::InvalidRequest("feature permutation needs a batch of at least 2".into()));
    }
    let shape = batch[0].shape();
    for x in batch {
        x.expect_shape(shape, "feature permutation batch member")?;
    }
    let n = shape.0 * shape.1;
    let perms: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut p: Vec<usize> = (0..batch.len()).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    batch
        .par_iter()
        .enumerate()
        .map(|(b, x)| {
            let y = model.forward(x)?;
            per_entry(x, |k, scratch| {
                let source = perms[k][b];
                if source == b {
                    return Ok(0.0);
                }
                let original = scratch.as_slice()[k];
                scratch.as_mut_slice()[k] = batch[source].as_slice()[k];
                let shift = l1_distance(&model.forward(scratch)?, &y);
                scratch.as_mut_slice()[k] = original;
                Ok(shift)
            })
        })
        .collect()
}

/// Signed integrated gradients of the summed model output along the straight
/// path from the baseline, using the right Riemann sum with `cfg.ig_steps`
/// points.
pub fn integrated_gradients_signed(
    model: &dyn DifferentiableModel,
    x: &TimeMatrix,
    cfg: &AttributionConfig,
) -> Result<TimeMatrix> {
    cfg.validate()?;
    let b = cfg.ig_baseline.materialize(x);
    let steps = cfg.ig_steps;
    let gradients = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let alpha = k as f64 / steps as f64;
            let point = TimeMatrix::from_fn(x.rows(), x.cols(), |t, i| b[(t, i)] + alpha * (x[(t, i)] - b[(t, i)]))?;
            let y = model.forward(&point)?;
            model.input_vjp(&point, &TimeMatrix::filled(y.rows(), y.cols(), 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut avg = vec![0.0; x.len()];
    for g in &gradients {
        for (a, v) in avg.iter_mut().zip(g.as_slice()) {
            *a += v / steps as f64;
        }
    }
    TimeMatrix::from_fn(x.rows(), x.cols(), |t, i| (x[(t, i)] - b[(t, i)]) * avg[t * x.cols() + i])
}

/// Absolute integrated gradients, for ranking.
pub fn integrated_gradients(model: &dyn DifferentiableModel, x: &TimeMatrix, cfg: &AttributionConfig) -> Result<TimeMatrix> {
    integrated_gradients_signed(model, x, cfg)?.map(f64::abs)
}

/// Signed Shapley values of the summed model output, estimated from
/// `cfg.svs_samples` random orderings of all input entries. Sample `s` uses
/// sub-stream `s` of a stream seeded from `rng`.
pub fn shapley_value_sampling_signed(
    model: &dyn DifferentiableModel,
    x: &TimeMatrix,
    cfg: &AttributionConfig,
    rng: &mut RngStream,
) -> Result<TimeMatrix> {
    cfg.validate()?;
    let b = cfg.svs_baseline.materialize(x);
    let streams = RngStream::new(rng.next_u64());
    let g = |z: &TimeMatrix| -> Result<f64> { Ok(model.forward(z)?.sum()) };
    let g_base = g(&b)?;
    let contributions = (0..cfg.svs_samples)
        .into_par_iter()
        .map(|s| {
            let mut local = streams.substream(s as u64);
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.shuffle(&mut local);
            let mut z = b.clone();
            let mut prev = g_base;
            let mut contrib = vec![0.0; x.len()];
            for &k in &order {
                z.as_mut_slice()[k] = x.as_slice()[k];
                let next = g(&z)?;
                contrib[k] = next - prev;
                prev = next;
            }
            Ok(contrib)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; x.len()];
    for c in &contributions {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v / cfg.svs_samples as f64;
        }
    }
    TimeMatrix::from_vec(x.rows(), x.cols(), mean)
}

/// Absolute sampled Shapley values, for ranking.
pub fn shapley_value_sampling(
    model: &dyn DifferentiableModel,
    x: &TimeMatrix,
    cfg: &AttributionConfig,
    rng: &mut RngStream,
) -> Result<TimeMatrix> {
    shapley_value_sampling_signed(model, x, cfg, rng)?.map(f64::abs)
}
