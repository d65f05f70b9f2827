//! Runs every baseline attribution method on a linear model, where integrated
//! gradients and Shapley values have closed forms.
//!
//! ```text
//! cargo run --release --example attribution_baselines
//! ```

use dynamask::baselines::{
    augmented_feature_occlusion, feature_occlusion, feature_permutation, integrated_gradients,
    shapley_value_sampling, AttributionConfig, BaselineInput,
};
use dynamask::models::LinearModel;
use dynamask::numerics::sample_standard_normal;
use dynamask::{RngStream, TimeMatrix};

fn show(name: &str, scores: &TimeMatrix) {
    let rows: Vec<String> = scores
        .to_rows()
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:6.3}")).collect::<Vec<_>>().join(" "))
        .collect();
    println!("{name}:\n  {}", rows.join("\n  "));
}

fn main() -> dynamask::Result<()> {
    let mut rng = RngStream::new(7);
    let weights = TimeMatrix::from_vec(4, 2, vec![1.0, 0.0, -2.0, 0.0, 0.5, 0.0, 0.0, 3.0])?;
    let model = LinearModel::new(weights.clone());
    let x = TimeMatrix::from_vec(4, 2, sample_standard_normal(&mut rng, 8)?)?;

    let expected = TimeMatrix::from_fn(4, 2, |t, i| (weights[(t, i)] * x[(t, i)]).abs())?;
    show("|w * x| (closed form)", &expected);

    let cfg = AttributionConfig {
        svs_baseline: BaselineInput::Zero,
        ..AttributionConfig::default()
    };
    show("integrated gradients", &integrated_gradients(&model, &x, &cfg)?);
    show("Shapley value sampling", &shapley_value_sampling(&model, &x, &cfg, &mut rng)?);
    show("feature occlusion", &feature_occlusion(&model, &x, &cfg)?);

    let others: Vec<TimeMatrix> = (0..5)
        .map(|_| TimeMatrix::from_vec(4, 2, sample_standard_normal(&mut rng, 8)?))
        .collect::<dynamask::Result<_>>()?;
    show("augmented occlusion", &augmented_feature_occlusion(&model, &x, &others, &cfg, &mut rng)?);
    let mut batch = vec![x.clone()];
    batch.extend(others);
    show("feature permutation", &feature_permutation(&model, &batch, &mut rng)?[0]);
    Ok(())
}
