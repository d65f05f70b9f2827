//! Fits masks with three different perturbation operators on the same
//! classifier and series, then reports how often the binarized masks agree.
//!
//! ```text
//! cargo run --release --example operator_agreement
//! ```

use dynamask::datagen::generate_hmm_dataset;
use dynamask::masks::{area_grid, error_loss, fit_extremal_mask, ExtremalConfig, MaskFitConfig};
use dynamask::metrics::pairwise_mask_accuracy;
use dynamask::models::{train_gru, TrainConfig};
use dynamask::perturbations::PerturbationOperator;
use dynamask::{Mask, RngStream};

fn main() -> dynamask::Result<()> {
    let rng = RngStream::new(5);
    let data = generate_hmm_dataset(&mut rng.substream(0), 130, 60)?;
    let (train, test) = data.split_at(120);
    let cfg = TrainConfig {
        epochs: 30,
        hidden_size: 25,
        ..TrainConfig::default()
    };
    let (model, _) = train_gru(&train, None, &cfg, &mut rng.substream(1))?;

    let operators = [
        PerturbationOperator::gaussian_blur(1.0)?,
        PerturbationOperator::fade_moving_average(3)?,
        PerturbationOperator::fade_past_average(6)?,
    ];
    let fit_cfg = MaskFitConfig {
        lambda_0: 0.1,
        dilation: 100.0,
        lambda_c: 1.0,
        ..MaskFitConfig::default()
    };
    let n = operators.len();
    let mut totals = vec![vec![0.0; n]; n];
    let series = 5;
    for x in &test.inputs[..series] {
        let (rows, cols) = x.shape();
        let masks = operators
            .iter()
            .map(|&op| {
                let at_identity = error_loss(&model, op, x, &Mask::filled(rows, cols, 1.0))?;
                let ext = ExtremalConfig::new(area_grid(0.15, 0.02, 11), 0.9 * at_identity);
                Ok(fit_extremal_mask(&model, op, x, &fit_cfg, &ext)?.fit.mask)
            })
            .collect::<dynamask::Result<Vec<_>>>()?;
        for a in 0..n {
            for b in 0..n {
                totals[a][b] += pairwise_mask_accuracy(&masks[a], &masks[b])? / series as f64;
            }
        }
    }

    print!("{:<20}", "");
    for op in &operators {
        print!("{:>20}", op.name());
    }
    println!();
    for (a, row) in totals.iter().enumerate() {
        print!("{:<20}", operators[a].name());
        for v in row {
            print!("{v:>20.3}");
        }
        println!();
    }
    Ok(())
}
