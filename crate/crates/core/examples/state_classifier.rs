//! Trains a small GRU on the two-state HMM data and explains a few held-out
//! series with extremal masks.
//!
//! ```text
//! cargo run --release --example state_classifier -- [epochs]
//! ```

use dynamask::datagen::generate_hmm_dataset;
use dynamask::masks::{area_grid, error_loss, fit_extremal_mask, ExtremalConfig, MaskFitConfig};
use dynamask::metrics::{
    aup_aur, auroc_auprc, prediction_shift, replace_top_fraction_by_time_average, ThresholdGrid,
};
use dynamask::models::{train_gru, FinalStep, TrainConfig};
use dynamask::perturbations::PerturbationOperator;
use dynamask::{Mask, RngStream};

fn main() -> dynamask::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(40, |s| s.parse().expect("epochs must be an integer"));
    let rng = RngStream::new(11);
    let data = generate_hmm_dataset(&mut rng.substream(0), 150, 60)?;
    let (train, test) = data.split_at(120);

    let cfg = TrainConfig {
        epochs,
        hidden_size: 25,
        ..TrainConfig::default()
    };
    let (model, report) = train_gru(&train, Some(&test), &cfg, &mut rng.substream(1))?;
    println!(
        "trained {epochs} epochs: train accuracy {:.3}, test accuracy {:.3}",
        report.final_train_accuracy,
        report.final_validation_accuracy.unwrap_or(f64::NAN)
    );

    let op = PerturbationOperator::gaussian_blur(1.0)?;
    let fit_cfg = MaskFitConfig {
        lambda_0: 0.1,
        dilation: 100.0,
        lambda_c: 1.0,
        ..MaskFitConfig::default()
    };
    for k in 0..3 {
        let x = &test.inputs[k];
        let target = &test.targets[k];
        let (rows, cols) = x.shape();
        let at_identity = error_loss(&model, op, x, &Mask::filled(rows, cols, 1.0))?;
        let ext = ExtremalConfig::new(area_grid(0.15, 0.02, 11), 0.9 * at_identity);
        let search = fit_extremal_mask(&model, op, x, &fit_cfg, &ext)?;
        let mask = &search.fit.mask;
        let (aup, aur) = aup_aur(mask, target, &ThresholdGrid::default())?;
        let (auroc, auprc) = auroc_auprc(mask, target)?;
        let shift = prediction_shift(
            &FinalStep(&model),
            x,
            &replace_top_fraction_by_time_average(x, mask, 0.1)?,
        )?;
        println!(
            "series {k}: area {:.2} (converged: {})  AUP {aup:.3} AUR {aur:.3} AUROC {auroc:.3} AUPRC {auprc:.3}  \
             CE after removing top 10% {:.3}",
            search.fit.area, search.converged, shift.cross_entropy
        );
    }
    Ok(())
}
