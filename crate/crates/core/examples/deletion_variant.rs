//! Fits a preservation mask and a deletion mask on the same rare-time series.
//! The preservation mask keeps the fewest inputs that reproduce the output;
//! the deletion mask removes the fewest inputs that destroy it.
//!
//! ```text
//! cargo run --release --example deletion_variant
//! ```

use dynamask::datagen::{generate_arma, make_rare_time_target};
use dynamask::masks::{fit_mask, fit_mask_deletion, FitMode, MaskFitConfig};
use dynamask::metrics::{auroc_auprc, pairwise_mask_accuracy};
use dynamask::models::WhiteBoxRegressor;
use dynamask::perturbations::PerturbationOperator;
use dynamask::RngStream;

fn main() -> dynamask::Result<()> {
    let mut rng = RngStream::new(3);
    let x = generate_arma(&mut rng, 50, 50)?;
    let target = make_rare_time_target(&mut rng, 50, 50, 5)?;
    println!("salient times: {:?}", target.salient_times());
    let model = WhiteBoxRegressor::new(target.clone());
    let op = PerturbationOperator::gaussian_blur(1.0)?;

    let area = target.salient_fraction();
    let keep = fit_mask(&model, op, &x, &MaskFitConfig { area, ..MaskFitConfig::default() })?;
    let delete = fit_mask_deletion(
        &model,
        op,
        &x,
        &MaskFitConfig {
            area,
            mode: FitMode::Delete,
            ..MaskFitConfig::default()
        },
    )?;

    for (name, fit) in [("preserve", &keep), ("delete", &delete)] {
        let (auroc, auprc) = auroc_auprc(&fit.mask, &target)?;
        println!(
            "{name:<8} error {:10.3}  selected {:.3}  AUROC {auroc:.3}  AUPRC {auprc:.3}",
            fit.final_error,
            fit.mask.fraction_at_least(0.5)
        );
    }
    println!(
        "binarized agreement between the two masks: {:.3}",
        pairwise_mask_accuracy(&keep.mask, &delete.mask)?
    );
    Ok(())
}
