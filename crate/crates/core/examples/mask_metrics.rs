//! Mask information and entropy on two small masks, then detection scores of
//! a graded mask against a known salient set.
//!
//! ```text
//! cargo run --example mask_metrics
//! ```

use dynamask::datagen::{IndexSet, SaliencyTarget};
use dynamask::metrics::{
    aup_aur, auroc_auprc, mask_entropy, mask_information, normalized_entropy, normalized_information, ThresholdGrid,
};
use dynamask::{Mask, TimeMatrix};

fn main() -> dynamask::Result<()> {
    // Ten entries: a confident mask (three at 0.9, the rest at 0) and a
    // maximally unsure one (all at 0.5).
    let confident = Mask::new(TimeMatrix::from_vec(
        2,
        5,
        vec![0.9, 0.9, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )?)?;
    let unsure = Mask::filled(2, 5, 0.5);
    let all = IndexSet::full(2, 5);
    // The three entries the confident mask selects, as a share of the whole.
    let first_three = IndexSet::product(&[0], &[0, 1, 2]);
    for (name, m) in [("confident", &confident), ("unsure", &unsure)] {
        println!(
            "{name:<10} I = {:.3}  S = {:.3}  share of I in first three = {:.3}  share of S = {:.3}",
            mask_information(m, &all)?,
            mask_entropy(m, &all)?,
            normalized_information(m, &first_three)?,
            normalized_entropy(m, &first_three)?,
        );
    }

    // Salient block: times 2..4 of feature 1 in a 6 x 3 series.
    let target = SaliencyTarget::new(IndexSet::product(&[2, 3, 4], &[1]), 6, 3)?;
    let graded = Mask::new(TimeMatrix::from_fn(6, 3, |t, i| match (t, i) {
        (2..=4, 1) => 0.9,
        (1, 1) | (5, 1) => 0.4,
        _ => 0.05,
    })?)?;
    let (aup, aur) = aup_aur(&graded, &target, &ThresholdGrid::default())?;
    let (auroc, auprc) = auroc_auprc(&graded, &target)?;
    println!("\ngraded mask: AUP {aup:.3}  AUR {aur:.3}  AUROC {auroc:.3}  AUPRC {auprc:.3}");
    println!("indicator  : AUP/AUR {:?}", aup_aur(&Mask::indicator(&target), &target, &ThresholdGrid::default())?);
    Ok(())
}
