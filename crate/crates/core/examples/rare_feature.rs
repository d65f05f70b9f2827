//! Explains a white-box regressor on one rare-feature series and compares the
//! fitted mask with feature occlusion.
//!
//! ```text
//! cargo run --release --example rare_feature -- [seed]
//! ```

use dynamask::baselines::{feature_occlusion, AttributionConfig};
use dynamask::datagen::{generate_arma, make_rare_feature_target, SaliencyTarget};
use dynamask::masks::{area_grid, fit_lowest_error_mask, MaskFitConfig};
use dynamask::metrics::{aup_aur, mask_entropy, mask_information, scores_to_mask, ThresholdGrid};
use dynamask::models::WhiteBoxRegressor;
use dynamask::perturbations::PerturbationOperator;
use dynamask::{Mask, RngStream};

fn summarize(name: &str, mask: &Mask, target: &SaliencyTarget) -> dynamask::Result<()> {
    let (aup, aur) = aup_aur(mask, target, &ThresholdGrid::default())?;
    let info = mask_information(mask, target.salient())?;
    let entropy = mask_entropy(mask, target.salient())?;
    println!("{name:<5} AUP {aup:.3}  AUR {aur:.3}  I {info:8.1}  S {entropy:6.2}");
    Ok(())
}

fn main() -> dynamask::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let mut rng = RngStream::new(seed);
    let x = generate_arma(&mut rng, 50, 50)?;
    let target = make_rare_feature_target(&mut rng, 50, 50, 5)?;
    println!("salient features: {:?}", target.salient_features());

    let model = WhiteBoxRegressor::new(target.clone());
    let op = PerturbationOperator::gaussian_blur(1.0)?;
    let search = fit_lowest_error_mask(&model, op, &x, &MaskFitConfig::default(), &area_grid(0.001, 0.001, 50))?;
    println!(
        "kept area {:.3} with error {:.3e} ({} areas fitted)",
        search.fit.area,
        search.fit.final_error,
        search.candidates.len()
    );

    summarize("MASK", &search.fit.mask, &target)?;
    let fo = feature_occlusion(&model, &x, &AttributionConfig::default())?;
    summarize("FO", &scores_to_mask(&fo), &target)?;

    let path = std::env::temp_dir().join(format!("rare_feature_{seed}.pgm"));
    std::fs::write(&path, search.fit.mask.to_pgm()).expect("temp dir is writable");
    println!("mask heatmap: {}", path.display());
    Ok(())
}
