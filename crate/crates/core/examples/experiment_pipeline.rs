//! Drives the experiment harness from code: resolves a preset with a few
//! overrides, runs every stage into a temporary directory and prints the
//! report table and acceptance checks.
//!
//! ```text
//! cargo run --release --example experiment_pipeline
//! ```

use dynamask::experiments::{reproduce, resolve_config, ConfigSources, ExperimentKind};

fn main() -> dynamask::Result<()> {
    let out = std::env::temp_dir().join(format!("dynamask-pipeline-{}", std::process::id()));
    let cfg = resolve_config(&ConfigSources {
        experiment: Some(ExperimentKind::RareTime),
        seed: Some(1),
        output_dir: Some(out),
        overrides: vec![
            "repetitions=3".into(),
            "fit.epochs=300".into(),
            "rare.area_grid=[0.005, 0.01, 0.02]".into(),
        ],
        ..ConfigSources::default()
    })?;
    let outcome = reproduce(&cfg, &|msg| eprintln!("{msg}"))?;
    print!("{}", outcome.report.table());
    for check in &outcome.checks {
        println!("{}", check.line());
    }
    println!("outputs in {}", outcome.run_dir.display());
    Ok(())
}
