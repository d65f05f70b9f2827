//! Applies each perturbation operator to a ramp with a hole in the mask and
//! shows which time steps every perturbed value depends on.
//!
//! ```text
//! cargo run --example perturbation_operators
//! ```

use dynamask::perturbations::PerturbationOperator;
use dynamask::{Mask, TimeMatrix};

fn main() -> dynamask::Result<()> {
    let x = TimeMatrix::from_fn(9, 1, |t, _| (t * t) as f64)?;
    let mut m = TimeMatrix::filled(9, 1, 1.0);
    for t in 3..6 {
        m[(t, 0)] = 0.0;
    }
    let mask = Mask::new(m)?;

    let operators = [
        PerturbationOperator::gaussian_blur(2.0)?,
        PerturbationOperator::fade_moving_average(2)?,
        PerturbationOperator::fade_past_average(3)?,
        PerturbationOperator::StaticHadamard,
    ];
    println!("{:<22} {:?}", "input", x.column(0));
    for op in operators {
        let perturbed = op.apply(&x, &mask)?;
        let rounded: Vec<f64> = perturbed.column(0).iter().map(|v| (v * 100.0).round() / 100.0).collect();
        println!("{:<22} {rounded:?}", op.name());
    }

    println!("\ninputs that perturbed entry t = 4 depends on (mask = 0.5 everywhere):");
    let ramp = TimeMatrix::from_fn(9, 1, |t, _| t as f64 + 1.0)?;
    for op in operators {
        let report = op.check_dynamicity(&ramp, 4, 0)?;
        let (w1, w2) = op.declared_window(ramp.rows());
        println!(
            "{:<22} offsets {:?}  declared window ({w1}, {w2})  dynamic: {}",
            op.name(),
            report.nonzero_offsets(1e-9),
            op.is_dynamic()
        );
    }
    Ok(())
}
