use crate::datagen::SaliencyTarget;
use crate::error::Result;
use crate::numerics::TimeMatrix;

use super::{DifferentiableModel, OutputKind};

/// Regressor whose output at time `t` is the sum of squares of the salient
/// features at `t`, and zero at non-salient times.
#[derive(Clone, Debug)]
pub struct WhiteBoxRegressor {
    target: SaliencyTarget,
    features_by_time: Vec<Vec<usize>>,
}

impl WhiteBoxRegressor {
    pub fn new(target: SaliencyTarget) -> Self {
        let (rows, _) = target.shape();
        let features_by_time = (0..rows).map(|t| target.features_at(t).collect()).collect();
        WhiteBoxRegressor {
            target,
            features_by_time,
        }
    }

    pub fn target(&self) -> &SaliencyTarget {
        &self.target
    }
}

impl DifferentiableModel for WhiteBoxRegressor {
    fn output_kind(&self) -> OutputKind {
        OutputKind::Regression
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        x.expect_shape(self.target.shape(), "white-box input")?;
        let out = self
            .features_by_time
            .iter()
            .enumerate()
            .map(|(t, feats)| feats.iter().map(|&i| x[(t, i)] * x[(t, i)]).sum())
            .collect();
        TimeMatrix::from_vec(x.rows(), 1, out)
    }

    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix> {
        x.expect_shape(self.target.shape(), "white-box input")?;
        upstream.expect_shape((x.rows(), 1), "white-box upstream")?;
        let mut g = TimeMatrix::zeros(x.rows(), x.cols());
        for (t, feats) in self.features_by_time.iter().enumerate() {
            for &i in feats {
                g[(t, i)] = 2.0 * x[(t, i)] * upstream[(t, 0)];
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::IndexSet;
    use crate::numerics::{sample_standard_normal, RngStream};

    fn target(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> SaliencyTarget {
        SaliencyTarget::new(pairs.iter().copied().collect(), rows, cols).unwrap()
    }

    #[test]
    fn single_square() {
        let f = WhiteBoxRegressor::new(target(1, 1, &[(0, 0)]));
        let y = f.forward(&TimeMatrix::filled(1, 1, 2.0)).unwrap();
        assert_eq!(y.as_slice(), &[4.0]);
        assert_eq!(f.forward(&TimeMatrix::zeros(1, 1)).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn forward_matches_double_loop() {
        let mut rng = RngStream::new(1);
        let x = TimeMatrix::from_vec(6, 4, sample_standard_normal(&mut rng, 24).unwrap()).unwrap();
        let set = IndexSet::product(&[1, 3, 4], &[0, 2]);
        let f = WhiteBoxRegressor::new(SaliencyTarget::new(set.clone(), 6, 4).unwrap());
        let y = f.forward(&x).unwrap();
        for t in 0..6 {
            let mut expected = 0.0;
            for i in 0..4 {
                if set.contains(t, i) {
                    expected += x[(t, i)].powi(2);
                }
            }
            assert_eq!(y[(t, 0)], expected);
        }
    }

    #[test]
    fn vjp_dead_and_live_inputs() {
        let f = WhiteBoxRegressor::new(target(2, 2, &[(0, 1)]));
        let mut x = TimeMatrix::zeros(2, 2);
        x[(0, 1)] = 3.0;
        x[(1, 0)] = 5.0;
        let g = f.input_vjp(&x, &TimeMatrix::filled(2, 1, 1.0)).unwrap();
        assert_eq!(g[(0, 1)], 6.0);
        assert_eq!(g[(1, 0)], 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let f = WhiteBoxRegressor::new(target(2, 2, &[(0, 1)]));
        assert!(f.forward(&TimeMatrix::zeros(3, 2)).is_err());
        assert!(f.input_vjp(&TimeMatrix::zeros(2, 2), &TimeMatrix::zeros(3, 1)).is_err());
    }
}
