//! Differentiable models: the contract used by the mask optimizer and the
//! gradient baselines, plus the concrete white-box regressor and GRU
//! classifier.

mod gru;
mod train;
mod whitebox;

pub use gru::{GruClassifier, GruGradients};
pub use train::{adam_step, evaluate_dataset, train_gru, AdamState, EpochRecord, TrainConfig, TrainReport};
pub use whitebox::WhiteBoxRegressor;

use crate::error::{Error, Result};
use crate::numerics::TimeMatrix;

/// What the model's outputs mean; selects the error loss of a mask fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    Regression,
    /// Class probabilities. A single output column is read as the
    /// probability of the positive class of a binary problem.
    Probabilities,
}

/// A model `f: R^{T x d_X} -> R^{(T+1-t_y) x d_Y}` that can back-propagate to
/// its input.
pub trait DifferentiableModel: Send + Sync {
    fn output_kind(&self) -> OutputKind;

    /// 1-based index of the first predicted time step.
    fn first_output_time(&self) -> usize {
        1
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix>;

    /// Gradient of `<upstream, forward(x)>` with respect to `x`.
    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix>;

    /// Forward pass followed by a VJP whose upstream depends on the output.
    /// Models with an expensive forward pass override this to reuse it.
    fn forward_and_vjp(
        &self,
        x: &TimeMatrix,
        upstream: &mut dyn FnMut(&TimeMatrix) -> Result<TimeMatrix>,
    ) -> Result<(TimeMatrix, TimeMatrix)> {
        let y = self.forward(x)?;
        let u = upstream(&y)?;
        let g = self.input_vjp(x, &u)?;
        Ok((y, g))
    }
}

impl<M: DifferentiableModel + ?Sized> DifferentiableModel for &M {
    fn output_kind(&self) -> OutputKind {
        (**self).output_kind()
    }
    fn first_output_time(&self) -> usize {
        (**self).first_output_time()
    }
    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        (**self).forward(x)
    }
    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix> {
        (**self).input_vjp(x, upstream)
    }
    fn forward_and_vjp(
        &self,
        x: &TimeMatrix,
        upstream: &mut dyn FnMut(&TimeMatrix) -> Result<TimeMatrix>,
    ) -> Result<(TimeMatrix, TimeMatrix)> {
        (**self).forward_and_vjp(x, upstream)
    }
}

/// Keeps only the last output row of a sequence model (`t_y = T`), turning a
/// per-step classifier into a sequence-to-one predictor.
#[derive(Clone, Debug)]
pub struct FinalStep<M>(pub M);

impl<M: DifferentiableModel> DifferentiableModel for FinalStep<M> {
    fn output_kind(&self) -> OutputKind {
        self.0.output_kind()
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        let y = self.0.forward(x)?;
        TimeMatrix::from_vec(1, y.cols(), y.row(y.rows() - 1).to_vec())
    }

    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix> {
        let y = self.0.forward(x)?;
        upstream.expect_shape((1, y.cols()), "final-step upstream")?;
        let mut full = TimeMatrix::zeros(y.rows(), y.cols());
        for c in 0..y.cols() {
            full[(y.rows() - 1, c)] = upstream[(0, c)];
        }
        self.0.input_vjp(x, &full)
    }
}

/// `f(X) = sum_{t,i} w_{t,i} x_{t,i}` as a single output. Handy for checking
/// attribution methods against closed forms.
#[derive(Clone, Debug)]
pub struct LinearModel {
    weights: TimeMatrix,
}

impl LinearModel {
    pub fn new(weights: TimeMatrix) -> Self {
        LinearModel { weights }
    }

    pub fn weights(&self) -> &TimeMatrix {
        &self.weights
    }
}

impl DifferentiableModel for LinearModel {
    fn output_kind(&self) -> OutputKind {
        OutputKind::Regression
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        x.expect_shape(self.weights.shape(), "linear model input")?;
        TimeMatrix::from_vec(1, 1, vec![self.weights.dot(x)])
    }

    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix> {
        x.expect_shape(self.weights.shape(), "linear model input")?;
        upstream.expect_shape((1, 1), "linear model upstream")?;
        self.weights.map(|w| w * upstream[(0, 0)])
    }
}

pub(crate) fn check_input(x: &TimeMatrix, cols: usize, what: &str) -> Result<()> {
    if x.cols() != cols {
        return Err(Error::Dimension(format!(
            "{what}: expected {cols} features, got {}",
            x.cols()
        )));
    }
    Ok(())
}
