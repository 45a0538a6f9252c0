//! Predictor heads mapping the 2D embedding to a response.

pub mod loss;
pub mod poly;
pub mod softmax;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Response, ResponseValues};
use crate::{FppError, Result};

pub use loss::{accuracy, cross_entropy_loss, mse_loss, r2_score, LossValue, PROBABILITY_FLOOR};
pub use poly::{design_matrix, monomial_basis, monomial_count, ols_fit, PolynomialHead, OLS_RIDGE};
pub use softmax::{SoftmaxHead, DEFAULT_HIDDEN_WIDTH};

/// Batch loss with its gradients. `inputs` holds `∂L/∂y_i` row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub loss: f64,
    pub params: Vec<f64>,
    pub inputs: Array2<f64>,
}

/// Target values for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Continuous(&'a [f64]),
    Categorical(&'a [usize]),
}

impl<'a> Target<'a> {
    pub fn of(response: &'a Response) -> Self {
        match response.values() {
            ResponseValues::Continuous { values } => Target::Continuous(values),
            ResponseValues::Categorical { labels, .. } => Target::Categorical(labels),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Target::Continuous(v) => v.len(),
            Target::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Either head type, as stored in a fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "snake_case")]
pub enum Head {
    Polynomial(PolynomialHead),
    Softmax(SoftmaxHead),
}

impl Head {
    /// Initial head for a response: a zero polynomial for continuous
    /// responses, a randomly initialized softmax classifier otherwise.
    pub fn init_for<R: Rng + ?Sized>(
        response: &Response,
        degree: usize,
        hidden_width: usize,
        rng: &mut R,
    ) -> Result<Head> {
        Ok(match response.values() {
            ResponseValues::Continuous { .. } => Head::Polynomial(PolynomialHead::zeros(degree)?),
            ResponseValues::Categorical { class_count, .. } => {
                Head::Softmax(SoftmaxHead::random(hidden_width, *class_count, rng)?)
            }
        })
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Head::Polynomial(h) => h.coefficients(),
            Head::Softmax(h) => h.params(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Head::Polynomial(h) => h.coefficients_mut(),
            Head::Softmax(h) => h.params_mut(),
        }
    }

    fn mismatch() -> FppError {
        FppError::invalid("head type does not match response kind")
    }

    fn check(y: ArrayView2<f64>, target: &Target) -> Result<()> {
        if y.ncols() != 2 {
            return Err(FppError::DimensionMismatch {
                expected: 2,
                actual: y.ncols(),
            });
        }
        if y.nrows() != target.len() {
            return Err(FppError::DimensionMismatch {
                expected: y.nrows(),
                actual: target.len(),
            });
        }
        if y.nrows() == 0 {
            return Err(FppError::EmptyDataset);
        }
        Ok(())
    }

    pub fn loss_and_gradients(&self, y: ArrayView2<f64>, target: Target) -> Result<HeadGradients> {
        Self::check(y, &target)?;
        match (self, target) {
            (Head::Polynomial(h), Target::Continuous(t)) => Ok(h.loss_and_gradients(y, t)),
            (Head::Softmax(h), Target::Categorical(l)) => h.loss_and_gradients(y, l),
            _ => Err(Self::mismatch()),
        }
    }

    /// MSE for a polynomial head, cross-entropy for a softmax head.
    pub fn loss(&self, y: ArrayView2<f64>, target: Target) -> Result<f64> {
        Self::check(y, &target)?;
        match (self, target) {
            (Head::Polynomial(h), Target::Continuous(t)) => Ok(mse_loss(&h.predict_batch(y), t)?.value),
            (Head::Softmax(h), Target::Categorical(l)) => {
                Ok(cross_entropy_loss(h.predict_batch(y).view(), l)?.value)
            }
            _ => Err(Self::mismatch()),
        }
    }

    /// R² for a polynomial head, accuracy for a softmax head.
    pub fn score(&self, y: ArrayView2<f64>, target: Target) -> Result<f64> {
        Self::check(y, &target)?;
        match (self, target) {
            (Head::Polynomial(h), Target::Continuous(t)) => r2_score(&h.predict_batch(y), t),
            (Head::Softmax(h), Target::Categorical(l)) => accuracy(h.predict_batch(y).view(), l),
            _ => Err(Self::mismatch()),
        }
    }
}
