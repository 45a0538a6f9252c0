//! Softmax classification head with an optional rectified hidden layer.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loss::PROBABILITY_FLOOR;
use super::HeadGradients;
use crate::serde_util::{from_rows, rows_of};
use crate::{FppError, Result};

/// Default width of the hidden layer.
pub const DEFAULT_HIDDEN_WIDTH: usize = 16;

/// `softmax(W₂ · relu(W₁ y + b₁) + b₂)`, or `softmax(W₂ y + b₂)` when the
/// hidden width is zero.
///
/// Parameters live in one flat vector laid out as `W₁` (row-major `H × 2`),
/// `b₁`, `W₂` (row-major `K × in`), `b₂`, so optimizers can treat them
/// uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SoftmaxRepr", into = "SoftmaxRepr")]
pub struct SoftmaxHead {
    hidden_width: usize,
    class_count: usize,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftmaxRepr {
    hidden_width: usize,
    class_count: usize,
    activation: String,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

impl From<SoftmaxHead> for SoftmaxRepr {
    fn from(h: SoftmaxHead) -> Self {
        SoftmaxRepr {
            hidden_width: h.hidden_width,
            class_count: h.class_count,
            activation: "relu".into(),
            w1: rows_of(&h.w1()),
            b1: h.b1().to_vec(),
            w2: rows_of(&h.w2()),
            b2: h.b2().to_vec(),
        }
    }
}

impl TryFrom<SoftmaxRepr> for SoftmaxHead {
    type Error = FppError;
    fn try_from(r: SoftmaxRepr) -> Result<Self> {
        if r.activation != "relu" {
            return Err(FppError::invalid(format!("unsupported activation '{}'", r.activation)));
        }
        let w1 = if r.w1.is_empty() {
            Array2::zeros((0, 2))
        } else {
            from_rows(&r.w1).map_err(FppError::invalid)?
        };
        let w2 = from_rows(&r.w2).map_err(FppError::invalid)?;
        let h = SoftmaxHead::from_parts(w1, r.b1, w2, r.b2)?;
        if h.hidden_width != r.hidden_width || h.class_count != r.class_count {
            return Err(FppError::invalid("softmax head shape fields disagree with weights"));
        }
        Ok(h)
    }
}

impl SoftmaxHead {
    fn input_width(hidden_width: usize) -> usize {
        if hidden_width == 0 {
            2
        } else {
            hidden_width
        }
    }

    fn param_count(hidden_width: usize, class_count: usize) -> usize {
        3 * hidden_width + class_count * Self::input_width(hidden_width) + class_count
    }

    fn check_shape(hidden_width: usize, class_count: usize) -> Result<()> {
        if class_count < 2 {
            return Err(FppError::invalid(format!(
                "softmax head needs at least 2 classes, got {class_count}"
            )));
        }
        let _ = hidden_width;
        Ok(())
    }

    pub fn zeros(hidden_width: usize, class_count: usize) -> Result<Self> {
        Self::check_shape(hidden_width, class_count)?;
        Ok(SoftmaxHead {
            hidden_width,
            class_count,
            params: vec![0.0; Self::param_count(hidden_width, class_count)],
        })
    }

    /// Gaussian weights scaled by `1/√fan_in`, zero biases.
    pub fn random<R: Rng + ?Sized>(hidden_width: usize, class_count: usize, rng: &mut R) -> Result<Self> {
        let mut h = Self::zeros(hidden_width, class_count)?;
        let hw = hidden_width;
        let w1_gain = 1.0 / 2f64.sqrt();
        for v in &mut h.params[..2 * hw] {
            *v = w1_gain * rng.sample::<f64, _>(StandardNormal);
        }
        let inw = Self::input_width(hw);
        let w2_gain = 1.0 / (inw as f64).sqrt();
        let start = 3 * hw;
        for v in &mut h.params[start..start + class_count * inw] {
            *v = w2_gain * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(h)
    }

    /// Build from explicit weights. `w1` is `H × 2` (use `0 × 2` for a linear
    /// head) and `w2` is `K × H` (or `K × 2`).
    pub fn from_parts(w1: Array2<f64>, b1: Vec<f64>, w2: Array2<f64>, b2: Vec<f64>) -> Result<Self> {
        let hw = w1.nrows();
        let k = w2.nrows();
        Self::check_shape(hw, k)?;
        if w1.ncols() != 2 || b1.len() != hw || w2.ncols() != Self::input_width(hw) || b2.len() != k {
            return Err(FppError::invalid("inconsistent softmax layer shapes"));
        }
        let params: Vec<f64> = w1
            .iter()
            .chain(&b1)
            .chain(w2.iter())
            .chain(&b2)
            .copied()
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(FppError::invalid("non-finite softmax weight"));
        }
        Ok(SoftmaxHead {
            hidden_width: hw,
            class_count: k,
            params,
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let hw = self.hidden_width;
        let b1 = 2 * hw;
        let w2 = 3 * hw;
        let b2 = w2 + self.class_count * Self::input_width(hw);
        (b1, w2, b2)
    }

    pub fn w1(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.hidden_width, 2), self.params[..2 * self.hidden_width].to_vec())
            .expect("layout")
    }

    pub fn b1(&self) -> &[f64] {
        let (b1, w2, _) = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> Array2<f64> {
        let (_, w2, b2) = self.offsets();
        Array2::from_shape_vec(
            (self.class_count, Self::input_width(self.hidden_width)),
            self.params[w2..b2].to_vec(),
        )
        .expect("layout")
    }

    pub fn b2(&self) -> &[f64] {
        let (_, _, b2) = self.offsets();
        &self.params[b2..]
    }

    /// Forward pass for one point: hidden pre-activations (empty for a
    /// linear head) and class probabilities.
    fn forward(&self, y: [f64; 2], pre: &mut [f64], probs: &mut [f64]) {
        let hw = self.hidden_width;
        let (b1o, w2o, b2o) = self.offsets();
        let p = &self.params;
        for j in 0..hw {
            pre[j] = p[2 * j] * y[0] + p[2 * j + 1] * y[1] + p[b1o + j];
        }
        let inw = Self::input_width(hw);
        for (k, out) in probs.iter_mut().enumerate() {
            let row = &p[w2o + k * inw..w2o + (k + 1) * inw];
            let mut z = p[b2o + k];
            if hw == 0 {
                z += row[0] * y[0] + row[1] * y[1];
            } else {
                for j in 0..hw {
                    z += row[j] * pre[j].max(0.0);
                }
            }
            *out = z;
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in probs.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in probs.iter_mut() {
            *v /= sum;
        }
    }

    pub fn predict(&self, y: [f64; 2]) -> Vec<f64> {
        let mut pre = vec![0.0; self.hidden_width];
        let mut probs = vec![0.0; self.class_count];
        self.forward(y, &mut pre, &mut probs);
        probs
    }

    pub fn predict_batch(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((y.nrows(), self.class_count));
        let mut pre = vec![0.0; self.hidden_width];
        for (row, mut o) in y.rows().into_iter().zip(out.rows_mut()) {
            let probs = o.as_slice_mut().expect("row-major");
            self.forward([row[0], row[1]], &mut pre, probs);
        }
        out
    }

    /// Batch cross-entropy (probabilities floored at the same threshold as
    /// [`super::cross_entropy_loss`]) with exact backpropagated gradients.
    pub fn loss_and_gradients(&self, y: ArrayView2<f64>, labels: &[usize]) -> Result<HeadGradients> {
        let n = y.nrows();
        let hw = self.hidden_width;
        let k = self.class_count;
        let inw = Self::input_width(hw);
        let (b1o, w2o, b2o) = self.offsets();
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut grad_inputs = Array2::zeros((n, 2));
        let mut pre = vec![0.0; hw];
        let mut probs = vec![0.0; k];
        let mut dz = vec![0.0; k];
        let mut dh = vec![0.0; hw];
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        for (i, row) in y.rows().into_iter().enumerate() {
            let label = labels[i];
            if label >= k {
                return Err(FppError::LabelOutOfRange {
                    label,
                    class_count: k,
                });
            }
            let yi = [row[0], row[1]];
            self.forward(yi, &mut pre, &mut probs);
            let pl = probs[label];
            loss -= pl.max(PROBABILITY_FLOOR).ln();
            if pl < PROBABILITY_FLOOR {
                // the floored loss is locally constant
                continue;
            }
            for c in 0..k {
                dz[c] = (probs[c] - if c == label { 1.0 } else { 0.0 }) * inv_n;
                grad[b2o + c] += dz[c];
            }
            let (mut gy0, mut gy1) = (0.0, 0.0);
            if hw == 0 {
                for c in 0..k {
                    let row_w = &p[w2o + c * inw..w2o + (c + 1) * inw];
                    grad[w2o + c * inw] += dz[c] * yi[0];
                    grad[w2o + c * inw + 1] += dz[c] * yi[1];
                    gy0 += dz[c] * row_w[0];
                    gy1 += dz[c] * row_w[1];
                }
            } else {
                dh.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..k {
                    let base = w2o + c * inw;
                    for j in 0..hw {
                        let a = pre[j].max(0.0);
                        grad[base + j] += dz[c] * a;
                        dh[j] += dz[c] * p[base + j];
                    }
                }
                for j in 0..hw {
                    if pre[j] > 0.0 {
                        let d = dh[j];
                        grad[2 * j] += d * yi[0];
                        grad[2 * j + 1] += d * yi[1];
                        grad[b1o + j] += d;
                        gy0 += d * p[2 * j];
                        gy1 += d * p[2 * j + 1];
                    }
                }
            }
            grad_inputs[[i, 0]] = gy0;
            grad_inputs[[i, 1]] = gy1;
        }
        Ok(HeadGradients {
            loss: loss * inv_n,
            params: grad,
            inputs: grad_inputs,
        })
    }
}
