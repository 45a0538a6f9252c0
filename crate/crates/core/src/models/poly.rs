//! Bivariate polynomial regression head.
//!
//! Monomials `y₁^a y₂^b` are ordered by total degree, then by descending
//! power of `y₁`: `[1, y₁, y₂, y₁², y₁y₂, y₂², y₁³, …]`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::HeadGradients;
use crate::linalg::cholesky_solve;
use crate::{FppError, Result};

/// Ridge added to the scaled normal equations in [`ols_fit`].
pub const OLS_RIDGE: f64 = 1e-10;

/// Number of monomials of total degree at most `degree` in two variables.
pub fn monomial_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs `(a, b)` in the fixed monomial order.
pub fn monomial_exponents(degree: usize) -> Vec<(usize, usize)> {
    (0..=degree)
        .flat_map(|t| (0..=t).rev().map(move |a| (a, t - a)))
        .collect()
}

fn powers(y: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    for k in 1..=degree {
        out[k] = out[k - 1] * y;
    }
}

/// Monomial feature vector of a 2D point.
pub fn monomial_basis(y: [f64; 2], degree: usize) -> Vec<f64> {
    let mut p1 = vec![0.0; degree + 1];
    let mut p2 = vec![0.0; degree + 1];
    powers(y[0], degree, &mut p1);
    powers(y[1], degree, &mut p2);
    monomial_exponents(degree)
        .into_iter()
        .map(|(a, b)| p1[a] * p2[b])
        .collect()
}

/// `n × M` design matrix of monomial features for the rows of `y`.
pub fn design_matrix(y: ArrayView2<f64>, degree: usize) -> Array2<f64> {
    let m = monomial_count(degree);
    let mut phi = Array2::zeros((y.nrows(), m));
    for (mut out, row) in phi.rows_mut().into_iter().zip(y.rows()) {
        for (dst, v) in out.iter_mut().zip(monomial_basis([row[0], row[1]], degree)) {
            *dst = v;
        }
    }
    phi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct PolynomialHead {
    degree: usize,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRepr {
    degree: usize,
    ordering: String,
    coefficients: Vec<f64>,
}

const ORDERING: &str = "graded-lex: y1^a y2^b by total degree, then descending a";

impl From<PolynomialHead> for PolyRepr {
    fn from(h: PolynomialHead) -> Self {
        PolyRepr {
            degree: h.degree,
            ordering: ORDERING.to_string(),
            coefficients: h.coefficients,
        }
    }
}

impl TryFrom<PolyRepr> for PolynomialHead {
    type Error = FppError;
    fn try_from(r: PolyRepr) -> Result<Self> {
        PolynomialHead::new(r.degree, r.coefficients)
    }
}

impl PolynomialHead {
    pub fn new(degree: usize, coefficients: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(FppError::invalid("polynomial degree must be at least 1"));
        }
        let m = monomial_count(degree);
        if coefficients.len() != m {
            return Err(FppError::DimensionMismatch {
                expected: m,
                actual: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(FppError::invalid("non-finite polynomial coefficient"));
        }
        Ok(PolynomialHead {
            degree,
            coefficients,
        })
    }

    pub fn zeros(degree: usize) -> Result<Self> {
        Self::new(degree, vec![0.0; monomial_count(degree)])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn predict(&self, y: [f64; 2]) -> f64 {
        monomial_basis(y, self.degree)
            .iter()
            .zip(&self.coefficients)
            .map(|(p, c)| p * c)
            .sum()
    }

    pub fn predict_batch(&self, y: ArrayView2<f64>) -> Vec<f64> {
        y.rows()
            .into_iter()
            .map(|r| self.predict([r[0], r[1]]))
            .collect()
    }

    /// Batch MSE with exact gradients with respect to the coefficients and
    /// to every input point.
    pub fn loss_and_gradients(&self, y: ArrayView2<f64>, targets: &[f64]) -> HeadGradients {
        let n = y.nrows();
        let d = self.degree;
        let exps = monomial_exponents(d);
        let mut p1 = vec![0.0; d + 1];
        let mut p2 = vec![0.0; d + 1];
        let mut grad_params = vec![0.0; exps.len()];
        let mut grad_inputs = Array2::zeros((n, 2));
        let mut phi = vec![0.0; exps.len()];
        let scale = 2.0 / n as f64;
        let mut loss = 0.0;
        for (i, row) in y.rows().into_iter().enumerate() {
            powers(row[0], d, &mut p1);
            powers(row[1], d, &mut p2);
            let mut pred = 0.0;
            for (k, &(a, b)) in exps.iter().enumerate() {
                phi[k] = p1[a] * p2[b];
                pred += phi[k] * self.coefficients[k];
            }
            let resid = pred - targets[i];
            loss += resid * resid;
            let g = scale * resid;
            let (mut d1, mut d2) = (0.0, 0.0);
            for (k, &(a, b)) in exps.iter().enumerate() {
                grad_params[k] += g * phi[k];
                let c = self.coefficients[k];
                if a > 0 {
                    d1 += c * a as f64 * p1[a - 1] * p2[b];
                }
                if b > 0 {
                    d2 += c * b as f64 * p1[a] * p2[b - 1];
                }
            }
            grad_inputs[[i, 0]] = g * d1;
            grad_inputs[[i, 1]] = g * d2;
        }
        HeadGradients {
            loss: loss / n as f64,
            params: grad_params,
            inputs: grad_inputs,
        }
    }
}

/// Closed-form least-squares polynomial fit through the normal equations
/// `(ΦᵀΦ/n + λI) θ = Φᵀf/n` with `λ =` [`OLS_RIDGE`].
pub fn ols_fit(y: ArrayView2<f64>, targets: &[f64], degree: usize) -> Result<PolynomialHead> {
    if degree == 0 {
        return Err(FppError::invalid("polynomial degree must be at least 1"));
    }
    let n = y.nrows();
    if targets.len() != n {
        return Err(FppError::DimensionMismatch {
            expected: n,
            actual: targets.len(),
        });
    }
    let m = monomial_count(degree);
    if n < m {
        return Err(FppError::invalid(format!(
            "least squares with {m} coefficients needs at least {m} samples, got {n}"
        )));
    }
    let phi = design_matrix(y, degree);
    let gram = phi.t().dot(&phi) / n as f64;
    let mut a: Vec<f64> = gram.iter().copied().collect();
    for k in 0..m {
        a[k * m + k] += OLS_RIDGE;
    }
    let rhs: Vec<f64> = phi
        .columns()
        .into_iter()
        .map(|c| c.iter().zip(targets).map(|(p, t)| p * t).sum::<f64>() / n as f64)
        .collect();
    let theta = cholesky_solve(&a, &rhs)
        .ok_or_else(|| FppError::invalid("normal equations are not positive definite"))?;
    PolynomialHead::new(degree, theta)
}
