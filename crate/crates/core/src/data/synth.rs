//! Synthetic datasets with a known 2D ground-truth subspace.
//!
//! All generators draw features i.i.d. uniform on `[-1, 1]^D` (blobs use
//! Gaussian clusters instead) and are bit-reproducible given their
//! parameters and seed.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::{Dataset, GroundTruth, Response};
use crate::linalg::orthonormalize_columns;
use crate::rng::{derive_seed, seeded, FppRng};
use crate::{FppError, Result};

/// Radial Gaussian ridge `exp(-(r - radius)² / width²)` on the first two
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleShape {
    pub radius: f64,
    pub width: f64,
}

impl CircleShape {
    /// Thin ring at radius 0.6, width 0.2.
    pub const THIN_RING: CircleShape = CircleShape {
        radius: 0.6,
        width: 0.2,
    };

    /// Broad ring at radius 0.3, width 0.7; a degree-3 polynomial explains
    /// about 97% of its variance on the true plane.
    pub const BROAD_RING: CircleShape = CircleShape {
        radius: 0.3,
        width: 0.7,
    };

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let r = x1.hypot(x2);
        let t = (r - self.radius) / self.width;
        (-t * t).exp()
    }
}

impl Default for CircleShape {
    fn default() -> Self {
        CircleShape::BROAD_RING
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(FppError::invalid(format!("dim must be at least 2, got {dim}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(FppError::EmptyDataset);
    }
    Ok(())
}

fn uniform_features(n: usize, dim: usize, rng: &mut FppRng) -> Array2<f64> {
    let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid bounds");
    Array2::from_shape_simple_fn((n, dim), || u.sample(rng))
}

fn axis_basis(dim: usize) -> Array2<f64> {
    let mut b = Array2::zeros((dim, 2));
    b[[0, 0]] = 1.0;
    b[[1, 1]] = 1.0;
    b
}

fn random_plane(dim: usize, rng: &mut FppRng) -> Array2<f64> {
    loop {
        let g = Array2::from_shape_simple_fn((dim, 2), || StandardNormal.sample(rng));
        if let Some(q) = orthonormalize_columns(g) {
            return q;
        }
    }
}

/// Single-response circle dataset with the default [`CircleShape`].
pub fn synth_circle(n: usize, dim: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    synth_circle_with(n, dim, noise_sigma, CircleShape::default(), seed)
}

pub fn synth_circle_with(
    n: usize,
    dim: usize,
    noise_sigma: f64,
    shape: CircleShape,
    seed: u64,
) -> Result<Dataset> {
    check_dim(dim)?;
    check_n(n)?;
    if !(noise_sigma >= 0.0) {
        return Err(FppError::invalid("noise_sigma must be non-negative"));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let x = uniform_features(n, dim, &mut rng);
    let mut noise_rng = seeded(derive_seed(seed, 1));
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let f: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| {
            let e = if noise_sigma > 0.0 {
                noise.sample(&mut noise_rng)
            } else {
                0.0
            };
            shape.eval(row[0], row[1]) + e
        })
        .collect();
    let truth = GroundTruth {
        basis: axis_basis(dim),
        description: format!(
            "circle: exp(-(|x[0..2]| - {})^2 / {}^2) + N(0, {}^2)",
            shape.radius, shape.width, noise_sigma
        ),
    };
    Dataset::new(x, vec![Response::continuous("circle", f)?])?.with_ground_truth(truth)
}

/// Coefficients `(a, b, c, d, e, p, q)` of the multi-response family
///
/// `f(u, v) = a·u + b·v + c·u·v + d·(u² − v²) + e·exp(−((u − p)² + (v − q)²) / 2)`
///
/// where `u = √3⟨a, x⟩` and `v = √3⟨b, x⟩` are the hidden coordinates
/// rescaled to unit variance. Response `l` uses row `l mod 15`; rows past the
/// first cycle rotate the hidden coordinates by `l / 15` radians.
pub const MULTI_RESPONSE_FORMULAS: [[f64; 7]; 15] = [
    [1.0, 0.5, 0.0, 0.3, 0.0, 0.0, 0.0],
    [-0.5, 1.0, 0.4, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.0],
    [0.3, -0.3, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.5, 0.0, 0.0, 1.0, 1.0, 0.0],
    [0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0],
    [0.8, 0.8, 0.3, -0.3, 0.0, 0.0, 0.0],
    [0.4, 0.4, 0.0, 0.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, 0.0, 0.5, 0.5, 0.5, -0.5],
    [0.2, 0.6, -0.6, 0.2, 0.0, 0.0, 0.0],
    [-1.0, 0.2, 0.2, 0.0, 1.0, -1.0, 1.0],
    [0.4, 0.4, 0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0],
    [0.6, -0.2, 0.0, -0.8, 0.5, 1.0, 1.0],
    [-0.3, -0.7, 0.7, 0.0, 0.8, 0.0, -1.0],
];

fn multi_formula(l: usize, u: f64, v: f64) -> f64 {
    let [a, b, c, d, e, p, q] = MULTI_RESPONSE_FORMULAS[l % MULTI_RESPONSE_FORMULAS.len()];
    let turn = (l / MULTI_RESPONSE_FORMULAS.len()) as f64;
    let (s, co) = turn.sin_cos();
    let (u, v) = (co * u - s * v, s * u + co * v);
    let bump = (-((u - p).powi(2) + (v - q).powi(2)) / 2.0).exp();
    a * u + b * v + c * u * v + d * (u * u - v * v) + e * bump
}

/// `response_count` smooth responses of the same two hidden coordinates
/// `u = ⟨a, x⟩`, `v = ⟨b, x⟩` for a seeded random orthonormal pair `(a, b)`.
pub fn synth_multi(n: usize, dim: usize, response_count: usize, seed: u64) -> Result<Dataset> {
    check_dim(dim)?;
    check_n(n)?;
    if response_count == 0 {
        return Err(FppError::invalid("response_count must be positive"));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let x = uniform_features(n, dim, &mut rng);
    let basis = random_plane(dim, &mut seeded(derive_seed(seed, 1)));
    let hidden = x.dot(&basis) * 3f64.sqrt();
    let responses = (0..response_count)
        .map(|l| {
            let f = hidden
                .rows()
                .into_iter()
                .map(|uv| multi_formula(l, uv[0], uv[1]))
                .collect();
            Response::continuous(format!("f{l}"), f)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = GroundTruth {
        basis,
        description: format!("multi: {response_count} responses of two hidden coordinates"),
    };
    Dataset::new(x, responses)?.with_ground_truth(truth)
}

/// `class_count` isotropic unit-variance Gaussian clusters whose means sit on
/// a regular polygon in a hidden random plane, with minimum pairwise mean
/// distance `separation`. Labels are assigned round-robin.
pub fn synth_blobs(
    n: usize,
    dim: usize,
    class_count: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    check_dim(dim)?;
    check_n(n)?;
    if class_count < 2 {
        return Err(FppError::invalid(format!(
            "class_count must be at least 2, got {class_count}"
        )));
    }
    if !(separation >= 0.0) {
        return Err(FppError::invalid("separation must be non-negative"));
    }
    let basis = random_plane(dim, &mut seeded(derive_seed(seed, 1)));
    let radius = separation / (2.0 * (PI / class_count as f64).sin());
    let means: Vec<Array1<f64>> = (0..class_count)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / class_count as f64;
            (&basis.column(0) * t.cos() + &basis.column(1) * t.sin()) * radius
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    let mut rng = seeded(derive_seed(seed, 0));
    let mut x = Array2::<f64>::zeros((n, dim));
    for (mut row, &l) in x.rows_mut().into_iter().zip(&labels) {
        for (v, m) in row.iter_mut().zip(means[l].iter()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = m + z;
        }
    }
    let truth = GroundTruth {
        basis,
        description: format!(
            "blobs: {class_count} unit-variance clusters, min mean distance {separation}"
        ),
    };
    Dataset::new(x, vec![Response::categorical("class", labels, class_count)?])?
        .with_ground_truth(truth)
}

/// Uniform features with an i.i.d. standard normal response unrelated to
/// them; the null model of the grid study.
pub fn synth_noise(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    if dim == 0 {
        return Err(FppError::invalid("dim must be positive"));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let x = uniform_features(n, dim, &mut rng);
    let mut rrng = seeded(derive_seed(seed, 1));
    let f = (0..n).map(|_| rrng.sample(StandardNormal)).collect();
    Dataset::new(x, vec![Response::continuous("noise", f)?])
}
