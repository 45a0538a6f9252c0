//! Orthonormal `D × 2` projections and the retraction onto them.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{gram_svd_dx2, orthonormality_error, polar_refine, singular_values_2x2};
use crate::rng::seeded;
use crate::serde_util::{from_rows, rows_of};
use crate::{FppError, Result};

/// Largest `‖PᵀP − I‖_F` accepted for a stored projection.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

/// Singular values at or below this threshold (relative to the larger one,
/// or absolute for unit-scale matrices) count as a collapsed column.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// How a general `D × 2` matrix is mapped back to orthonormal columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetractionMode {
    /// Nearest orthonormal matrix `UVᵀ` in Frobenius norm.
    #[default]
    #[serde(alias = "polar")]
    PolarFactor,
    /// Left singular vectors `U`, in descending singular value order.
    PaperU,
}

/// A `D × 2` matrix with orthonormal columns; `y = Pᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix(Array2<f64>);

impl Serialize for ProjectionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        rows_of(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectionMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = from_rows(&rows).map_err(D::Error::custom)?;
        ProjectionMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Outcome of a retraction.
#[derive(Debug, Clone)]
pub struct Retraction {
    pub projection: ProjectionMatrix,
    /// A collapsed column was replaced by a random orthogonal direction.
    pub recovered: bool,
}

impl ProjectionMatrix {
    /// Wrap a matrix that already has orthonormal columns.
    pub fn new(p: Array2<f64>) -> Result<Self> {
        if p.ncols() != 2 {
            return Err(FppError::DimensionMismatch {
                expected: 2,
                actual: p.ncols(),
            });
        }
        if p.nrows() < 2 {
            return Err(FppError::invalid("projection needs at least 2 input dimensions"));
        }
        let err = orthonormality_error(p.view());
        if !(err < ORTHONORMALITY_TOLERANCE) {
            return Err(FppError::invalid(format!(
                "projection columns are not orthonormal (‖PᵀP − I‖ = {err:e})"
            )));
        }
        Ok(ProjectionMatrix(p))
    }

    /// The first two coordinate axes of `R^dim`.
    pub fn axes(dim: usize) -> Result<Self> {
        let mut p = Array2::zeros((dim, 2));
        if dim >= 2 {
            p[[0, 0]] = 1.0;
            p[[1, 1]] = 1.0;
        }
        Self::new(p)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `Y = X P`.
    pub fn project(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(FppError::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.dot(&self.0))
    }

    /// The same plane with its axes rotated by `degrees`, so that
    /// `project` returns the embedding rotated counter-clockwise.
    pub fn rotated(&self, degrees: f64) -> ProjectionMatrix {
        let r = rotation_matrix(degrees);
        // y' = R y = R Pᵀ x, so P' = P Rᵀ
        let mut p = self.0.clone();
        for mut row in p.rows_mut() {
            let (a, b) = (row[0], row[1]);
            row[0] = r[0][0] * a + r[0][1] * b;
            row[1] = r[1][0] * a + r[1][1] * b;
        }
        ProjectionMatrix(p)
    }
}

/// Row-major 2×2 counter-clockwise rotation. Multiples of 90° are exact.
pub fn rotation_matrix(degrees: f64) -> [[f64; 2]; 2] {
    let turns = degrees.rem_euclid(360.0);
    let (s, c) = if turns == 0.0 {
        (0.0, 1.0)
    } else if turns == 90.0 {
        (1.0, 0.0)
    } else if turns == 180.0 {
        (0.0, -1.0)
    } else if turns == 270.0 {
        (-1.0, 0.0)
    } else {
        turns.to_radians().sin_cos()
    };
    [[c, -s], [s, c]]
}

/// Rotate every row of an `n × 2` embedding counter-clockwise.
pub fn rotate_embedding(y: ArrayView2<f64>, degrees: f64) -> Array2<f64> {
    let r = rotation_matrix(degrees);
    let mut out = y.to_owned();
    for mut row in out.rows_mut() {
        let (a, b) = (row[0], row[1]);
        row[0] = r[0][0] * a + r[0][1] * b;
        row[1] = r[1][0] * a + r[1][1] * b;
    }
    out
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || std * rng.sample::<f64, _>(StandardNormal))
}

/// A uniformly random 2D subspace of `R^dim`: a Gaussian matrix followed by
/// the polar retraction.
pub fn random_orthonormal(dim: usize, seed: u64) -> Result<ProjectionMatrix> {
    random_orthonormal_with(dim, &mut seeded(seed))
}

pub fn random_orthonormal_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<ProjectionMatrix> {
    if dim < 2 {
        return Err(FppError::invalid(format!("projection needs dim ≥ 2, got {dim}")));
    }
    loop {
        let g = gaussian_matrix(dim, 2, 1.0, rng);
        let r = retract_with(g.view(), RetractionMode::PolarFactor, rng)?;
        if !r.recovered {
            return Ok(r.projection);
        }
    }
}

/// Map a `D × 2` matrix back to orthonormal columns through its thin SVD.
///
/// A rank-deficient input keeps its dominant left singular vector and gets a
/// fresh random direction orthogonal to it, drawn from `rng`.
pub fn retract_with<R: Rng + ?Sized>(
    p: ArrayView2<f64>,
    mode: RetractionMode,
    rng: &mut R,
) -> Result<Retraction> {
    let dim = p.nrows();
    if p.ncols() != 2 {
        return Err(FppError::DimensionMismatch {
            expected: 2,
            actual: p.ncols(),
        });
    }
    if dim < 2 {
        return Err(FppError::invalid("projection needs at least 2 input dimensions"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(FppError::invalid("projection has non-finite entries"));
    }
    let (sigma, v) = gram_svd_dx2(p);
    let collapsed = !(sigma[1] > RANK_TOLERANCE * sigma[0].max(1.0));
    if collapsed {
        return Ok(Retraction {
            projection: recover(p, sigma, v, rng),
            recovered: true,
        });
    }

    // U = P V Σ⁻¹ ; polar factor U Vᵀ = P V Σ⁻¹ Vᵀ
    let m = match mode {
        RetractionMode::PaperU => [
            [v[0][0] / sigma[0], v[1][0] / sigma[1]],
            [v[0][1] / sigma[0], v[1][1] / sigma[1]],
        ],
        RetractionMode::PolarFactor => {
            let mut m = [[0.0; 2]; 2];
            for (k, vk) in v.iter().enumerate() {
                let w = 1.0 / sigma[k];
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] += w * vk[i] * vk[j];
                    }
                }
            }
            m
        }
    };
    let mut out = p.dot(&ndarray::arr2(&m));
    polar_refine(&mut out);
    Ok(Retraction {
        projection: ProjectionMatrix(out),
        recovered: false,
    })
}

fn recover<R: Rng + ?Sized>(
    p: ArrayView2<f64>,
    sigma: [f64; 2],
    v: [[f64; 2]; 2],
    rng: &mut R,
) -> ProjectionMatrix {
    let dim = p.nrows();
    let mut first = if sigma[0] > 0.0 {
        p.dot(&ndarray::arr1(&v[0])) / sigma[0]
    } else {
        gaussian_matrix(dim, 1, 1.0, rng).column(0).to_owned()
    };
    let norm = first.dot(&first).sqrt();
    first /= norm;
    loop {
        let mut second = gaussian_matrix(dim, 1, 1.0, rng).column(0).to_owned();
        for _ in 0..2 {
            let c = first.dot(&second);
            second.scaled_add(-c, &first);
        }
        let n2 = second.dot(&second).sqrt();
        if n2 > 1e-6 {
            second /= n2;
            let mut out = Array2::zeros((dim, 2));
            out.column_mut(0).assign(&first);
            out.column_mut(1).assign(&second);
            polar_refine(&mut out);
            return ProjectionMatrix(out);
        }
    }
}

/// Principal angles `(θ₁, θ₂)` in radians, `θ₁ ≤ θ₂`, between the spans of
/// two projections.
///
/// Cosines are the singular values of `PᵀQ` and sines those of
/// `Q − P(PᵀQ)`; pairing them through `atan2` keeps small angles accurate.
pub fn principal_angles(p: &ProjectionMatrix, q: &ProjectionMatrix) -> Result<(f64, f64)> {
    if p.dim() != q.dim() {
        return Err(FppError::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    let c = p.0.t().dot(&q.0);
    let cos = singular_values_2x2([[c[[0, 0]], c[[0, 1]]], [c[[1, 0]], c[[1, 1]]]]);
    let resid = &q.0 - &p.0.dot(&c);
    let (sin, _) = gram_svd_dx2(resid.view());
    let t1 = sin[1].atan2(cos[0].min(1.0));
    let t2 = sin[0].atan2(cos[1].clamp(0.0, 1.0));
    Ok((t1.min(t2), t1.max(t2)))
}

/// A random `dim_in × dim_out` map with orthonormal columns, drawn as a
/// Gaussian matrix with entries of variance `1/dim_out` and then
/// orthonormalized.
pub fn random_projection_preprocess(dim_in: usize, dim_out: usize, seed: u64) -> Result<Array2<f64>> {
    if dim_out < 2 || dim_out >= dim_in {
        return Err(FppError::invalid(format!(
            "pre-projection needs 2 ≤ D′ < D, got D′ = {dim_out}, D = {dim_in}"
        )));
    }
    let mut rng = seeded(seed);
    loop {
        let g = gaussian_matrix(dim_in, dim_out, 1.0 / (dim_out as f64).sqrt(), &mut rng);
        if let Some(q) = crate::linalg::orthonormalize_columns(g) {
            return Ok(q);
        }
    }
}

/// The `D × 2` map equivalent to pre-projecting with `pre` and then applying
/// `p`, retracted so that rounding never leaves it off the manifold.
pub fn compose(pre: &Array2<f64>, p: &ProjectionMatrix) -> Result<ProjectionMatrix> {
    if pre.ncols() != p.dim() {
        return Err(FppError::DimensionMismatch {
            expected: p.dim(),
            actual: pre.ncols(),
        });
    }
    let m = pre.dot(&p.0);
    let r = retract_with(m.view(), RetractionMode::PolarFactor, &mut seeded(0))?;
    if r.recovered {
        return Err(FppError::RankDeficient { sigma_min: 0.0 });
    }
    Ok(r.projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::f64::consts::FRAC_PI_2;

    fn retract(p: ArrayView2<f64>, mode: RetractionMode) -> Retraction {
        retract_with(p, mode, &mut seeded(0)).unwrap()
    }

    #[test]
    fn random_orthonormal_examples() {
        let p = random_orthonormal(2, 5).unwrap();
        let m = p.matrix();
        let det = m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
        assert_abs_diff_eq!(det.abs(), 1.0, epsilon = 1e-10);
        for d in [3, 10, 500] {
            assert!(orthonormality_error(random_orthonormal(d, 9).unwrap().matrix().view()) < 1e-10);
        }
        assert!(random_orthonormal(1, 0).is_err());
        assert_eq!(random_orthonormal(7, 3).unwrap(), random_orthonormal(7, 3).unwrap());
    }

    #[test]
    fn retract_orthonormal_is_identity() {
        let p = random_orthonormal(6, 1).unwrap();
        let r = retract(p.matrix().view(), RetractionMode::PolarFactor);
        assert!(!r.recovered);
        for (a, b) in r.projection.matrix().iter().zip(p.matrix()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn retract_normalizes_scaled_columns() {
        let q = random_orthonormal(5, 2).unwrap();
        let mut p = q.matrix().clone();
        p.column_mut(0).mapv_inplace(|v| 2.0 * v);
        p.column_mut(1).mapv_inplace(|v| 3.0 * v);
        let r = retract(p.view(), RetractionMode::PolarFactor).projection;
        for (a, b) in r.matrix().iter().zip(q.matrix()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let u = retract(p.view(), RetractionMode::PaperU).projection;
        assert!(orthonormality_error(u.matrix().view()) < 1e-10);
        // U is ordered by singular value: the column scaled by 3 comes first
        let dot: f64 = u.matrix().column(0).dot(&q.matrix().column(1));
        assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn retract_rank_deficient_recovers() {
        let p = array![[1.0, 2.0], [0.0, 0.0], [1.0, 2.0]];
        let r = retract(p.view(), RetractionMode::PolarFactor);
        assert!(r.recovered);
        let m = r.projection.matrix();
        assert!(orthonormality_error(m.view()) < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(m[[0, 0]].abs(), s, epsilon = 1e-12);
        assert_abs_diff_eq!(m[[2, 0]].abs(), s, epsilon = 1e-12);
        let zero = Array2::zeros((4, 2));
        assert!(retract(zero.view(), RetractionMode::PaperU).recovered);
    }

    #[test]
    fn principal_angle_examples() {
        let p = random_orthonormal(6, 4).unwrap();
        let (a, b) = principal_angles(&p, &p).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);

        let e = ProjectionMatrix::axes(4).unwrap();
        let f = ProjectionMatrix::new(array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (a, b) = principal_angles(&e, &f).unwrap();
        assert_abs_diff_eq!(a, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(b, FRAC_PI_2, epsilon = 1e-15);

        let rot = p.rotated(37.0);
        let (a, b) = principal_angles(&p, &rot).unwrap();
        assert!(a < 1e-10 && b < 1e-10);

        let g = ProjectionMatrix::new(array![[1.0, 0.0], [0.0, 0.6], [0.0, 0.8]]).unwrap();
        let h = ProjectionMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let (a, b) = principal_angles(&g, &h).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.8f64.atan2(0.6), epsilon = 1e-15);
        assert!(principal_angles(&g, &e).is_err());
    }

    #[test]
    fn tiny_angles_are_resolved() {
        let eps: f64 = 1e-9;
        let g = ProjectionMatrix::new(array![[1.0, 0.0], [0.0, eps.cos()], [0.0, eps.sin()]]).unwrap();
        let h = ProjectionMatrix::axes(3).unwrap();
        let (_, b) = principal_angles(&g, &h).unwrap();
        assert_abs_diff_eq!(b, eps, epsilon = 1e-20);
    }

    #[test]
    fn rotation_periodicity_and_exact_quarter_turns() {
        let y = array![[1.0, 2.0], [-0.5, 3.0]];
        assert_eq!(rotate_embedding(y.view(), 0.0), y);
        assert_eq!(rotate_embedding(y.view(), 360.0), y);
        assert_eq!(rotate_embedding(y.view(), 90.0), array![[-2.0, 1.0], [-3.0, -0.5]]);
        let r = rotate_embedding(y.view(), 30.0);
        let back = rotate_embedding(r.view(), -30.0);
        for (a, b) in back.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotated_projection_rotates_embedding() {
        let p = random_orthonormal(5, 8).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64 * 0.1 - 1.0);
        let a = rotate_embedding(p.project(x.view()).unwrap().view(), 71.0);
        let b = p.rotated(71.0).project(x.view()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn preprocess_and_compose() {
        let r = random_projection_preprocess(40, 8, 3).unwrap();
        assert_eq!(r.dim(), (40, 8));
        let gram = r.t().dot(&r);
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(gram[[i, j]], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        let p = random_orthonormal(8, 1).unwrap();
        let c = compose(&r, &p).unwrap();
        assert!(orthonormality_error(c.matrix().view()) < 1e-10);
        assert!(random_projection_preprocess(10, 10, 0).is_err());
        assert!(random_projection_preprocess(10, 1, 0).is_err());
    }

    #[test]
    fn serde_validates() {
        let p = random_orthonormal(3, 0).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: ProjectionMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ProjectionMatrix>("[[2,0],[0,1],[0,0]]").is_err());
        assert_eq!(
            serde_json::to_string(&RetractionMode::PaperU).unwrap(),
            "\"paper-u\""
        );
        let polar: RetractionMode = serde_json::from_str("\"polar\"").unwrap();
        assert_eq!(polar, RetractionMode::PolarFactor);
    }
}
