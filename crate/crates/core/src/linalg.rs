//! Small dense kernels: closed-form 2×2 eigen/singular decompositions, the
//! thin SVD of a `D × 2` matrix, Cholesky solves for the normal equations and
//! Gram–Schmidt orthonormalization.

use ndarray::{Array2, ArrayView2, Axis};

/// Eigendecomposition of the symmetric matrix `[[a, b], [b, c]]`.
///
/// `values` are sorted descending; `vectors[k]` is the unit eigenvector for
/// `values[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen2 {
    pub values: [f64; 2],
    pub vectors: [[f64; 2]; 2],
}

pub fn sym_eigen2(a: f64, b: f64, c: f64) -> SymEigen2 {
    let half_trace = 0.5 * (a + c);
    let h = (0.5 * (a - c)).hypot(b);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    SymEigen2 {
        values: [half_trace + h, half_trace - h],
        vectors: [[co, s], [-s, co]],
    }
}

/// Singular values (descending) of a 2×2 matrix given row-major.
pub fn singular_values_2x2(m: [[f64; 2]; 2]) -> [f64; 2] {
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let c = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let e = sym_eigen2(a, b, c);
    let s1 = e.values[0].max(0.0).sqrt();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
    let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
    [s1, s2.min(s1)]
}

/// Thin SVD `P = U Σ Vᵀ` of a `D × 2` matrix.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub sigma: [f64; 2],
    /// Columns of `V` (right singular vectors), `v[k]` pairs with `sigma[k]`.
    pub v: [[f64; 2]; 2],
}

/// Singular values and right singular vectors of a `D × 2` matrix, computed
/// from its 2×2 Gram matrix. The smaller singular value is recovered from
/// the Gram determinant, which is evaluated through a Gram–Schmidt residual
/// to avoid cancellation.
pub fn gram_svd_dx2(p: ArrayView2<f64>) -> ([f64; 2], [[f64; 2]; 2]) {
    debug_assert_eq!(p.ncols(), 2);
    let c0 = p.column(0);
    let c1 = p.column(1);
    let a = c0.dot(&c0);
    let c = c1.dot(&c1);
    let b = c0.dot(&c1);
    let e = sym_eigen2(a, b, c);

    // det(G) = |long|² · |short ⟂ long|²
    let (long, short, long_sq) = if a >= c { (c0, c1, a) } else { (c1, c0, c) };
    let det = if long_sq > 0.0 {
        let coef = long.dot(&short) / long_sq;
        let resid_sq: f64 = long
            .iter()
            .zip(short.iter())
            .map(|(&l, &s)| {
                let r = s - coef * l;
                r * r
            })
            .sum();
        long_sq * resid_sq
    } else {
        0.0
    };
    let s1 = e.values[0].max(0.0).sqrt();
    let s2 = if s1 > 0.0 { (det.max(0.0)).sqrt() / s1 } else { 0.0 };
    ([s1, s2.min(s1)], e.vectors)
}

/// Thin SVD of a `D × 2` matrix of rank 2. Returns `None` when the smaller
/// singular value is not positive.
pub fn thin_svd_dx2(p: ArrayView2<f64>) -> Option<ThinSvd> {
    let (sigma, v) = gram_svd_dx2(p);
    if !(sigma[1] > 0.0) || !sigma[0].is_finite() {
        return None;
    }
    let mut u = Array2::<f64>::zeros((p.nrows(), 2));
    for (k, vk) in v.iter().enumerate() {
        let inv = 1.0 / sigma[k];
        let mut col = u.column_mut(k);
        for (dst, row) in col.iter_mut().zip(p.rows()) {
            *dst = (row[0] * vk[0] + row[1] * vk[1]) * inv;
        }
    }
    Some(ThinSvd { u, sigma, v })
}

/// Frobenius norm of `AᵀA − I` for a matrix with two columns.
pub fn orthonormality_error(p: ArrayView2<f64>) -> f64 {
    let c0 = p.column(0);
    let c1 = p.column(1);
    let a = c0.dot(&c0) - 1.0;
    let b = c0.dot(&c1);
    let c = c1.dot(&c1) - 1.0;
    (a * a + 2.0 * b * b + c * c).sqrt()
}

/// One Newton–Schulz polar refinement step `U ← U (3I − UᵀU) / 2`.
///
/// Converges quadratically to the nearest orthonormal matrix when `U` is
/// already close; used to clean rounding after closed-form factorizations.
pub fn polar_refine(u: &mut Array2<f64>) {
    let g = u.t().dot(&*u);
    let m = [
        [0.5 * (3.0 - g[[0, 0]]), -0.5 * g[[0, 1]]],
        [-0.5 * g[[1, 0]], 0.5 * (3.0 - g[[1, 1]])],
    ];
    for mut row in u.rows_mut() {
        let (x, y) = (row[0], row[1]);
        row[0] = x * m[0][0] + y * m[1][0];
        row[1] = x * m[0][1] + y * m[1][1];
    }
}

/// Orthonormalize the columns of `m` with twice-iterated modified
/// Gram–Schmidt. Returns `None` if the columns are numerically dependent.
pub fn orthonormalize_columns(mut m: Array2<f64>) -> Option<Array2<f64>> {
    let k = m.ncols();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, mut rest) = m.view_mut().split_at(Axis(1), j);
                let qi = done.column(i);
                let mut cj = rest.column_mut(0);
                let proj = qi.dot(&cj);
                cj.scaled_add(-proj, &qi);
            }
        }
        let mut cj = m.column_mut(j);
        let norm = cj.dot(&cj).sqrt();
        if !(norm > 1e-12) {
            return None;
        }
        cj /= norm;
    }
    Some(m)
}

/// Solve `A x = b` for symmetric positive definite `A` (row-major, `n × n`)
/// by Cholesky factorization. Returns `None` if `A` is not positive definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}
