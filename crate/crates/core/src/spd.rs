//! Dense symmetric positive-definite linear algebra.
//!
//! Everything the optimizer needs to keep a precision (or covariance) matrix on
//! the manifold of SPD matrices: a pivot-checked Cholesky factorization,
//! triangular inversion, SPD square roots through a symmetric
//! eigendecomposition, the second-order retraction
//!
//! ```text
//! R_P(xi) = P + xi + 1/2 * xi * P^{-1} * xi
//! ```
//!
//! and the vector transport `xi -> E xi E^T` with `E = (P_new P_old^{-1})^{1/2}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry invariant.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A Cholesky pivot must exceed this fraction of the largest diagonal entry.
pub const PIVOT_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

/// Lower-triangular matrix with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

/// Symmetric matrix in the tangent space of the SPD manifold. Not necessarily definite.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix(DMatrix<f64>);

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return false;
            }
        }
    }
    true
}

impl SpdMatrix {
    /// Validates symmetry and positive definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        if !is_symmetric(&m) {
            return Err(Error::InvalidStructure("matrix is not symmetric".into()));
        }
        cholesky_raw(&m)?;
        Ok(SpdMatrix(m))
    }

    /// Caller guarantees the invariants (e.g. the matrix was just factorized).
    #[cfg(test)]
    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        SpdMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(diag))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * scale)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

impl LowerTriangular {
    /// Validates shape, a zero strict upper triangle, and a positive diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    return Err(Error::InvalidStructure(format!(
                        "non-zero entry above the diagonal at ({i}, {j})"
                    )));
                }
            }
            if !(m[(j, j)] > 0.0) {
                return Err(Error::Singular { index: j });
            }
        }
        Ok(LowerTriangular(m))
    }

    pub fn identity(dim: usize) -> Self {
        LowerTriangular(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `log det(L L^T)`.
    pub fn log_det_product(&self) -> f64 {
        2.0 * self.0.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L^T x = b` by back substitution.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let l = &self.0;
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in (i + 1)..n {
                acc -= l[(k, i)] * x[k];
            }
            x[i] = acc / l[(i, i)];
        }
        x
    }
}

impl TangentMatrix {
    /// Validates that `m` is square and symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        if !is_symmetric(&m) {
            return Err(Error::InvalidStructure("tangent matrix is not symmetric".into()));
        }
        Ok(TangentMatrix(m))
    }

    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        TangentMatrix(m)
    }

    pub fn zeros(dim: usize) -> Self {
        TangentMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, factor: f64) -> TangentMatrix {
        TangentMatrix(&self.0 * factor)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &TangentMatrix, b: f64) -> TangentMatrix {
        TangentMatrix(&self.0 * a + &other.0 * b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Returns `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<TangentMatrix> {
    check_square(m)?;
    Ok(TangentMatrix(symmetrized(m)))
}

pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn cholesky_raw(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let threshold = PIVOT_TOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > threshold) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Cholesky factor `L` with `L L^T = A`.
///
/// Fails with [`Error::NotPositiveDefinite`] carrying the index of the first
/// pivot that is not above `PIVOT_TOL * max(diag(A))`.
pub fn cholesky(a: &SpdMatrix) -> Result<LowerTriangular> {
    cholesky_raw(&a.0).map(LowerTriangular)
}

/// Cholesky of a plain symmetric matrix, used where definiteness is the question.
pub fn cholesky_of(a: &DMatrix<f64>) -> Result<LowerTriangular> {
    check_square(a)?;
    cholesky_raw(a).map(LowerTriangular)
}

/// Inverse of a lower-triangular matrix by forward substitution, column by column.
pub fn tri_inverse(l: &LowerTriangular) -> Result<LowerTriangular> {
    let n = l.dim();
    let m = &l.0;
    for i in 0..n {
        if m[(i, i)] == 0.0 || !m[(i, i)].is_finite() {
            return Err(Error::Singular { index: i });
        }
    }
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / m[(j, j)];
        for i in (j + 1)..n {
            let mut acc = 0.0;
            for k in j..i {
                acc += m[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -acc / m[(i, i)];
        }
    }
    Ok(LowerTriangular(inv))
}

/// Inverts an SPD matrix through its Cholesky factor.
///
/// Returns `(A^{-1}, L)` where `L = cholesky(A)` and `A^{-1} = L^{-T} L^{-1}`.
pub fn spd_inverse(a: &SpdMatrix) -> Result<(SpdMatrix, LowerTriangular)> {
    let l = cholesky(a)?;
    let l_inv = tri_inverse(&l)?;
    let inv = l_inv.0.transpose() * &l_inv.0;
    Ok((SpdMatrix(symmetrized(&inv)), l))
}

/// Symmetric eigendecomposition returning `(V, eigenvalues)`.
fn eigen(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvectors, eig.eigenvalues)
}

fn from_eigen(v: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * values[j]);
    scaled * v.transpose()
}

/// Square root of `B A` for SPD `B`, `A`.
///
/// Uses the similarity `(BA)^{1/2} = A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{1/2}` so that
/// only square roots of symmetric matrices are taken.
pub fn spd_sqrt_product(b: &SpdMatrix, a: &SpdMatrix) -> Result<DMatrix<f64>> {
    check_dim(a.dim(), b.dim())?;
    let (va, la) = eigen(&a.0);
    if let Some(&bad) = la.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::ComplexRoot { eigenvalue: bad });
    }
    let sqrt_a = from_eigen(&va, &la.map(f64::sqrt));
    let inv_sqrt_a = from_eigen(&va, &la.map(|v| 1.0 / v.sqrt()));
    let inner = symmetrized(&(&sqrt_a * &b.0 * &sqrt_a));
    let (vi, li) = eigen(&inner);
    if let Some(&bad) = li.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::ComplexRoot { eigenvalue: bad });
    }
    let sqrt_inner = from_eigen(&vi, &li.map(f64::sqrt));
    Ok(inv_sqrt_a * sqrt_inner * sqrt_a)
}

/// Maximum absolute entry of `a b - I`.
pub fn inverse_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (a * b - DMatrix::<f64>::identity(n, n)).amax()
}

/// Second-order SPD retraction `P + xi + 1/2 xi P^{-1} xi`, symmetrized.
///
/// `inverse` must be `P^{-1}`; it is only verified when `check` is set.
pub fn retract(
    point: &SpdMatrix,
    inverse: &SpdMatrix,
    xi: &TangentMatrix,
    check: bool,
) -> Result<SpdMatrix> {
    check_dim(point.dim(), inverse.dim())?;
    check_dim(point.dim(), xi.dim())?;
    if check {
        let residual = inverse_residual(&point.0, &inverse.0);
        if !(residual <= 1e-9) {
            return Err(Error::InconsistentInverse { residual });
        }
    }
    let x = &xi.0;
    let raw = &point.0 + x + (x * &inverse.0 * x) * 0.5;
    let out = symmetrized(&raw);
    match cholesky_raw(&out) {
        Ok(_) => Ok(SpdMatrix(out)),
        Err(Error::NotPositiveDefinite { pivot, .. }) => Err(Error::RetractionFailed { pivot }),
        Err(e) => Err(e),
    }
}

/// Vector transport of `xi` from `T_{P_old}` to `T_{P_new}`: `E xi E^T`, `E = (P_new P_old^{-1})^{1/2}`.
pub fn transport(
    old_point: &SpdMatrix,
    old_inverse: &SpdMatrix,
    new_point: &SpdMatrix,
    xi: &TangentMatrix,
) -> Result<TangentMatrix> {
    check_dim(old_point.dim(), new_point.dim())?;
    check_dim(old_point.dim(), xi.dim())?;
    let e = spd_sqrt_product(new_point, old_inverse)?;
    let moved = &e * &xi.0 * e.transpose();
    Ok(TangentMatrix(symmetrized(&moved)))
}

/// Draws `S` vectors `mu + L^{-T} eps` with `eps ~ N(0, I)` where `L` factors the precision.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    prec_factor: &LowerTriangular,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    check_dim(mu.len(), prec_factor.dim())?;
    let d = mu.len();
    Ok((0..count)
        .map(|_| {
            let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            mu + prec_factor.solve_transpose(&eps)
        })
        .collect())
}
