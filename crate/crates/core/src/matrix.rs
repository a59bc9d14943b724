//! Symmetric-matrix primitives: square roots, eigenvalue queries and the
//! Frobenius projection onto the positive semidefinite cone.
//!
//! Every recomposition from an eigendecomposition is re-symmetrized, so the
//! downstream maps can rely on exact symmetry of their inputs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};

/// Relative tolerance factor for PSD checks: eigenvalues down to
/// `-PSD_RELATIVE_TOLERANCE * (1 + max|eigenvalue|)` count as zero.
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Absolute floor on the smallest eigenvalue of a positive definite matrix.
pub const SPD_TOLERANCE: f64 = 1e-10;

/// Scale-aware PSD tolerance for a spectrum whose largest magnitude is `max_abs`.
pub fn psd_tolerance(max_abs: f64) -> f64 {
    PSD_RELATIVE_TOLERANCE * (1.0 + max_abs)
}

/// A real symmetric matrix. Construction symmetrizes its input as `(M + Mᵀ)/2`,
/// so `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m`. Panics if `m` is not square.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Self {
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    pub fn add_identity(&self) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        SymMatrix(m)
    }

    /// `A · self · A` for symmetric `A`, re-symmetrized.
    pub fn congruence(&self, a: &SymMatrix) -> SymMatrix {
        SymMatrix::new(&a.0 * &self.0 * &a.0)
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        if n == 0 {
            return (DVector::zeros(0), DMatrix::zeros(0, 0));
        }
        if n == 1 {
            return (DVector::from_element(1, self.0[(0, 0)]), DMatrix::identity(1, 1));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        (values, vectors)
    }

    /// `Q · diag(f(λ)) · Qᵀ`, re-symmetrized.
    fn spectral_map(values: &DVector<f64>, vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = values.len();
        let mut scaled = vectors.clone();
        for j in 0..n {
            let fj = f(values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        SymMatrix::new(&scaled * vectors.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Self::Error> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(format!("symmetric matrix must be square ({n} rows)"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err("symmetric matrix entries must be finite".into());
        }
        Ok(SymMatrix::from_row_slice(n, &flat))
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// A symmetric matrix whose smallest eigenvalue exceeds [`SPD_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(SymMatrix);

impl SpdMatrix {
    pub fn try_new(m: SymMatrix) -> Result<Self> {
        let min = min_eigenvalue(&m);
        if m.dim() == 0 || min <= SPD_TOLERANCE {
            return Err(GwrError::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(SpdMatrix(m))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    match m.dim() {
        0 => f64::INFINITY,
        1 => m.get(0, 0),
        _ => m.eigen().0[0],
    }
}

/// Positive square root of a PSD matrix. Eigenvalues within the relative
/// PSD tolerance below zero are clipped to zero.
pub fn sqrt_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let (values, vectors) = m.eigen();
    if values.is_empty() {
        return Ok(m.clone());
    }
    let max_abs = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = values[0];
    if min < -psd_tolerance(max_abs) {
        return Err(GwrError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    if m.is_diagonal() {
        let diag: Vec<f64> = (0..m.dim()).map(|i| m.get(i, i).max(0.0).sqrt()).collect();
        return Ok(SymMatrix::from_diagonal(&diag));
    }
    Ok(SymMatrix::spectral_map(&values, &vectors, |l| l.max(0.0).sqrt()))
}

/// Square root and inverse square root of an SPD matrix from one eigendecomposition.
pub fn sqrt_and_invsqrt_pd(m: &SpdMatrix) -> (SymMatrix, SymMatrix) {
    let s = m.as_sym();
    if s.is_diagonal() {
        let d = s.dim();
        let root: Vec<f64> = (0..d).map(|i| s.get(i, i).sqrt()).collect();
        let inv: Vec<f64> = root.iter().map(|r| 1.0 / r).collect();
        return (SymMatrix::from_diagonal(&root), SymMatrix::from_diagonal(&inv));
    }
    let (values, vectors) = s.eigen();
    (
        SymMatrix::spectral_map(&values, &vectors, f64::sqrt),
        SymMatrix::spectral_map(&values, &vectors, |l| 1.0 / l.sqrt()),
    )
}

/// Inverse positive square root of an SPD matrix.
pub fn invsqrt_pd(m: &SpdMatrix) -> SymMatrix {
    sqrt_and_invsqrt_pd(m).1
}

/// Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped to zero).
pub fn project_psd(m: &SymMatrix) -> SymMatrix {
    let (values, vectors) = m.eigen();
    if values.is_empty() || values[0] >= 0.0 {
        return m.clone();
    }
    SymMatrix::spectral_map(&values, &vectors, |l| l.max(0.0))
}
