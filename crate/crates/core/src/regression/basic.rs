//! Least squares for the basic (full tensor) model and the scalar-response
//! variant.
//!
//! Every output coordinate of `vech*(Y)` is regressed on the same feature
//! vector `vech*(X)` with its own unconstrained coefficients. Under a shared
//! design the norm-weighted (seemingly unrelated) least squares solution
//! coincides with coordinate-wise ordinary least squares, so the weighting
//! only enters through the objective value.

use nalgebra::{DMatrix, DVector};

use crate::error::{GwrError, Result};
use crate::geometry::{xi_norm, ReferenceMeasure, XiElement};

use super::tensor::{CoefficientTensor, IdentifiedTensor};
use super::vech::{tensor_of_theta, unvech_star, vech_len, xi_to_vech};

/// Rows `vech*(Xᵢ)`.
pub fn design_matrix(x: &[XiElement]) -> Result<DMatrix<f64>> {
    let d = x.first().ok_or(GwrError::EmptyInput)?.dim();
    let p = vech_len(d);
    let mut f = DMatrix::zeros(x.len(), p);
    for (i, xi) in x.iter().enumerate() {
        if xi.dim() != d {
            return Err(GwrError::DimensionMismatch { expected: d, found: xi.dim() });
        }
        f.set_row(i, &xi_to_vech(xi).transpose());
    }
    Ok(f)
}

/// Minimum-norm least squares solution of `F Θ ≈ Z` via the SVD.
pub fn min_norm_solve(f: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = f.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let eps = max_sv * (f.nrows().max(f.ncols()) as f64) * f64::EPSILON;
    svd.solve(z, eps).expect("SVD computed with both factors")
}

/// Fits the basic model `Y ≈ ⟨X, 𝔹⟩₂` over the identified tensor space.
///
/// Rank-deficient designs get the minimum-norm coefficients. `ref_out`
/// defines the norm of the objective; see the module docs for why the
/// solution itself does not depend on it.
pub fn fit_basic(x: &[XiElement], y: &[XiElement], ref_out: &ReferenceMeasure) -> Result<IdentifiedTensor> {
    if x.is_empty() || y.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(GwrError::LengthMismatch { expected: x.len(), found: y.len() });
    }
    let d1 = x[0].dim();
    let d2 = ref_out.dim();
    let f = design_matrix(x)?;
    let targets = design_matrix(y)?;
    if y[0].dim() != d2 {
        return Err(GwrError::DimensionMismatch { expected: d2, found: y[0].dim() });
    }
    let theta = min_norm_solve(&f, &targets);
    tensor_of_theta(&DVector::from_column_slice(theta.as_slice()), d1, d2)
}

/// `Σᵢ ‖Yᵢ − ⟨Xᵢ, 𝔹⟩₂‖²` in the norm of `ref_out`.
pub fn objective(x: &[XiElement], y: &[XiElement], tensor: &CoefficientTensor, ref_out: &ReferenceMeasure) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GwrError::LengthMismatch { expected: x.len(), found: y.len() });
    }
    let mut total = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let r = yi.sub(&tensor.contract(xi)?);
        total += xi_norm(&r, ref_out)?.powi(2);
    }
    Ok(total)
}

/// Least squares for the scalar response model `Z = ⟨X, M⟩ + ε`, returning
/// the identified `d₁ × (d₁+1)` coefficient matrix (zero above the diagonal
/// of the square block).
pub fn fit_scalar(x: &[XiElement], z: &[f64]) -> Result<DMatrix<f64>> {
    if x.is_empty() || z.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    if x.len() != z.len() {
        return Err(GwrError::LengthMismatch { expected: x.len(), found: z.len() });
    }
    let f = design_matrix(x)?;
    let targets = DMatrix::from_column_slice(z.len(), 1, z);
    let theta = min_norm_solve(&f, &targets);
    unvech_star(&theta.column(0).into_owned(), x[0].dim())
}

/// `⟨X, M⟩`, the Frobenius pairing of the layout `[a | V]` with `M`.
pub fn predict_scalar(x: &XiElement, coef: &DMatrix<f64>) -> Result<f64> {
    if coef.nrows() != x.dim() || coef.ncols() != x.dim() + 1 {
        return Err(GwrError::DimensionMismatch { expected: x.dim(), found: coef.nrows() });
    }
    Ok(x.to_layout().component_mul(coef).sum())
}
