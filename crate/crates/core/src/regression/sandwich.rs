//! Sandwich covariance of the vectorized least squares estimator.
//!
//! With features `fᵢ = vech*(Xᵢ)`, targets `zᵢ = vech*(Yᵢ)` and Gram matrix
//! `G` of the output norm, the per-unit loss is
//! `m_θ = (zᵢ − Θᵀfᵢ)ᵀ G (zᵢ − Θᵀfᵢ)` where `θ = vec*(𝔹)` stacks the columns
//! of `Θ` (output-major: `θ[j·p + f]`). Its Hessian `2 G ⊗ fᵢfᵢᵀ` does not
//! depend on `θ`, and the gradient is `−2 (G rᵢ) ⊗ fᵢ` with residual
//! `rᵢ = zᵢ − Θᵀfᵢ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GwrError, Result};
use crate::geometry::{ReferenceMeasure, XiElement};

use super::basic::design_matrix;
use super::vech::{gram_matrix, vec_star_len};

/// Largest accepted condition number of the averaged Hessian.
pub const MAX_HESSIAN_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    /// `V̂⁻¹ M̂ V̂⁻¹ / n`, an estimate of the covariance of `θ̂` itself.
    pub matrix: DMatrix<f64>,
    pub n: usize,
    pub hessian_condition: f64,
}

/// Plug-in sandwich estimate `V̂⁻¹ M̂ V̂⁻¹ / n` with `V̂` the mean Hessian and
/// `M̂` the mean outer product of per-unit gradients at `theta_hat`.
pub fn sandwich_covariance(
    x: &[XiElement],
    y: &[XiElement],
    theta_hat: &DVector<f64>,
    ref_out: &ReferenceMeasure,
) -> Result<SandwichCovariance> {
    if x.is_empty() || y.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(GwrError::LengthMismatch { expected: x.len(), found: y.len() });
    }
    let n = x.len();
    let f = design_matrix(x)?;
    let z = design_matrix(y)?;
    let (p, q) = (f.ncols(), z.ncols());
    if z.ncols() != super::vech::vech_len(ref_out.dim()) {
        return Err(GwrError::DimensionMismatch { expected: ref_out.dim(), found: y[0].dim() });
    }
    let dim = vec_star_len(x[0].dim(), ref_out.dim());
    if theta_hat.len() != dim {
        return Err(GwrError::LengthMismatch { expected: dim, found: theta_hat.len() });
    }
    if n <= dim {
        return Err(GwrError::DegenerateInput(format!("need more than {dim} units, got {n}")));
    }
    let g = gram_matrix(ref_out);
    let theta = DMatrix::from_column_slice(p, q, theta_hat.as_slice());

    let ftf = f.transpose() * &f / n as f64;
    let hessian = g.kronecker(&ftf) * 2.0;
    let eig = hessian.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if condition > MAX_HESSIAN_CONDITION {
        return Err(GwrError::SingularHessian { condition });
    }
    let hinv = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * eig.eigenvectors.transpose();

    let resid = &z - &f * &theta;
    let mut meat = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let gr = &g * resid.row(i).transpose();
        let grad = gr.kronecker(&f.row(i).transpose()) * -2.0;
        meat += &grad * grad.transpose();
    }
    meat /= n as f64;
    let mut matrix = &hinv * meat * &hinv / n as f64;
    matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(SandwichCovariance { matrix, n, hessian_condition: condition })
}
