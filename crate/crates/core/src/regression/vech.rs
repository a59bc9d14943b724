//! Half-vectorizations of `(a, V)` layouts and of identified tensors.
//!
//! `vech*` of a `d × (d+1)` matrix lists column 0 in full, then the lower
//! triangle (diagonal included) of the square block column by column:
//!
//! ```text
//! A[0..d, 0], A[0..d, 1], A[1..d, 2], A[2..d, 3], …, A[d-1, d]
//! ```
//!
//! giving `d(d+3)/2` coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{GwrError, Result};
use crate::geometry::{xi_inner_product, ReferenceMeasure, XiElement};
use crate::matrix::SymMatrix;

use super::tensor::{CoefficientTensor, IdentifiedTensor};

/// Number of `vech*` coordinates, `d(d+3)/2`.
pub fn vech_len(d: usize) -> usize {
    d * (d + 3) / 2
}

/// `(row, column)` positions in the `d × (d+1)` layout, in `vech*` order.
pub fn vech_positions(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(vech_len(d));
    out.extend((0..d).map(|r| (r, 0)));
    for j in 0..d {
        out.extend((j..d).map(|i| (i, j + 1)));
    }
    out
}

pub fn vech_star(a: &DMatrix<f64>) -> DVector<f64> {
    let d = a.nrows();
    assert_eq!(a.ncols(), d + 1, "vech_star expects a d x (d+1) matrix");
    DVector::from_iterator(vech_len(d), vech_positions(d).into_iter().map(|(r, c)| a[(r, c)]))
}

/// Inverse of [`vech_star`] onto the lower-triangular pattern; entries above
/// the diagonal of the square block are zero.
pub fn unvech_star(z: &DVector<f64>, d: usize) -> Result<DMatrix<f64>> {
    if z.len() != vech_len(d) {
        return Err(GwrError::LengthMismatch { expected: vech_len(d), found: z.len() });
    }
    let mut m = DMatrix::zeros(d, d + 1);
    for (k, (r, c)) in vech_positions(d).into_iter().enumerate() {
        m[(r, c)] = z[k];
    }
    Ok(m)
}

/// `vech*` of the layout `[a | V]`.
pub fn xi_to_vech(x: &XiElement) -> DVector<f64> {
    vech_star(&x.to_layout())
}

/// Rebuilds `(a, V)` from its `vech*` coordinates, mirroring the lower triangle.
pub fn xi_from_vech(z: &DVector<f64>, d: usize) -> Result<XiElement> {
    let m = unvech_star(z, d)?;
    let a = m.column(0).into_owned();
    let mut v = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            v[(i, j)] = m[(i, j + 1)];
            v[(j, i)] = m[(i, j + 1)];
        }
    }
    XiElement::new(a, SymMatrix::new(v))
}

/// Gram matrix of the inner product in `vech*` coordinates, so that
/// `‖(a, V)‖² = zᵀ G z` with `z = vech*([a | V])`. An off-diagonal coordinate
/// stands for both mirrored entries of `V`.
pub fn gram_matrix(reference: &ReferenceMeasure) -> DMatrix<f64> {
    let d = reference.dim();
    let q = vech_len(d);
    let basis: Vec<XiElement> = (0..q)
        .map(|k| {
            let mut e = DVector::zeros(q);
            e[k] = 1.0;
            xi_from_vech(&e, d).expect("basis length matches")
        })
        .collect();
    DMatrix::from_fn(q, q, |i, j| xi_inner_product(&basis[i], &basis[j], reference).expect("dimensions match"))
}

/// Length of `vec*` for an identified `d₁ → d₂` tensor:
/// `vech_len(d₁) · vech_len(d₂)`.
pub fn vec_star_len(d1: usize, d2: usize) -> usize {
    vech_len(d1) * vech_len(d2)
}

/// Concatenates `vech*(𝔹[·, ·, r, s])` over the output positions `(r, s)` in
/// `vech*` order. Slices at the mirrored positions are implied by symmetry.
pub fn vec_star(b: &IdentifiedTensor) -> DVector<f64> {
    let t = b.tensor();
    let mut out = Vec::with_capacity(vec_star_len(t.d1(), t.d2()));
    for (r, s) in vech_positions(t.d2()) {
        out.extend(vech_star(&t.input_slice(r, s)).iter());
    }
    DVector::from_vec(out)
}

/// Inverse of [`vec_star`].
pub fn tensor_of_theta(theta: &DVector<f64>, d1: usize, d2: usize) -> Result<IdentifiedTensor> {
    let p = vech_len(d1);
    if theta.len() != vec_star_len(d1, d2) {
        return Err(GwrError::LengthMismatch { expected: vec_star_len(d1, d2), found: theta.len() });
    }
    let mut t = CoefficientTensor::zeros(d1, d2);
    for (k, (r, s)) in vech_positions(d2).into_iter().enumerate() {
        let block = DVector::from_iterator(p, theta.rows(k * p, p).iter().copied());
        let slice = unvech_star(&block, d1)?;
        t.set_input_slice(r, s, &slice);
        if s > 0 {
            t.set_input_slice(s - 1, r + 1, &slice);
        }
    }
    Ok(IdentifiedTensor::new_unchecked(t))
}

/// Coefficient matrix (features × outputs) of an identified tensor:
/// column `k` is `vech*` of the input slice at the `k`-th output position.
pub fn theta_matrix(b: &IdentifiedTensor) -> DMatrix<f64> {
    let t = b.tensor();
    let p = vech_len(t.d1());
    let theta = vec_star(b);
    DMatrix::from_column_slice(p, vech_len(t.d2()), theta.as_slice())
}
