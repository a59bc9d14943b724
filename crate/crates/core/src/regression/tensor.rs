//! Coefficient tensors of shape `d₁ × (d₁+1) × d₂ × (d₂+1)` and the
//! contraction `⟨X, 𝔹⟩₂[r, s] = Σ_{p,q} X[p, q] 𝔹[p, q, r, s]`.
//!
//! All indices here are 0-based. Column 0 of a `d × (d+1)` layout holds the
//! vector part; columns `1..=d` hold the symmetric matrix part.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};
use crate::geometry::XiElement;

/// Largest asymmetry tolerated when validating a tensor read from outside.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `C*[r, 0] = C[r, 0]`, `C*[r, s] = C[s−1, r+1]` for `s ≥ 1`: transposes the
/// square block and leaves the first column alone. An involution.
pub fn star_matrix(c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = c.nrows();
    assert_eq!(c.ncols(), d + 1, "star_matrix expects a d x (d+1) matrix");
    let mut out = c.clone();
    for r in 0..d {
        for s in 1..=d {
            out[(r, s)] = c[(s - 1, r + 1)];
        }
    }
    out
}

/// A 4-way coefficient array stored row-major over `[p][q][r][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    d1: usize,
    d2: usize,
    entries: Vec<f64>,
}

impl CoefficientTensor {
    pub fn zeros(d1: usize, d2: usize) -> Self {
        CoefficientTensor { d1, d2, entries: vec![0.0; d1 * (d1 + 1) * d2 * (d2 + 1)] }
    }

    /// Wraps raw entries without checking the output symmetry.
    pub fn from_entries_unchecked(d1: usize, d2: usize, entries: Vec<f64>) -> Result<Self> {
        let len = d1 * (d1 + 1) * d2 * (d2 + 1);
        if entries.len() != len {
            return Err(GwrError::LengthMismatch { expected: len, found: entries.len() });
        }
        Ok(CoefficientTensor { d1, d2, entries })
    }

    /// Wraps raw entries and rejects them unless every output slice pair
    /// `(r, s)`, `(s−1, r+1)` agrees within [`SYMMETRY_TOLERANCE`].
    pub fn from_entries(d1: usize, d2: usize, entries: Vec<f64>) -> Result<Self> {
        let t = Self::from_entries_unchecked(d1, d2, entries)?;
        let asym = t.output_asymmetry();
        if asym > SYMMETRY_TOLERANCE {
            return Err(GwrError::DegenerateInput(format!("coefficient tensor violates output symmetry by {asym:e}")));
        }
        Ok(t)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.d1, self.d1 + 1, self.d2, self.d2 + 1]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn offset(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * (self.d1 + 1) + q) * self.d2 + r) * (self.d2 + 1) + s
    }

    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.entries[self.offset(p, q, r, s)]
    }

    pub fn set(&mut self, p: usize, q: usize, r: usize, s: usize, value: f64) {
        let o = self.offset(p, q, r, s);
        self.entries[o] = value;
    }

    /// The `d₁ × (d₁+1)` slice `𝔹[·, ·, r, s]`.
    pub fn input_slice(&self, r: usize, s: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.d1, self.d1 + 1, |p, q| self.get(p, q, r, s))
    }

    pub fn set_input_slice(&mut self, r: usize, s: usize, slice: &DMatrix<f64>) {
        for p in 0..self.d1 {
            for q in 0..=self.d1 {
                self.set(p, q, r, s, slice[(p, q)]);
            }
        }
    }

    /// The `d₂ × (d₂+1)` slice `𝔹[p, q, ·, ·]`.
    pub fn output_slice(&self, p: usize, q: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.d2, self.d2 + 1, |r, s| self.get(p, q, r, s))
    }

    /// Slice-wise [`star_matrix`] over the output indices.
    pub fn star(&self) -> CoefficientTensor {
        let mut out = self.clone();
        for p in 0..self.d1 {
            for q in 0..=self.d1 {
                let starred = star_matrix(&self.output_slice(p, q));
                for r in 0..self.d2 {
                    for s in 0..=self.d2 {
                        out.set(p, q, r, s, starred[(r, s)]);
                    }
                }
            }
        }
        out
    }

    /// `(𝔸 + 𝔸*)/2`, which always satisfies the output symmetry.
    pub fn symmetrized(&self) -> CoefficientTensor {
        let star = self.star();
        let entries = self.entries.iter().zip(&star.entries).map(|(a, b)| 0.5 * (a + b)).collect();
        CoefficientTensor { d1: self.d1, d2: self.d2, entries }
    }

    /// Largest `|𝔹[p,q,r,s] − 𝔹[p,q,s−1,r+1]|`.
    pub fn output_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for p in 0..self.d1 {
            for q in 0..=self.d1 {
                for r in 0..self.d2 {
                    for s in 1..=self.d2 {
                        worst = worst.max((self.get(p, q, r, s) - self.get(p, q, s - 1, r + 1)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `⟨X, 𝔹⟩₂` for a raw `d₁ × (d₁+1)` matrix.
    pub fn contract_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.d1 || x.ncols() != self.d1 + 1 {
            return Err(GwrError::DimensionMismatch { expected: self.d1, found: x.nrows() });
        }
        let block = self.d2 * (self.d2 + 1);
        let mut out = vec![0.0; block];
        for p in 0..self.d1 {
            for q in 0..=self.d1 {
                let xv = x[(p, q)];
                if xv == 0.0 {
                    continue;
                }
                let base = self.offset(p, q, 0, 0);
                for (o, b) in out.iter_mut().zip(&self.entries[base..base + block]) {
                    *o += xv * b;
                }
            }
        }
        Ok(DMatrix::from_row_slice(self.d2, self.d2 + 1, &out))
    }

    /// `⟨X, 𝔹⟩₂` read back as an element `(a, V)`.
    pub fn contract(&self, x: &XiElement) -> Result<XiElement> {
        if x.dim() != self.d1 {
            return Err(GwrError::DimensionMismatch { expected: self.d1, found: x.dim() });
        }
        XiElement::from_layout(&self.contract_matrix(&x.to_layout())?)
    }
}

/// Free function form of [`CoefficientTensor::contract`].
pub fn contract(x: &XiElement, b: &CoefficientTensor) -> Result<XiElement> {
    b.contract(x)
}

/// A coefficient tensor whose input slices are additionally lower triangular
/// in their matrix block: `𝔹[p, q, r, s] = 0` whenever `q ≥ p + 2`.
/// Tensors in this class are determined by the map `X ↦ ⟨X, 𝔹⟩₂` they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedTensor(CoefficientTensor);

impl IdentifiedTensor {
    pub fn try_new(t: CoefficientTensor) -> Result<Self> {
        for p in 0..t.d1 {
            for q in (p + 2)..=t.d1 {
                for r in 0..t.d2 {
                    for s in 0..=t.d2 {
                        if t.get(p, q, r, s) != 0.0 {
                            return Err(GwrError::DegenerateInput(format!(
                                "entry [{p},{q},{r},{s}] must be zero in the identified space"
                            )));
                        }
                    }
                }
            }
        }
        if t.output_asymmetry() > SYMMETRY_TOLERANCE {
            return Err(GwrError::DegenerateInput("identified tensor violates output symmetry".into()));
        }
        Ok(IdentifiedTensor(t))
    }

    pub(crate) fn new_unchecked(t: CoefficientTensor) -> Self {
        IdentifiedTensor(t)
    }

    pub fn tensor(&self) -> &CoefficientTensor {
        &self.0
    }

    pub fn into_tensor(self) -> CoefficientTensor {
        self.0
    }
}
