//! Data generators for the mixture experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

use crate::error::Result;
use crate::geometry::{exp_map, GaussianMeasure, ReferenceMeasure, XiElement};
use crate::matrix::{min_eigenvalue, project_psd, sqrt_psd, SymMatrix};
use crate::regression::tensor::{CoefficientTensor, IdentifiedTensor};

/// Noise redraws allowed before an invalid alternative-model covariance is
/// projected onto the PSD cone.
pub const MAX_NOISE_RETRIES: usize = 100;

/// The generating tensor shared by both models: every `[·, ·, r, 0]` slice
/// has a column of ones in position 0, every `[·, ·, r, r+1]` slice carries
/// `1/(2d)` on the diagonal of its matrix block, all else zero.
pub fn generating_tensor(d: usize) -> IdentifiedTensor {
    let mut t = CoefficientTensor::zeros(d, d);
    let w = 1.0 / (2.0 * d as f64);
    for r in 0..d {
        for p in 0..d {
            t.set(p, 0, r, 0, 1.0);
            t.set(p, p + 1, r, r + 1, w);
        }
    }
    IdentifiedTensor::try_new(t).expect("generating tensor is identified")
}

/// Which generator produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Proposed,
    Alternative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPair {
    pub label: Label,
    pub predictor: GaussianMeasure,
    pub response: GaussianMeasure,
    /// Noiseless response, the ground truth for prediction error.
    pub truth: GaussianMeasure,
    /// Whether the response covariance had to be projected onto the PSD cone.
    pub response_projected: bool,
}

/// `(g, diag(h + shift))` with `g ~ N(0, 1)` and `h ~ Exp(1)`.
fn draw_input<R: Rng + ?Sized>(rng: &mut R, d: usize, shift: f64) -> XiElement {
    let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let h: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1) + shift).collect();
    XiElement { a: g, v: SymMatrix::from_diagonal(&h) }
}

/// `(u, diag(v))` with `u ~ N(0, 1)` and `v ~ U(−1/2, 1/2)`.
fn draw_noise<R: Rng + ?Sized>(rng: &mut R, d: usize) -> XiElement {
    let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    XiElement { a: u, v: SymMatrix::from_diagonal(&v) }
}

/// `(a, V)` read directly as mean and covariance.
fn moments(u: &XiElement) -> Result<GaussianMeasure> {
    GaussianMeasure::new(u.a.clone(), u.v.clone())
}

/// Pair from the Wasserstein model: `X = (G, diag H)`, `Y = ⟨X, 𝔹₀⟩₂ + E`,
/// both mapped back through the standard Gaussian.
pub fn generate_proposed_pair<R: Rng + ?Sized>(rng: &mut R, d: usize, b0: &CoefficientTensor) -> Result<GeneratedPair> {
    let reference = ReferenceMeasure::standard(d);
    let x = draw_input(rng, d, 0.0);
    let clean = b0.contract(&x)?;
    let y = clean.add(&draw_noise(rng, d));
    let margin = min_eigenvalue(&y.v.add_identity());
    if margin < 0.0 {
        log::warn!("proposed-model response outside the range (min eigenvalue of V + I = {margin:e})");
    }
    Ok(GeneratedPair {
        label: Label::Proposed,
        predictor: exp_map(&x, &reference)?,
        response: exp_map(&y, &reference)?,
        truth: exp_map(&clean, &reference)?,
        response_projected: false,
    })
}

/// Pair from the moment model: `Z = (G, diag(H + 1))`, `W = ⟨Z, 𝔻₀⟩₂ + E`,
/// both read as (mean, covariance). The noise is redrawn while the response
/// covariance is not PSD, and projected after [`MAX_NOISE_RETRIES`] attempts.
pub fn generate_alternative_pair<R: Rng + ?Sized>(rng: &mut R, d: usize, d0: &CoefficientTensor) -> Result<GeneratedPair> {
    let z = draw_input(rng, d, 1.0);
    let clean = d0.contract(&z)?;
    let mut projected = false;
    let mut w = clean.add(&draw_noise(rng, d));
    let mut attempts = 1;
    while min_eigenvalue(&w.v) < 0.0 {
        if attempts >= MAX_NOISE_RETRIES {
            log::warn!("alternative-model response covariance projected after {attempts} noise draws");
            w.v = project_psd(&w.v);
            projected = true;
            break;
        }
        w = clean.add(&draw_noise(rng, d));
        attempts += 1;
    }
    let truth_cov = if min_eigenvalue(&clean.v) < 0.0 { project_psd(&clean.v) } else { clean.v.clone() };
    Ok(GeneratedPair {
        label: Label::Alternative,
        predictor: moments(&z)?,
        response: moments(&w)?,
        truth: GaussianMeasure::new(clean.a.clone(), truth_cov)?,
        response_projected: projected,
    })
}

/// Draws the label `C ~ Bernoulli(1/2)` and the pair from the chosen model.
pub fn generate_mixture_pair<R: Rng + ?Sized>(rng: &mut R, d: usize, b0: &CoefficientTensor) -> Result<GeneratedPair> {
    if rng.random_bool(0.5) {
        generate_alternative_pair(rng, d, b0)
    } else {
        generate_proposed_pair(rng, d, b0)
    }
}

/// `N` draws (rows) from `N(m, Σ)`, or from the multivariate t with location
/// `m`, scale `Σ` and `t_dof` degrees of freedom. The χ² mixing variables
/// come from `mixing_rng`, so `rng` yields the same Gaussian parts whatever
/// the degrees of freedom; an infinite `t_dof` draws nothing from `mixing_rng`.
pub fn draw_samples<R: Rng + ?Sized, M: Rng + ?Sized>(
    rng: &mut R,
    mixing_rng: &mut M,
    measure: &GaussianMeasure,
    n: usize,
    t_dof: Option<f64>,
) -> Result<DMatrix<f64>> {
    let d = measure.dim();
    let root = sqrt_psd(measure.cov())?;
    let chi = match t_dof {
        Some(l) if l.is_finite() => Some(ChiSquared::new(l).map_err(|e| crate::GwrError::InvalidConfig(format!("t degrees of freedom: {e}")))?),
        _ => None,
    };
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = root.as_matrix() * z;
        if let (Some(chi), Some(l)) = (&chi, t_dof) {
            let w: f64 = chi.sample(mixing_rng);
            x /= (w / l).sqrt();
        }
        x += measure.mean();
        out.set_row(i, &x.transpose());
    }
    Ok(out)
}
