//! Gaussian measures under the 2-Wasserstein (Bures–Wasserstein) metric.
//!
//! A Gaussian `N(m, Σ)` is mapped into the linear space of pairs `(a, V)`
//! (vector plus symmetric matrix) by the log map at a nonsingular reference
//! measure `N(m*, Σ*)`:
//!
//! ```text
//! log(μ) = (m − S m*, S − I),        S = S(Σ*, Σ)
//! exp(a, V) = N(a + (V + I) m*, (V + I) Σ* (V + I))
//! ⟨(a,V), (b,U)⟩ = (a + V m*)ᵀ(b + U m*) + tr(V Σ* U)
//! ```
//!
//! where `S(Σ₁, Σ₂) = Σ₁^{-1/2} (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2} Σ₁^{-1/2}` is the
//! linear part of the optimal transport map from `N(·, Σ₁)` to `N(·, Σ₂)`.
//! The norm of `log(μ)` equals the Wasserstein distance from `μ` to the
//! reference, and `exp` is a left inverse of `log`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};
use crate::matrix::{min_eigenvalue, project_psd, psd_tolerance, sqrt_and_invsqrt_pd, sqrt_psd, SpdMatrix, SymMatrix};

/// A Gaussian measure `N(mean, cov)` with positive semidefinite covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: SymMatrix,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    mean: Vec<f64>,
    cov: SymMatrix,
}

impl TryFrom<RawMeasure> for GaussianMeasure {
    type Error = GwrError;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        if raw.mean.iter().any(|v| !v.is_finite()) {
            return Err(GwrError::InvalidConfig("mean entries must be finite".into()));
        }
        GaussianMeasure::new(DVector::from_vec(raw.mean), raw.cov)
    }
}

impl From<GaussianMeasure> for RawMeasure {
    fn from(g: GaussianMeasure) -> Self {
        RawMeasure { mean: g.mean.iter().copied().collect(), cov: g.cov }
    }
}

impl GaussianMeasure {
    /// Checks dimensions and positive semidefiniteness. Eigenvalues that are
    /// negative only within the PSD tolerance are clipped to zero.
    pub fn new(mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(GwrError::DimensionMismatch { expected: mean.len(), found: cov.dim() });
        }
        let (values, _) = cov.eigen();
        let cov = match values.iter().next() {
            Some(&min) if min < 0.0 => {
                let max_abs = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
                if min < -psd_tolerance(max_abs) {
                    return Err(GwrError::NotPositiveSemidefinite { min_eigenvalue: min });
                }
                project_psd(&cov)
            }
            _ => cov,
        };
        Ok(GaussianMeasure { mean, cov })
    }

    pub fn from_slices(mean: &[f64], cov_rows: &[f64]) -> Result<Self> {
        let d = mean.len();
        if cov_rows.len() != d * d {
            return Err(GwrError::DimensionMismatch { expected: d * d, found: cov_rows.len() });
        }
        GaussianMeasure::new(DVector::from_row_slice(mean), SymMatrix::from_row_slice(d, cov_rows))
    }

    /// `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        GaussianMeasure { mean: DVector::zeros(d), cov: SymMatrix::identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }
}

/// A nonsingular Gaussian anchoring the log/exp maps, with cached covariance
/// square root and inverse square root.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMeasure {
    measure: GaussianMeasure,
    cov_sqrt: SymMatrix,
    cov_invsqrt: SymMatrix,
}

impl ReferenceMeasure {
    pub fn new(measure: GaussianMeasure) -> Result<Self> {
        let spd = SpdMatrix::try_new(measure.cov.clone())?;
        let (cov_sqrt, cov_invsqrt) = sqrt_and_invsqrt_pd(&spd);
        Ok(ReferenceMeasure { measure, cov_sqrt, cov_invsqrt })
    }

    pub fn standard(d: usize) -> Self {
        ReferenceMeasure::new(GaussianMeasure::standard(d)).expect("identity covariance is SPD")
    }

    pub fn measure(&self) -> &GaussianMeasure {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    pub fn cov_sqrt(&self) -> &SymMatrix {
        &self.cov_sqrt
    }

    pub fn cov_invsqrt(&self) -> &SymMatrix {
        &self.cov_invsqrt
    }

    /// `S(Σ*, Σ)` using the cached roots.
    pub fn transport_to(&self, sigma: &SymMatrix) -> Result<SymMatrix> {
        if sigma.dim() != self.dim() {
            return Err(GwrError::DimensionMismatch { expected: self.dim(), found: sigma.dim() });
        }
        let inner = sqrt_psd(&sigma.congruence(&self.cov_sqrt))?;
        Ok(inner.congruence(&self.cov_invsqrt))
    }
}

impl Serialize for ReferenceMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.measure.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReferenceMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = GaussianMeasure::deserialize(d)?;
        ReferenceMeasure::new(m).map_err(serde::de::Error::custom)
    }
}

/// An element `(a, V)` of the linear space of vector/symmetric-matrix pairs.
/// Its matrix layout is the `d × (d+1)` block `[a | V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiElement {
    pub a: DVector<f64>,
    pub v: SymMatrix,
}

impl XiElement {
    pub fn new(a: DVector<f64>, v: SymMatrix) -> Result<Self> {
        if a.len() != v.dim() {
            return Err(GwrError::DimensionMismatch { expected: a.len(), found: v.dim() });
        }
        Ok(XiElement { a, v })
    }

    pub fn zeros(d: usize) -> Self {
        XiElement { a: DVector::zeros(d), v: SymMatrix::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `[a | V]` as a `d × (d+1)` matrix.
    pub fn to_layout(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d + 1);
        m.set_column(0, &self.a);
        m.view_mut((0, 1), (d, d)).copy_from(self.v.as_matrix());
        m
    }

    /// Reads `[a | V]`, symmetrizing the `V` block.
    pub fn from_layout(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d + 1 {
            return Err(GwrError::DimensionMismatch { expected: d + 1, found: m.ncols() });
        }
        Ok(XiElement { a: m.column(0).into_owned(), v: SymMatrix::new(m.view((0, 1), (d, d)).into_owned()) })
    }

    pub fn add(&self, other: &XiElement) -> XiElement {
        XiElement { a: &self.a + &other.a, v: self.v.add(&other.v) }
    }

    pub fn sub(&self, other: &XiElement) -> XiElement {
        XiElement { a: &self.a - &other.a, v: self.v.sub(&other.v) }
    }

    pub fn scale(&self, factor: f64) -> XiElement {
        XiElement { a: &self.a * factor, v: self.v.scale(factor) }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GwrError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `S(Σ₁, Σ₂)`, the symmetric PSD matrix of the optimal transport map.
pub fn transport_coefficient(sigma1: &SpdMatrix, sigma2: &SymMatrix) -> Result<SymMatrix> {
    check_dim(sigma1.dim(), sigma2.dim())?;
    let max_abs = sigma2.eigen().0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min2 = min_eigenvalue(sigma2);
    if min2 < -psd_tolerance(max_abs) {
        return Err(GwrError::NotPositiveSemidefinite { min_eigenvalue: min2 });
    }
    let (root, invroot) = sqrt_and_invsqrt_pd(sigma1);
    let inner = sqrt_psd(&sigma2.congruence(&root))?;
    Ok(inner.congruence(&invroot))
}

/// Evaluates the optimal transport map `x ↦ m₂ + S(Σ₁, Σ₂)(x − m₁)`.
pub fn optimal_transport_apply(from: &GaussianMeasure, to: &GaussianMeasure, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(from.dim(), to.dim())?;
    check_dim(from.dim(), x.len())?;
    let s = transport_coefficient(&SpdMatrix::try_new(from.cov.clone())?, &to.cov)?;
    Ok(&to.mean + s.as_matrix() * (x - &from.mean))
}

fn condition_key(cov: &SymMatrix) -> f64 {
    let (values, _) = cov.eigen();
    match (values.iter().next(), values.iter().last()) {
        (Some(&lo), Some(&hi)) if lo > crate::matrix::SPD_TOLERANCE => hi / lo,
        _ => f64::INFINITY,
    }
}

fn lexicographic(a: &GaussianMeasure, b: &GaussianMeasure) -> std::cmp::Ordering {
    a.mean
        .iter()
        .chain(a.cov.as_matrix().iter())
        .zip(b.mean.iter().chain(b.cov.as_matrix().iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Squared Bures distance between two covariance matrices.
fn bures_squared(c1: &SymMatrix, c2: &SymMatrix) -> Result<f64> {
    // With c1 nonsingular the transport route tr((S − I) Σ₁ (S − I)) sums
    // nonnegative terms and avoids cancellation for nearby covariances.
    if let Ok(spd) = SpdMatrix::try_new(c1.clone()) {
        let s = transport_coefficient(&spd, c2)?;
        let w = s.sub(&SymMatrix::identity(c1.dim()));
        let root = sqrt_and_invsqrt_pd(&spd).0;
        let wr = w.as_matrix() * root.as_matrix();
        return Ok(wr.norm_squared());
    }
    let root = sqrt_psd(c1)?;
    let (values, _) = c2.congruence(&root).eigen();
    let cross: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((c1.trace() + c2.trace() - 2.0 * cross).max(0.0))
}

/// Closed-form 2-Wasserstein distance between two Gaussians.
///
/// The computation is symmetric in its arguments bit for bit: the better
/// conditioned covariance is always used as the transport source.
pub fn wasserstein_distance(mu1: &GaussianMeasure, mu2: &GaussianMeasure) -> Result<f64> {
    check_dim(mu1.dim(), mu2.dim())?;
    let order = condition_key(&mu1.cov)
        .total_cmp(&condition_key(&mu2.cov))
        .then_with(|| lexicographic(mu1, mu2));
    let (first, second) = match order {
        std::cmp::Ordering::Equal => return Ok(0.0),
        std::cmp::Ordering::Less => (mu1, mu2),
        std::cmp::Ordering::Greater => (mu2, mu1),
    };
    let mean_part = (&first.mean - &second.mean).norm_squared();
    let cov_part = bures_squared(&first.cov, &second.cov)?;
    Ok((mean_part + cov_part).max(0.0).sqrt())
}

/// Inner product `(a + V m*)ᵀ(b + U m*) + tr(V Σ* U)`.
pub fn xi_inner_product(u: &XiElement, v: &XiElement, reference: &ReferenceMeasure) -> Result<f64> {
    let d = reference.dim();
    check_dim(d, u.dim())?;
    check_dim(d, v.dim())?;
    let m = reference.measure.mean();
    let left = &u.a + u.v.as_matrix() * m;
    let right = &v.a + v.v.as_matrix() * m;
    let cross = (u.v.as_matrix() * reference.measure.cov().as_matrix()).component_mul(v.v.as_matrix()).sum();
    Ok(left.dot(&right) + cross)
}

/// Norm induced by [`xi_inner_product`].
pub fn xi_norm(u: &XiElement, reference: &ReferenceMeasure) -> Result<f64> {
    check_dim(reference.dim(), u.dim())?;
    let m = reference.measure.mean();
    let shifted = &u.a + u.v.as_matrix() * m;
    let vr = u.v.as_matrix() * reference.cov_sqrt.as_matrix();
    Ok((shifted.norm_squared() + vr.norm_squared()).sqrt())
}

/// `(m − S m*, S − I)` with `S = S(Σ*, Σ)`.
pub fn log_map(mu: &GaussianMeasure, reference: &ReferenceMeasure) -> Result<XiElement> {
    check_dim(reference.dim(), mu.dim())?;
    let s = reference.transport_to(&mu.cov)?;
    let a = &mu.mean - s.as_matrix() * reference.measure.mean();
    let v = s.sub(&SymMatrix::identity(mu.dim()));
    Ok(XiElement { a, v })
}

/// True when `V + I` is positive semidefinite.
pub fn in_range(u: &XiElement) -> bool {
    range_margin(u) >= 0.0
}

/// Min eigenvalue of `V + I` plus the PSD tolerance; negative means out of range.
fn range_margin(u: &XiElement) -> f64 {
    let (values, _) = u.v.add_identity().eigen();
    match values.iter().next() {
        None => 0.0,
        Some(&min) => {
            let max_abs = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            min + psd_tolerance(max_abs)
        }
    }
}

/// `N(a + (V+I) m*, (V+I) Σ* (V+I))`; errors if `V + I` is not PSD.
pub fn exp_map(u: &XiElement, reference: &ReferenceMeasure) -> Result<GaussianMeasure> {
    check_dim(reference.dim(), u.dim())?;
    if !in_range(u) {
        return Err(GwrError::OutOfRange { min_eigenvalue: min_eigenvalue(&u.v.add_identity()) });
    }
    let w = u.v.add_identity();
    let mean = &u.a + w.as_matrix() * reference.measure.mean();
    let cov = reference.measure.cov().congruence(&w);
    GaussianMeasure::new(mean, cov)
}

/// Stopping rule and iteration cap for [`frechet_mean_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetOptions {
    /// Wasserstein change between successive covariance iterates.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Post-hoc bound on the norm of the weighted mean of log maps.
    pub first_order_tolerance: f64,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        FrechetOptions { tolerance: 1e-9, max_iterations: 500, first_order_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrechetMean {
    pub measure: GaussianMeasure,
    pub iterations: usize,
    /// Norm of the weighted average of log maps at `measure`.
    pub first_order_norm: f64,
}

/// Empirical Fréchet mean (Wasserstein barycenter) with default options.
pub fn frechet_mean(measures: &[GaussianMeasure], weights: Option<&[f64]>) -> Result<GaussianMeasure> {
    frechet_mean_with(measures, weights, &FrechetOptions::default()).map(|fm| fm.measure)
}

/// Empirical Fréchet mean of Gaussians.
///
/// The mean component is the weighted Euclidean average of the means, which
/// is exact because the squared distance separates over means and
/// covariances. The covariance solves the barycenter fixed point
/// `Σ ← Σ^{-1/2} (Σᵢ wᵢ (Σ^{1/2} Σᵢ Σ^{1/2})^{1/2})² Σ^{-1/2}`, started at the
/// weighted Euclidean average of the covariances.
pub fn frechet_mean_with(
    measures: &[GaussianMeasure],
    weights: Option<&[f64]>,
    options: &FrechetOptions,
) -> Result<FrechetMean> {
    let first = measures.first().ok_or(GwrError::EmptyInput)?;
    let d = first.dim();
    for m in measures {
        check_dim(d, m.dim())?;
    }
    let n = measures.len();
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(GwrError::LengthMismatch { expected: n, found: w.len() });
            }
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(GwrError::DegenerateInput("weights must be nonnegative and sum to 1".into()));
            }
            w.to_vec()
        }
        None => vec![1.0 / n as f64; n],
    };

    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for (m, &w) in measures.iter().zip(&weights) {
        mean += &m.mean * w;
        cov += m.cov.as_matrix() * w;
    }
    let mut sigma = SpdMatrix::try_new(SymMatrix::new(cov))
        .map_err(|_| GwrError::DegenerateInput("all covariances are singular".into()))?;

    let mut iterations = 0;
    let mut converged = measures.iter().all(|m| m.cov == measures[0].cov);
    if converged {
        sigma = SpdMatrix::try_new(measures[0].cov.clone())
            .map_err(|_| GwrError::DegenerateInput("all covariances are singular".into()))?;
    }
    while !converged {
        if iterations >= options.max_iterations {
            return Err(GwrError::NoConvergence { iterations });
        }
        iterations += 1;
        let (root, invroot) = sqrt_and_invsqrt_pd(&sigma);
        let roots: Vec<Result<DMatrix<f64>>> = measures
            .par_iter()
            .zip(weights.par_iter())
            .map(|(m, &w)| sqrt_psd(&m.cov.congruence(&root)).map(|r| r.into_inner() * w))
            .collect();
        let mut avg = DMatrix::zeros(d, d);
        for r in roots {
            avg += r?;
        }
        let avg = SymMatrix::new(avg);
        let next = SymMatrix::new(&avg.as_matrix().clone() * avg.as_matrix()).congruence(&invroot);
        let next = SpdMatrix::try_new(next).map_err(|_| GwrError::DegenerateInput("barycenter iterate became singular".into()))?;
        let change = bures_squared(sigma.as_sym(), next.as_sym())?.sqrt();
        sigma = next;
        converged = change <= options.tolerance;
    }

    let measure = GaussianMeasure::new(mean, sigma.into_sym())?;
    let first_order_norm = first_order_residual(measures, &weights, &measure)?;
    if first_order_norm > options.first_order_tolerance {
        log::warn!(
            "Fréchet mean first-order residual {first_order_norm:e} exceeds {:e}",
            options.first_order_tolerance
        );
    }
    Ok(FrechetMean { measure, iterations, first_order_norm })
}

fn first_order_residual(measures: &[GaussianMeasure], weights: &[f64], at: &GaussianMeasure) -> Result<f64> {
    let reference = ReferenceMeasure::new(at.clone())?;
    let mut acc = XiElement::zeros(at.dim());
    for (m, &w) in measures.iter().zip(weights) {
        acc = acc.add(&log_map(m, &reference)?.scale(w));
    }
    xi_norm(&acc, &reference)
}
