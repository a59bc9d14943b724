//! Fitting when each unit's Gaussians are only observed through draws.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GwrError, Result};
use crate::geometry::GaussianMeasure;
use crate::matrix::SymMatrix;
use crate::regression::low_rank::LowRankOptions;
use crate::regression::model::{fit_from_measures, FittedModel, ModelKind};

/// Per-unit observations, one `N × d` matrix per unit (rows are draws).
///
/// `Exact` carries known moments and skips estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleBlock {
    Observations(Vec<DMatrix<f64>>),
    Exact(Vec<GaussianMeasure>),
}

impl SampleBlock {
    /// Checks for empty units and a common dimension. Units may have
    /// different row counts.
    pub fn from_observations(units: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = units.first().ok_or(GwrError::EmptyInput)?.ncols();
        for u in &units {
            if u.nrows() == 0 {
                return Err(GwrError::EmptyBlock);
            }
            if u.ncols() != d {
                return Err(GwrError::DimensionMismatch { expected: d, found: u.ncols() });
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(GwrError::DegenerateInput("non-finite observation".into()));
            }
        }
        if units.iter().any(|u| u.nrows() == 1) {
            log::warn!("a unit has a single observation; its covariance estimate is zero");
        }
        Ok(SampleBlock::Observations(units))
    }

    pub fn exact(measures: Vec<GaussianMeasure>) -> Result<Self> {
        let d = measures.first().ok_or(GwrError::EmptyInput)?.dim();
        if let Some(bad) = measures.iter().find(|m| m.dim() != d) {
            return Err(GwrError::DimensionMismatch { expected: d, found: bad.dim() });
        }
        Ok(SampleBlock::Exact(measures))
    }

    pub fn unit_count(&self) -> usize {
        match self {
            SampleBlock::Observations(u) => u.len(),
            SampleBlock::Exact(m) => m.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SampleBlock::Observations(u) => u.first().map_or(0, |m| m.ncols()),
            SampleBlock::Exact(m) => m.first().map_or(0, |m| m.dim()),
        }
    }

    /// Per-unit proxy Gaussians.
    pub fn proxies(&self) -> Result<Vec<GaussianMeasure>> {
        match self {
            SampleBlock::Observations(units) => units.par_iter().map(empirical_moments).collect(),
            SampleBlock::Exact(m) => Ok(m.clone()),
        }
    }
}

/// Row mean and covariance with the `1/N` divisor.
pub fn empirical_moments(obs: &DMatrix<f64>) -> Result<GaussianMeasure> {
    let n = obs.nrows();
    if n == 0 {
        return Err(GwrError::EmptyBlock);
    }
    let mean: DVector<f64> = obs.row_mean().transpose();
    let mut centered = obs.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n as f64;
    GaussianMeasure::new(mean, SymMatrix::new(cov))
}

/// Builds proxies for both blocks, estimates the references as their
/// Fréchet means and fits the requested model.
pub fn fit_from_samples(
    pred: &SampleBlock,
    resp: &SampleBlock,
    kind: ModelKind,
    options: &LowRankOptions,
) -> Result<FittedModel> {
    if pred.unit_count() != resp.unit_count() {
        return Err(GwrError::LengthMismatch { expected: pred.unit_count(), found: resp.unit_count() });
    }
    fit_from_measures(&pred.proxies()?, &resp.proxies()?, kind, options)
}
