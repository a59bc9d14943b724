//! Gaussian-to-Gaussian distribution regression under the 2-Wasserstein
//! metric.
//!
//! Gaussians are mapped into a linear matrix space by optimal transport from
//! a reference measure, regressed there with a basic or rank-K coefficient
//! tensor, and mapped back.

pub mod error;
pub mod geometry;
pub mod matrix;
pub mod regression;
pub mod samples;
pub mod simulation;

pub use error::{GwrError, Result};
pub use geometry::{
    exp_map, frechet_mean, frechet_mean_with, log_map, wasserstein_distance, FrechetMean, FrechetOptions, GaussianMeasure,
    ReferenceMeasure, XiElement,
};
pub use matrix::{SpdMatrix, SymMatrix};
pub use regression::model::ModelDocument;
pub use regression::{
    fit_from_measures, fit_with_references, CoefficientTensor, FitDiagnostics, FittedModel, IdentifiedTensor, LowRankOptions,
    ModelKind, Prediction,
};
pub use samples::{empirical_moments, fit_from_samples, SampleBlock};
