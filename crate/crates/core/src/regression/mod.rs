//! Linear regression between Gaussian measures through their linearized
//! representations.

pub mod basic;
pub mod low_rank;
pub mod model;
pub mod sandwich;
pub mod tensor;
pub mod vech;

pub use basic::{fit_basic, fit_scalar, predict_scalar};
pub use low_rank::{fit_low_rank, LowRankFactors, LowRankFit, LowRankOptions};
pub use tensor::{star_matrix, CoefficientTensor, IdentifiedTensor};
pub use vech::{vec_star, vech_star};
pub use model::{fit_from_measures, fit_with_references, FitDiagnostics, FittedModel, ModelKind, Prediction};
pub use sandwich::{sandwich_covariance, SandwichCovariance};
