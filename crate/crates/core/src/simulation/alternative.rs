//! Baseline regression on raw (mean, covariance) pairs under the Frobenius
//! norm, ignoring the Wasserstein geometry.

use crate::error::{GwrError, Result};
use crate::geometry::{GaussianMeasure, ReferenceMeasure, XiElement};
use crate::matrix::{min_eigenvalue, project_psd};
use crate::regression::basic::fit_basic;
use crate::regression::low_rank::{fit_low_rank, LowRankOptions};
use crate::regression::model::ModelKind;
use crate::regression::tensor::CoefficientTensor;

/// `(m, Σ)` as an element of the layout space.
pub fn moment_element(m: &GaussianMeasure) -> XiElement {
    XiElement { a: m.mean().clone(), v: m.cov().clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeModel {
    tensor: CoefficientTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternativePrediction {
    pub measure: GaussianMeasure,
    /// Whether the predicted covariance was projected onto the PSD cone.
    pub projected: bool,
}

impl AlternativeModel {
    pub fn tensor(&self) -> &CoefficientTensor {
        &self.tensor
    }

    pub fn predict(&self, nu1: &GaussianMeasure) -> Result<AlternativePrediction> {
        let w = self.tensor.contract(&moment_element(nu1))?;
        let projected = min_eigenvalue(&w.v) < 0.0;
        let cov = if projected { project_psd(&w.v) } else { w.v };
        Ok(AlternativePrediction { measure: GaussianMeasure::new(w.a, cov)?, projected })
    }
}

/// Least squares of the response moments on the predictor moments in the
/// Frobenius norm, full or rank-K.
pub fn fit_alternative(
    pred: &[GaussianMeasure],
    resp: &[GaussianMeasure],
    kind: ModelKind,
    options: &LowRankOptions,
) -> Result<AlternativeModel> {
    if pred.is_empty() || resp.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    let z: Vec<XiElement> = pred.iter().map(moment_element).collect();
    let w: Vec<XiElement> = resp.iter().map(moment_element).collect();
    let frobenius = ReferenceMeasure::standard(resp[0].dim());
    let tensor = match kind {
        ModelKind::Basic => fit_basic(&z, &w, &frobenius)?.into_tensor(),
        ModelKind::LowRank { rank } => fit_low_rank(&z, &w, &frobenius, rank, options)?.factors.materialize(),
    };
    Ok(AlternativeModel { tensor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wasserstein_distance;
    use crate::regression::vech::gram_matrix;
    use crate::simulation::generators::{generate_alternative_pair, generating_tensor};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_alternative_data_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d0 = generating_tensor(2);
        let pairs: Vec<_> = (0..40).map(|_| generate_alternative_pair(&mut rng, 2, d0.tensor()).unwrap()).collect();
        let pred: Vec<GaussianMeasure> = pairs.iter().map(|p| p.predictor.clone()).collect();
        let truth: Vec<GaussianMeasure> = pairs.iter().map(|p| p.truth.clone()).collect();
        let model = fit_alternative(&pred, &truth, ModelKind::Basic, &LowRankOptions::default()).unwrap();
        for (p, t) in pred.iter().zip(&truth) {
            let out = model.predict(p).unwrap();
            assert!(!out.projected);
            assert!((out.measure.mean() - t.mean()).amax() < 1e-8);
            assert!((out.measure.cov().as_matrix() - t.cov().as_matrix()).amax() < 1e-8);
            assert!(wasserstein_distance(&out.measure, t).unwrap() < 1e-6);
        }
    }

    #[test]
    fn zero_responses_give_zero_tensor() {
        let pred: Vec<GaussianMeasure> = (1..6)
            .map(|i| GaussianMeasure::from_slices(&[i as f64], &[(i * i) as f64]).unwrap())
            .collect();
        let zero = vec![GaussianMeasure::from_slices(&[0.0], &[0.0]).unwrap(); 5];
        let model = fit_alternative(&pred, &zero, ModelKind::Basic, &LowRankOptions::default()).unwrap();
        assert!(model.tensor().entries().iter().all(|&v| v == 0.0));
        assert_eq!(
            fit_alternative(&[], &[], ModelKind::Basic, &LowRankOptions::default()).unwrap_err(),
            GwrError::EmptyInput
        );
    }

    #[test]
    fn frobenius_weighting_is_the_standard_reference_norm() {
        // Frobenius norm of [a | V] on vech* coordinates, off-diagonals counted twice
        let g = gram_matrix(&ReferenceMeasure::standard(3));
        let mut expected = DMatrix::identity(9, 9);
        for (k, (r, c)) in crate::regression::vech::vech_positions(3).into_iter().enumerate() {
            if c > 0 && r != c - 1 {
                expected[(k, k)] = 2.0;
            }
        }
        assert!((g - expected).amax() < 1e-15);
    }

    #[test]
    fn non_psd_predictions_are_projected() {
        // unit predictor variance acts as an intercept; response variance falls with the mean
        let pred: Vec<GaussianMeasure> = (1..8)
            .map(|i| GaussianMeasure::from_slices(&[i as f64], &[1.0]).unwrap())
            .collect();
        let resp: Vec<GaussianMeasure> = (1..8)
            .map(|i| GaussianMeasure::from_slices(&[0.0], &[10.0 - i as f64]).unwrap())
            .collect();
        let model = fit_alternative(&pred, &resp, ModelKind::Basic, &LowRankOptions::default()).unwrap();
        let out = model.predict(&GaussianMeasure::from_slices(&[40.0], &[1.0]).unwrap()).unwrap();
        assert!(out.projected);
        assert!(min_eigenvalue(out.measure.cov()) >= 0.0);
    }
}
