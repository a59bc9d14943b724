use gwr_core::geometry::in_range;
use gwr_core::matrix::{min_eigenvalue, psd_tolerance};
use gwr_core::regression::vech::{vec_star, xi_to_vech};
use gwr_core::regression::{fit_basic, sandwich_covariance};
use gwr_core::simulation::{draw_samples, generate_proposed_pair, generating_tensor};
use gwr_core::{
    fit_from_measures, fit_from_samples, wasserstein_distance, FittedModel, GaussianMeasure, LowRankOptions,
    ModelKind, ReferenceMeasure, SampleBlock, SymMatrix, XiElement,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_xi(rng: &mut ChaCha8Rng, d: usize) -> XiElement {
    let a = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.4..0.4));
    XiElement { a, v: SymMatrix::new((&b + b.transpose()) * 0.5) }
}

fn random_reference(rng: &mut ChaCha8Rng, d: usize) -> ReferenceMeasure {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.4;
    let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    ReferenceMeasure::new(GaussianMeasure::from_slices(&mean, cov.as_slice()).unwrap()).unwrap()
}

/// The output Gram matrix cancels from the sandwich, leaving the
/// multivariate OLS robust covariance `Σᵢ (rᵢrᵢᵀ) ⊗ (A⁻¹fᵢfᵢᵀA⁻¹)` with `A = FᵀF`.
#[test]
fn sandwich_matches_multivariate_ols_under_any_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let reference = random_reference(&mut rng, 2);
        let x: Vec<XiElement> = (0..80).map(|_| random_xi(&mut rng, 2)).collect();
        let y: Vec<XiElement> = x.iter().map(|xi| xi.scale(0.5).add(&random_xi(&mut rng, 2).scale(0.3))).collect();
        let theta = vec_star(&fit_basic(&x, &y, &reference).unwrap());
        let cov = sandwich_covariance(&x, &y, &theta, &reference).unwrap().matrix;

        let f = DMatrix::from_fn(x.len(), 5, |i, j| xi_to_vech(&x[i])[j]);
        let z = DMatrix::from_fn(y.len(), 5, |i, j| xi_to_vech(&y[i])[j]);
        let a_inv = (f.transpose() * &f).try_inverse().unwrap();
        let beta = &a_inv * f.transpose() * &z;
        let resid = &z - &f * &beta;
        let mut oracle = DMatrix::zeros(25, 25);
        for i in 0..x.len() {
            let r = resid.row(i).transpose();
            let g = &a_inv * f.row(i).transpose();
            oracle += (&r * r.transpose()).kronecker(&(&g * g.transpose()));
        }
        assert!((DVector::from_column_slice(beta.as_slice()) - &theta).amax() < 1e-10);
        assert!((cov - oracle).amax() < 1e-10);
    }
}

#[test]
fn sample_pipeline_approaches_exact_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 2;
    let b0 = generating_tensor(d);
    let pairs: Vec<_> = (0..40).map(|_| generate_proposed_pair(&mut rng, d, b0.tensor()).unwrap()).collect();
    let pred: Vec<GaussianMeasure> = pairs.iter().map(|p| p.predictor.clone()).collect();
    let resp: Vec<GaussianMeasure> = pairs.iter().map(|p| p.response.clone()).collect();
    let opts = LowRankOptions::default();
    let exact = fit_from_measures(&pred, &resp, ModelKind::Basic, &opts).unwrap();

    let gap = |n: usize, rng: &mut ChaCha8Rng| {
        let mut mixing = ChaCha8Rng::seed_from_u64(0);
        let mut observe = |ms: &[GaussianMeasure], rng: &mut ChaCha8Rng| {
            SampleBlock::from_observations(ms.iter().map(|m| draw_samples(rng, &mut mixing, m, n, None).unwrap()).collect()).unwrap()
        };
        let p = observe(&pred, rng);
        let r = observe(&resp, rng);
        let model = fit_from_samples(&p, &r, ModelKind::Basic, &opts).unwrap();
        pred.iter()
            .map(|m| wasserstein_distance(&model.predict(m).unwrap().measure, &exact.predict(m).unwrap().measure).unwrap())
            .sum::<f64>()
            / pred.len() as f64
    };
    let coarse = gap(30, &mut rng);
    let fine = gap(3000, &mut rng);
    assert!(fine < coarse / 3.0, "coarse {coarse}, fine {fine}");
}

#[test]
fn model_json_round_trip_preserves_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let b0 = generating_tensor(3);
    let pairs: Vec<_> = (0..30).map(|_| generate_proposed_pair(&mut rng, 3, b0.tensor()).unwrap()).collect();
    let pred: Vec<GaussianMeasure> = pairs.iter().map(|p| p.predictor.clone()).collect();
    let resp: Vec<GaussianMeasure> = pairs.iter().map(|p| p.response.clone()).collect();
    for kind in [ModelKind::Basic, ModelKind::LowRank { rank: 2 }] {
        let model = fit_from_measures(&pred, &resp, kind, &LowRankOptions { seed: 4, ..Default::default() }).unwrap();
        let back = FittedModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back.to_json(), model.to_json());
        for m in &pred {
            assert_eq!(back.predict(m).unwrap(), model.predict(m).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_are_valid_gaussians(seed in any::<u64>(), spread in 0.01f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<GaussianMeasure> = (0..12).map(|_| random_reference(&mut rng, 2).measure().clone()).collect();
        let resp: Vec<GaussianMeasure> = (0..12).map(|_| random_reference(&mut rng, 2).measure().clone()).collect();
        let model = fit_from_measures(&pred, &resp, ModelKind::Basic, &LowRankOptions::default()).unwrap();
        let base = random_reference(&mut rng, 2).measure().clone();
        let probe = GaussianMeasure::new(base.mean() * spread, base.cov().scale(spread)).unwrap();
        let out = model.predict(&probe).unwrap();
        prop_assert!(out.eta > 0.0 && out.eta <= 1.0);
        prop_assert_eq!(out.projected, out.eta < 1.0);
        // boundary predictions are singular up to round-off
        let cov = out.measure.cov();
        prop_assert!(min_eigenvalue(cov) >= -psd_tolerance(cov.as_matrix().amax()));
        prop_assert_eq!(out.projected, !in_range(&model.predict_linear(&probe).unwrap()));
    }
}
