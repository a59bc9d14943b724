//! Monte Carlo scenarios comparing the Wasserstein and moment regressions.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};
use crate::geometry::{wasserstein_distance, GaussianMeasure};
use crate::regression::low_rank::LowRankOptions;
use crate::regression::model::{fit_from_measures, ModelKind};
use crate::samples::SampleBlock;

use super::alternative::fit_alternative;
use super::generators::{draw_samples, generate_mixture_pair, generating_tensor, GeneratedPair};

fn default_new_predictors() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Dimension of both predictor and response Gaussians.
    pub d: usize,
    /// Training units per run.
    pub n: usize,
    /// Draws observed per distribution; `None` observes the Gaussians exactly.
    pub samples: Option<usize>,
    pub model: ModelKind,
    pub runs: usize,
    #[serde(default = "default_new_predictors")]
    pub new_predictors: usize,
    /// Degrees of freedom of the multivariate t used for the draws.
    #[serde(default)]
    pub t_dof: Option<f64>,
    pub seed: u64,
    /// Block relaxation settings for rank-K fits; the seed is drawn per run.
    #[serde(default)]
    pub low_rank: LowRankOptions,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("d", self.d), ("n", self.n), ("runs", self.runs), ("new_predictors", self.new_predictors)];
        for (name, v) in positive {
            if v == 0 {
                return Err(GwrError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.samples == Some(0) {
            return Err(GwrError::InvalidConfig("samples must be positive".into()));
        }
        if let Some(l) = self.t_dof {
            if l.is_nan() || l <= 2.0 {
                return Err(GwrError::InvalidConfig(format!("t_dof must exceed 2, got {l}")));
            }
            if self.samples.is_none() {
                return Err(GwrError::InvalidConfig("t_dof requires sampled observations".into()));
            }
        }
        if let ModelKind::LowRank { rank } = self.model {
            if rank == 0 {
                return Err(GwrError::InvalidConfig("rank must be positive".into()));
            }
        }
        Ok(())
    }

    /// Desk-scale built-in scenarios: `fig2-desk`,
    /// `fig3-desk` and `fig4-desk`.
    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        let base = ScenarioConfig {
            d: 2,
            n: 200,
            samples: Some(500),
            model: ModelKind::Basic,
            runs: 100,
            new_predictors: 200,
            t_dof: None,
            seed: 20240601,
            low_rank: LowRankOptions::default(),
        };
        match name {
            "fig2-desk" => Some(base),
            "fig3-desk" => Some(ScenarioConfig { d: 6, model: ModelKind::LowRank { rank: 2 }, runs: 50, ..base }),
            "fig4-desk" => Some(ScenarioConfig { t_dof: Some(5.0), runs: 50, ..base }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub awd_proposed: f64,
    pub awd_alternative: f64,
    /// New predictors whose proposed fit needed boundary projection.
    pub proj_proposed: usize,
    /// New predictors whose alternative fit had its covariance projected.
    pub proj_alternative: usize,
}

/// Mean Wasserstein distance between paired truths and fits.
pub fn awd(truths: &[GaussianMeasure], fits: &[GaussianMeasure]) -> Result<f64> {
    if truths.len() != fits.len() {
        return Err(GwrError::LengthMismatch { expected: truths.len(), found: fits.len() });
    }
    if truths.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    let mut total = 0.0;
    for (t, f) in truths.iter().zip(fits) {
        total += wasserstein_distance(t, f)?;
    }
    Ok(total / truths.len() as f64)
}

/// One simulated dataset: training pairs, new pairs, and what the models see.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub train: Vec<GeneratedPair>,
    pub test: Vec<GeneratedPair>,
    /// Proxies (or exact measures) for training predictors and responses.
    pub train_pred: Vec<GaussianMeasure>,
    pub train_resp: Vec<GaussianMeasure>,
    /// Proxies (or exact measures) for the new predictors.
    pub test_pred: Vec<GaussianMeasure>,
    /// Seed for the rank-K fits of this run.
    pub fit_seed: u64,
}

/// The random stream of run `run`: the scenario seed with stream index `run`.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Stream for the t mixing variables of a run, kept apart from [`run_rng`]
/// so scenarios that differ only in `t_dof` share every other draw.
pub fn mixing_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | run as u64);
    rng
}

struct RunRngs {
    main: ChaCha8Rng,
    mixing: ChaCha8Rng,
}

fn observe(rngs: &mut RunRngs, m: &GaussianMeasure, cfg: &ScenarioConfig) -> Result<SampleBlock> {
    match cfg.samples {
        None => SampleBlock::exact(vec![m.clone()]),
        Some(n) => SampleBlock::from_observations(vec![draw_samples(&mut rngs.main, &mut rngs.mixing, m, n, cfg.t_dof)?]),
    }
}

fn proxy(rngs: &mut RunRngs, m: &GaussianMeasure, cfg: &ScenarioConfig) -> Result<GaussianMeasure> {
    Ok(observe(rngs, m, cfg)?.proxies()?.remove(0))
}

/// Generates all random inputs of one run, in a fixed draw order.
pub fn generate_run(cfg: &ScenarioConfig, run: usize) -> Result<RunData> {
    cfg.validate()?;
    let mut rngs = RunRngs { main: run_rng(cfg.seed, run), mixing: mixing_rng(cfg.seed, run) };
    let b0 = generating_tensor(cfg.d);
    let mut train = Vec::with_capacity(cfg.n);
    let mut train_pred = Vec::with_capacity(cfg.n);
    let mut train_resp = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let pair = generate_mixture_pair(&mut rngs.main, cfg.d, b0.tensor())?;
        train_pred.push(proxy(&mut rngs, &pair.predictor, cfg)?);
        train_resp.push(proxy(&mut rngs, &pair.response, cfg)?);
        train.push(pair);
    }
    let mut test = Vec::with_capacity(cfg.new_predictors);
    let mut test_pred = Vec::with_capacity(cfg.new_predictors);
    for _ in 0..cfg.new_predictors {
        let pair = generate_mixture_pair(&mut rngs.main, cfg.d, b0.tensor())?;
        test_pred.push(proxy(&mut rngs, &pair.predictor, cfg)?);
        test.push(pair);
    }
    let fit_seed = rngs.main.next_u64();
    Ok(RunData { train, test, train_pred, train_resp, test_pred, fit_seed })
}

/// Gaussian matched to the first two moments of the true response: the
/// noiseless response itself, or for t draws with `ℓ` degrees of freedom the
/// same location with covariance `ℓ/(ℓ−2)` times the scale matrix.
pub fn truth_measure(cfg: &ScenarioConfig, truth: &GaussianMeasure) -> Result<GaussianMeasure> {
    match cfg.t_dof {
        Some(l) if l.is_finite() => GaussianMeasure::new(truth.mean().clone(), truth.cov().scale(l / (l - 2.0))),
        _ => Ok(truth.clone()),
    }
}

/// Fits both models on one run's data and scores them on the new predictors.
pub fn evaluate_run(cfg: &ScenarioConfig, run: usize, data: &RunData) -> Result<RunRecord> {
    let options = LowRankOptions { seed: data.fit_seed, ..cfg.low_rank.clone() };
    let proposed = fit_from_measures(&data.train_pred, &data.train_resp, cfg.model, &options)?;
    let alternative = fit_alternative(&data.train_pred, &data.train_resp, cfg.model, &options)?;
    let truths = data.test.iter().map(|p| truth_measure(cfg, &p.truth)).collect::<Result<Vec<_>>>()?;
    let mut fits_p = Vec::with_capacity(truths.len());
    let mut fits_a = Vec::with_capacity(truths.len());
    let (mut proj_p, mut proj_a) = (0, 0);
    for nu in &data.test_pred {
        let p = proposed.predict(nu)?;
        proj_p += usize::from(p.projected);
        fits_p.push(p.measure);
        let a = alternative.predict(nu)?;
        proj_a += usize::from(a.projected);
        fits_a.push(a.measure);
    }
    Ok(RunRecord {
        run,
        awd_proposed: awd(&truths, &fits_p)?,
        awd_alternative: awd(&truths, &fits_a)?,
        proj_proposed: proj_p,
        proj_alternative: proj_a,
    })
}

pub fn run_once(cfg: &ScenarioConfig, run: usize) -> Result<RunRecord> {
    evaluate_run(cfg, run, &generate_run(cfg, run)?)
}

/// All runs of a scenario, in parallel, returned in run order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    (0..cfg.runs).into_par_iter().map(|r| run_once(cfg, r)).collect()
}

/// Minimum, quartiles and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// at position `p·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FiveNumber {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(GwrError::EmptyInput);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(GwrError::DegenerateInput("NaN in summary input".into()));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(FiveNumber {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub runs: usize,
    pub proposed: FiveNumber,
    pub alternative: FiveNumber,
    pub proj_proposed_total: usize,
    pub proj_alternative_total: usize,
    /// Runs in which at least one proposed prediction was projected.
    pub runs_with_projection_proposed: usize,
    pub runs_with_projection_alternative: usize,
}

impl ScenarioSummary {
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        let p: Vec<f64> = records.iter().map(|r| r.awd_proposed).collect();
        let a: Vec<f64> = records.iter().map(|r| r.awd_alternative).collect();
        Ok(ScenarioSummary {
            runs: records.len(),
            proposed: FiveNumber::from_values(&p)?,
            alternative: FiveNumber::from_values(&a)?,
            proj_proposed_total: records.iter().map(|r| r.proj_proposed).sum(),
            proj_alternative_total: records.iter().map(|r| r.proj_alternative).sum(),
            runs_with_projection_proposed: records.iter().filter(|r| r.proj_proposed > 0).count(),
            runs_with_projection_alternative: records.iter().filter(|r| r.proj_alternative > 0).count(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            d: 2,
            n: 10,
            samples: Some(30),
            model: ModelKind::Basic,
            runs: 1,
            new_predictors: 20,
            t_dof: None,
            seed,
            low_rank: LowRankOptions::default(),
        }
    }

    #[test]
    fn smoke_run_is_finite() {
        let recs = run_scenario(&small(1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].awd_proposed.is_finite() && recs[0].awd_proposed >= 0.0);
        assert!(recs[0].awd_alternative.is_finite() && recs[0].awd_alternative >= 0.0);
        assert!(recs[0].proj_proposed <= 20 && recs[0].proj_alternative <= 20);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ScenarioConfig { runs: 3, ..small(7) };
        assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
        assert_eq!(generate_run(&cfg, 2).unwrap(), generate_run(&cfg, 2).unwrap());
        assert_ne!(generate_run(&cfg, 1).unwrap(), generate_run(&cfg, 2).unwrap());
        let lr = ScenarioConfig { model: ModelKind::LowRank { rank: 2 }, runs: 2, ..small(9) };
        assert_eq!(run_scenario(&lr).unwrap(), run_scenario(&lr).unwrap());
    }

    #[test]
    fn infinite_dof_reproduces_gaussian_dataset() {
        let g = generate_run(&small(3), 0).unwrap();
        let t = generate_run(&ScenarioConfig { t_dof: Some(f64::INFINITY), ..small(3) }, 0).unwrap();
        assert_eq!(g, t);
    }

    #[test]
    fn dof_cells_share_pairs() {
        let a = generate_run(&ScenarioConfig { t_dof: Some(5.0), ..small(4) }, 1).unwrap();
        let b = generate_run(&ScenarioConfig { t_dof: Some(15.0), ..small(4) }, 1).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.fit_seed, b.fit_seed);
        assert_ne!(a.train_pred, b.train_pred);
    }

    #[test]
    fn validation() {
        assert!(ScenarioConfig { runs: 0, ..small(1) }.validate().is_err());
        assert!(ScenarioConfig { samples: Some(0), ..small(1) }.validate().is_err());
        assert!(ScenarioConfig { t_dof: Some(2.0), ..small(1) }.validate().is_err());
        assert!(ScenarioConfig { model: ModelKind::LowRank { rank: 0 }, ..small(1) }.validate().is_err());
        for name in ["fig2-desk", "fig3-desk", "fig4-desk"] {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::preset("nope").is_none());
    }

    #[test]
    fn config_json() {
        let text = r#"{"d":2,"n":50,"samples":50,"model":{"kind":"basic"},"runs":5,"seed":1}"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.new_predictors, 200);
        assert_eq!(cfg.low_rank, LowRankOptions::default());
        let lr: ScenarioConfig =
            serde_json::from_str(r#"{"d":6,"n":50,"samples":null,"model":{"kind":"lowrank","rank":3},"runs":5,"seed":1}"#).unwrap();
        assert_eq!(lr.model, ModelKind::LowRank { rank: 3 });
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"d":2}"#).is_err());
    }

    #[test]
    fn awd_examples() {
        let truths = vec![GaussianMeasure::standard(1); 200];
        let fits = vec![GaussianMeasure::from_slices(&[1.0], &[1.0]).unwrap(); 200];
        assert_eq!(awd(&truths, &truths).unwrap(), 0.0);
        assert!((awd(&truths, &fits).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(awd(&truths, &fits[..3]), Err(GwrError::LengthMismatch { .. })));

        let a = vec![GaussianMeasure::standard(1), GaussianMeasure::from_slices(&[3.0], &[1.0]).unwrap()];
        let b = vec![GaussianMeasure::standard(1), GaussianMeasure::standard(1)];
        let swapped = vec![a[1].clone(), a[0].clone()];
        assert_ne!(awd(&a, &b).unwrap(), awd(&swapped, &a).unwrap());
    }

    #[test]
    fn awd_triangle_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<GaussianMeasure> {
            (0..10)
                .map(|_| {
                    let s: f64 = rng.random_range(0.1..3.0);
                    GaussianMeasure::from_slices(&[rng.random_range(-2.0..2.0)], &[s]).unwrap()
                })
                .collect()
        };
        for _ in 0..20 {
            let (t, f, g) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let fg = awd(&f, &g).unwrap();
            assert!(awd(&t, &f).unwrap() >= (awd(&t, &g).unwrap() - fg).abs() - 1e-9);
        }
    }

    #[test]
    fn five_number_summary() {
        let s = FiveNumber::from_values(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, FiveNumber { min: 1.0, q1: 2.0, median: 3.0, q3: 4.0, max: 5.0 });
        let s = FiveNumber::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        let s = FiveNumber::from_values(&[7.0]).unwrap();
        assert_eq!(s, FiveNumber { min: 7.0, q1: 7.0, median: 7.0, q3: 7.0, max: 7.0 });
        assert!(FiveNumber::from_values(&[]).is_err());
    }
}
