//! Monte Carlo experiments on mixtures of the Wasserstein and moment models.

pub mod alternative;
pub mod generators;
pub mod runner;

pub use alternative::{fit_alternative, AlternativeModel};
pub use generators::{draw_samples, generate_alternative_pair, generate_mixture_pair, generate_proposed_pair, generating_tensor};
pub use runner::{awd, run_scenario, FiveNumber, RunRecord, ScenarioConfig, ScenarioSummary};
