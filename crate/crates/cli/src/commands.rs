//! Subcommand implementations.

use std::fs;
use std::path::Path;

use gwr_core::regression::model::ModelDocument;
use gwr_core::simulation::runner::ScenarioSummary;
use gwr_core::simulation::{draw_samples, generate_mixture_pair, generating_tensor, run_scenario, FiveNumber, ScenarioConfig};
use gwr_core::{
    empirical_moments, fit_from_samples, frechet_mean, wasserstein_distance, FittedModel, GaussianMeasure, GwrError,
    LowRankOptions, ModelKind, SampleBlock, SymMatrix,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::io::{fmt_num, read_long, read_measures, write_long, write_measures, LongDataset, MeasureRow, Unit};
use crate::manifest::{now_rfc3339, RunManifest};
use crate::split::Split;
use crate::{BarycenterArgs, EvalArgs, FitArgs, KindArg, PredictArgs, RoleArg, SimulateArgs, SynthArgs};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Header line of evaluation summaries.
pub const QUANTILE_NOTE: &str =
    "# Wasserstein discrepancies; quartiles interpolate linearly between order statistics at position p*(n-1)";

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    schema_version: u32,
    quantiles: &'static str,
    config: &'a ScenarioConfig,
    #[serde(flatten)]
    summary: &'a ScenarioSummary,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    let mut inputs = Vec::new();
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let bytes = read_file(path)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::input(format!("{} is not UTF-8", path.display())))?;
            inputs.push((path.clone(), bytes));
            serde_json::from_str::<ScenarioConfig>(&text)
                .map_err(|e| CliError::input(format!("scenario config {}: {e}", path.display())))?
        }
        (None, Some(name)) => ScenarioConfig::preset(name).ok_or_else(|| {
            CliError::input(format!("unknown preset {name:?}; available: fig2-desk, fig3-desk, fig4-desk"))
        })?,
        (None, None) => return Err(CliError::input("one of --config or --preset is required")),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    cfg.validate()?;
    let records = run_scenario(&cfg)?;
    let summary = ScenarioSummary::from_records(&records)?;

    create_dir(&args.out)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["run", "awd_proposed", "awd_alternative", "proj_proposed", "proj_alternative"])?;
    for r in &records {
        w.write_record([
            r.run.to_string(),
            fmt_num(r.awd_proposed),
            fmt_num(r.awd_alternative),
            r.proj_proposed.to_string(),
            r.proj_alternative.to_string(),
        ])?;
    }
    let csv_bytes = w.into_inner().map_err(|e| CliError::input(format!("CSV: {e}")))?;
    write_file(&args.out.join("runs.csv"), &csv_bytes)?;
    let doc = SummaryDocument {
        schema_version: SUMMARY_SCHEMA_VERSION,
        quantiles: "linear interpolation between order statistics at position p*(n-1)",
        config: &cfg,
        summary: &summary,
    };
    let text = serde_json::to_string_pretty(&doc).expect("summary serializes") + "\n";
    write_file(&args.out.join("summary.json"), text.as_bytes())?;

    let config = serde_json::to_value(&cfg).expect("config serializes");
    let mut manifest = RunManifest::new("simulate", config, Some(cfg.seed), started);
    for (path, bytes) in &inputs {
        manifest.input(path, bytes);
    }
    manifest.outputs = vec!["runs.csv".into(), "summary.json".into()];
    manifest.write(&args.out)
}

/// Per-coordinate affine rescaling `(x − center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CoordinateScaling {
    /// Pooled mean and standard deviation (1/N divisor) of all rows.
    pub fn from_blocks<'a>(blocks: impl Iterator<Item = &'a DMatrix<f64>>) -> Result<Self, CliError> {
        let rows: Vec<&DMatrix<f64>> = blocks.collect();
        let d = rows.first().map_or(0, |m| m.ncols());
        let total: usize = rows.iter().map(|m| m.nrows()).sum();
        let mut center = vec![0.0; d];
        for m in &rows {
            for (j, c) in center.iter_mut().enumerate() {
                *c += m.column(j).sum();
            }
        }
        center.iter_mut().for_each(|c| *c /= total as f64);
        let mut scale = vec![0.0; d];
        for m in &rows {
            for (j, s) in scale.iter_mut().enumerate() {
                *s += m.column(j).iter().map(|v| (v - center[j]).powi(2)).sum::<f64>();
            }
        }
        for (j, s) in scale.iter_mut().enumerate() {
            *s = (*s / total as f64).sqrt();
            if !(*s > 0.0) {
                return Err(CliError::numeric(format!("cannot standardize coordinate c{}: zero variance", j + 1)));
            }
        }
        Ok(CoordinateScaling { center, scale })
    }

    pub fn apply(&self, obs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(obs.nrows(), obs.ncols(), |i, j| (obs[(i, j)] - self.center[j]) / self.scale[j])
    }

    /// Maps a Gaussian on the standardized scale back to the original one.
    pub fn invert(&self, m: &GaussianMeasure) -> Result<GaussianMeasure, CliError> {
        let s = DVector::from_column_slice(&self.scale);
        let mean = m.mean().component_mul(&s) + DVector::from_column_slice(&self.center);
        let cov = DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.cov().get(i, j) * self.scale[i] * self.scale[j]);
        Ok(GaussianMeasure::new(mean, SymMatrix::new(cov))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub predictor: CoordinateScaling,
    pub response: CoordinateScaling,
}

/// A fitted model with the optional standardization applied to its inputs.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: FittedModel,
    pub standardization: Option<Standardization>,
}

impl StoredModel {
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self.model.to_document()).expect("model serializes");
        if let Some(s) = &self.standardization {
            value["standardization"] = serde_json::to_value(s).expect("standardization serializes");
        }
        serde_json::to_string_pretty(&value).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::input(format!("model JSON: {e}")))?;
        let obj = value.as_object_mut().ok_or_else(|| CliError::input("model JSON must be an object"))?;
        let standardization: Option<Standardization> = match obj.remove("standardization") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| CliError::input(format!("model JSON standardization: {e}")))?),
        };
        let doc: ModelDocument = serde_json::from_value(value).map_err(|e| CliError::input(format!("model JSON: {e}")))?;
        let model = FittedModel::from_document(doc).map_err(|e| CliError::input(format!("invalid model: {e}")))?;
        if let Some(s) = &standardization {
            let (d1, d2) = (model.ref_in().dim(), model.ref_out().dim());
            if s.predictor.center.len() != d1 || s.predictor.scale.len() != d1 || s.response.center.len() != d2 || s.response.scale.len() != d2 {
                return Err(CliError::input("model JSON standardization does not match the model dimensions"));
            }
        }
        Ok(StoredModel { model, standardization })
    }

    /// Prediction for a unit's raw predictor observations.
    pub fn predict_observations(&self, obs: &DMatrix<f64>) -> Result<gwr_core::Prediction, CliError> {
        let obs = match &self.standardization {
            Some(s) => s.predictor.apply(obs),
            None => obs.clone(),
        };
        let mut p = self.model.predict(&empirical_moments(&obs)?)?;
        if let Some(s) = &self.standardization {
            p.measure = s.response.invert(&p.measure)?;
        }
        Ok(p)
    }
}

fn load_dataset(path: &Path) -> Result<(LongDataset, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let ds = read_long(bytes.as_slice()).map_err(|e| match e {
        CliError::Input(msg) => CliError::input(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((ds, bytes))
}

fn select_units(ds: &LongDataset, split: &str) -> Result<LongDataset, CliError> {
    let rule: Split = split.parse()?;
    Ok(ds.select(&rule.select(&ds.unit_ids())?))
}

fn model_kind(args: &FitArgs) -> Result<ModelKind, CliError> {
    match (args.kind, args.rank) {
        (KindArg::Basic, None) => Ok(ModelKind::Basic),
        (KindArg::Basic, Some(_)) => Err(CliError::input("--rank only applies to --kind lowrank")),
        (KindArg::Lowrank, None) => Err(CliError::input("--kind lowrank requires --rank <K>")),
        (KindArg::Lowrank, Some(0)) => Err(CliError::input("--rank must be positive")),
        (KindArg::Lowrank, Some(rank)) => Ok(ModelKind::LowRank { rank }),
    }
}

fn role_block<'a>(unit: &'a Unit, role: RoleArg) -> Result<&'a DMatrix<f64>, CliError> {
    let (block, name) = match role {
        RoleArg::Predictor => (&unit.predictor, "predictor"),
        RoleArg::Response => (&unit.response, "response"),
    };
    block.as_ref().ok_or_else(|| CliError::input(format!("unit {:?} has no {name} rows", unit.id)))
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    let kind = model_kind(args)?;
    if args.restarts == Some(0) {
        return Err(CliError::input("--restarts must be positive"));
    }
    let (ds, bytes) = load_dataset(&args.data)?;
    let train = select_units(&ds, &args.split)?;
    match train.units.len() {
        0 => return Err(CliError::input(format!("--split {} selects no units", args.split))),
        1 if !args.allow_single_unit => {
            return Err(GwrError::DegenerateReference(
                "a single training unit determines the references but not the regression; pass --allow-single-unit to interpolate it"
                    .into(),
            )
            .into())
        }
        _ => {}
    }
    let mut pred = Vec::with_capacity(train.units.len());
    let mut resp = Vec::with_capacity(train.units.len());
    for u in &train.units {
        pred.push(role_block(u, RoleArg::Predictor)?.clone());
        resp.push(role_block(u, RoleArg::Response)?.clone());
    }
    let standardization = if args.standardize {
        let s = Standardization {
            predictor: CoordinateScaling::from_blocks(pred.iter())?,
            response: CoordinateScaling::from_blocks(resp.iter())?,
        };
        pred = pred.iter().map(|m| s.predictor.apply(m)).collect();
        resp = resp.iter().map(|m| s.response.apply(m)).collect();
        Some(s)
    } else {
        None
    };
    let defaults = LowRankOptions::default();
    let options = LowRankOptions { seed: args.seed, restarts: args.restarts.unwrap_or(defaults.restarts), ..defaults };
    let model = fit_from_samples(
        &SampleBlock::from_observations(pred)?,
        &SampleBlock::from_observations(resp)?,
        kind,
        &options,
    )?;
    let stored = StoredModel { model, standardization };

    create_dir(&args.out)?;
    write_file(&args.out.join("model.json"), stored.to_json().as_bytes())?;
    let config = json!({
        "data": file_name(&args.data),
        "kind": kind,
        "split": args.split,
        "seed": args.seed,
        "low_rank": options,
        "standardize": args.standardize,
        "allow_single_unit": args.allow_single_unit,
        "training_units": train.unit_ids(),
    });
    let mut manifest = RunManifest::new("fit", config, Some(args.seed), started);
    manifest.input(&args.data, &bytes);
    manifest.outputs = vec!["model.json".into()];
    manifest.write(&args.out)
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    let model_bytes = read_file(&args.model)?;
    let text = String::from_utf8(model_bytes.clone()).map_err(|_| CliError::input("model JSON is not UTF-8"))?;
    let stored = StoredModel::from_json(&text)?;
    let (ds, bytes) = load_dataset(&args.data)?;
    let units = select_units(&ds, &args.split)?;
    if units.units.is_empty() {
        return Err(CliError::input(format!("--split {} selects no units", args.split)));
    }
    let d1 = stored.model.ref_in().dim();
    let mut rows = Vec::with_capacity(units.units.len());
    for u in &units.units {
        let obs = role_block(u, RoleArg::Predictor)?;
        if obs.ncols() != d1 {
            return Err(CliError::input(format!("model expects {d1}-dimensional predictors, data has {}", obs.ncols())));
        }
        let p = stored.predict_observations(obs)?;
        if p.projected {
            log::info!("unit {}: prediction projected onto the range (eta = {})", u.id, p.eta);
        }
        rows.push(MeasureRow { unit_id: u.id.clone(), projected: Some(p.projected), eta: Some(p.eta), measure: p.measure });
    }
    create_dir(&args.out)?;
    let mut out = Vec::new();
    write_measures(&mut out, &rows)?;
    write_file(&args.out.join("predictions.csv"), &out)?;
    let config = json!({
        "model": file_name(&args.model),
        "data": file_name(&args.data),
        "split": args.split,
        "projected_units": rows.iter().filter(|r| r.projected == Some(true)).count(),
    });
    let mut manifest = RunManifest::new("predict", config, None, started);
    manifest.input(&args.model, &model_bytes);
    manifest.input(&args.data, &bytes);
    manifest.outputs = vec!["predictions.csv".into()];
    manifest.write(&args.out)
}

/// Reads observed Gaussians from a long-format CSV (response rows) or a
/// measure CSV.
fn read_observed(bytes: &[u8]) -> Result<Vec<(String, GaussianMeasure)>, CliError> {
    if bytes.starts_with(b"unit_id,role,") {
        let ds = read_long(bytes)?;
        ds.units
            .iter()
            .filter_map(|u| u.response.as_ref().map(|m| (u.id.clone(), m)))
            .map(|(id, m)| Ok((id, empirical_moments(m)?)))
            .collect()
    } else {
        Ok(read_measures(bytes)?.into_iter().map(|r| (r.unit_id, r.measure)).collect())
    }
}

/// Per-unit Wasserstein discrepancies between matched predictions and
/// observations, in prediction order.
pub fn discrepancies(predicted: &[MeasureRow], observed: &[(String, GaussianMeasure)]) -> Result<Vec<(String, f64)>, CliError> {
    predicted
        .iter()
        .map(|p| {
            let (_, obs) = observed
                .iter()
                .find(|(id, _)| *id == p.unit_id)
                .ok_or_else(|| CliError::input(format!("no observation for predicted unit {:?}", p.unit_id)))?;
            if obs.dim() != p.measure.dim() {
                return Err(CliError::input(format!(
                    "unit {:?}: predicted dimension {} but observed dimension {}",
                    p.unit_id,
                    p.measure.dim(),
                    obs.dim()
                )));
            }
            Ok((p.unit_id.clone(), wasserstein_distance(&p.measure, obs)?))
        })
        .collect()
}

/// Summary table: comment line, header, one row.
pub fn summary_table(values: &[f64]) -> Result<String, CliError> {
    let s = FiveNumber::from_values(values)?;
    Ok(format!(
        "{QUANTILE_NOTE}\nn,min,q25,median,q75,max\n{},{},{},{},{},{}\n",
        values.len(),
        fmt_num(s.min),
        fmt_num(s.q1),
        fmt_num(s.median),
        fmt_num(s.q3),
        fmt_num(s.max)
    ))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    let pred_bytes = read_file(&args.predicted)?;
    let obs_bytes = read_file(&args.observed)?;
    let predicted = read_measures(pred_bytes.as_slice())?;
    if predicted.is_empty() {
        return Err(CliError::input(format!("{} has no predictions", args.predicted.display())));
    }
    let observed = read_observed(&obs_bytes)?;
    let per_unit = discrepancies(&predicted, &observed)?;
    let values: Vec<f64> = per_unit.iter().map(|(_, v)| *v).collect();
    let table = summary_table(&values)?;
    print!("{table}");
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_file(&out.join("summary.csv"), table.as_bytes())?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["unit_id", "wasserstein"])?;
        for (id, v) in &per_unit {
            w.write_record([id.clone(), fmt_num(*v)])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::input(format!("CSV: {e}")))?;
        write_file(&out.join("discrepancies.csv"), &bytes)?;
        let config = json!({ "predicted": file_name(&args.predicted), "observed": file_name(&args.observed) });
        let mut manifest = RunManifest::new("eval", config, None, started);
        manifest.input(&args.predicted, &pred_bytes);
        manifest.input(&args.observed, &obs_bytes);
        manifest.outputs = vec!["summary.csv".into(), "discrepancies.csv".into()];
        manifest.write(out)?;
    }
    Ok(())
}

pub fn barycenter(args: &BarycenterArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    let (ds, bytes) = load_dataset(&args.data)?;
    let units = select_units(&ds, &args.split)?;
    if units.units.is_empty() {
        return Err(CliError::input(format!("--split {} selects no units", args.split)));
    }
    let proxies = units
        .units
        .iter()
        .map(|u| Ok(empirical_moments(role_block(u, args.role)?)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mean = frechet_mean(&proxies, None)?;
    let mut out = Vec::new();
    write_measures(&mut out, &[MeasureRow { unit_id: "barycenter".into(), projected: None, eta: None, measure: mean }])?;
    match &args.out {
        None => print!("{}", String::from_utf8(out).expect("CSV output is UTF-8")),
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("barycenter.csv"), &out)?;
            let role = match args.role {
                RoleArg::Predictor => "predictor",
                RoleArg::Response => "response",
            };
            let config = json!({ "data": file_name(&args.data), "role": role, "split": args.split });
            let mut manifest = RunManifest::new("barycenter", config, None, started);
            manifest.input(&args.data, &bytes);
            manifest.outputs = vec!["barycenter.csv".into()];
            manifest.write(dir)?;
        }
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let started = now_rfc3339();
    for (name, v) in [("--units", args.units), ("--draws", args.draws), ("--dim", args.dim)] {
        if v == 0 {
            return Err(CliError::input(format!("{name} must be positive")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    // Gaussian draws only; the mixing stream stays unused
    let mut mixing = ChaCha8Rng::seed_from_u64(args.seed);
    let b0 = generating_tensor(args.dim);
    let mut units = Vec::with_capacity(args.units);
    let mut truths = Vec::with_capacity(args.units);
    for k in 0..args.units {
        let id = (args.first_year + k as i64).to_string();
        let pair = generate_mixture_pair(&mut rng, args.dim, b0.tensor())?;
        let predictor = draw_samples(&mut rng, &mut mixing, &pair.predictor, args.draws, None)?;
        let response = draw_samples(&mut rng, &mut mixing, &pair.response, args.draws, None)?;
        units.push(Unit { id: id.clone(), predictor: Some(predictor), response: Some(response) });
        truths.push(MeasureRow { unit_id: id, projected: None, eta: None, measure: pair.response });
    }
    create_dir(&args.out)?;
    let mut data = Vec::new();
    write_long(&mut data, &units)?;
    write_file(&args.out.join("data.csv"), &data)?;
    let mut truth = Vec::new();
    write_measures(&mut truth, &truths)?;
    write_file(&args.out.join("responses.csv"), &truth)?;
    let config = json!({
        "units": args.units,
        "draws": args.draws,
        "dim": args.dim,
        "first_year": args.first_year,
        "seed": args.seed,
    });
    let mut manifest = RunManifest::new("synth", config, Some(args.seed), started);
    manifest.outputs = vec!["data.csv".into(), "responses.csv".into()];
    manifest.write(&args.out)
}
