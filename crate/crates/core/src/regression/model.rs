//! Fitted Gaussian-to-Gaussian regression maps and their prediction rule.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};
use crate::geometry::{exp_map, frechet_mean, in_range, log_map, GaussianMeasure, ReferenceMeasure, XiElement};
use crate::matrix::min_eigenvalue;

use super::basic::{fit_basic, objective};
use super::low_rank::{fit_low_rank, LowRankFactors, LowRankOptions};
use super::tensor::CoefficientTensor;

/// Version of the JSON model document.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Index order of the flattened tensor in the JSON document.
pub const TENSOR_INDEX_ORDER: &str = "row-major [p][q][r][s], 0-based, shape d1 x (d1+1) x d2 x (d2+1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Basic,
    #[serde(rename = "lowrank")]
    LowRank { rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Block relaxation sweeps of the winning restart; 0 for the basic model.
    pub iterations: usize,
    /// In-sample least squares objective.
    pub objective: f64,
    pub restarts: usize,
    pub singular_blocks: usize,
    /// Training units whose fitted value needed boundary projection.
    pub boundary_projections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub measure: GaussianMeasure,
    pub projected: bool,
    /// Shrinkage applied to the linear prediction, 1 when not projected.
    pub eta: f64,
}

/// A fitted regression map `ν₁ ↦ exp(⟨log ν₁, 𝔹⟩₂)` between the stored
/// input and output references.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    kind: ModelKind,
    tensor: CoefficientTensor,
    factors: Option<LowRankFactors>,
    ref_in: ReferenceMeasure,
    ref_out: ReferenceMeasure,
    diagnostics: FitDiagnostics,
}

/// Shrinks `u` towards zero until `V + I` is PSD: `η = min(1, 1/|λ_min(V)|)`.
pub fn boundary_projection(u: &XiElement) -> (XiElement, f64) {
    if in_range(u) {
        return (u.clone(), 1.0);
    }
    let lmin = min_eigenvalue(&u.v);
    let eta = (-1.0 / lmin).min(1.0);
    (u.scale(eta), eta)
}

impl FittedModel {
    pub fn new(
        kind: ModelKind,
        tensor: CoefficientTensor,
        factors: Option<LowRankFactors>,
        ref_in: ReferenceMeasure,
        ref_out: ReferenceMeasure,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        if tensor.d1() != ref_in.dim() {
            return Err(GwrError::DimensionMismatch { expected: tensor.d1(), found: ref_in.dim() });
        }
        if tensor.d2() != ref_out.dim() {
            return Err(GwrError::DimensionMismatch { expected: tensor.d2(), found: ref_out.dim() });
        }
        Ok(FittedModel { kind, tensor, factors, ref_in, ref_out, diagnostics })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn tensor(&self) -> &CoefficientTensor {
        &self.tensor
    }

    pub fn factors(&self) -> Option<&LowRankFactors> {
        self.factors.as_ref()
    }

    pub fn ref_in(&self) -> &ReferenceMeasure {
        &self.ref_in
    }

    pub fn ref_out(&self) -> &ReferenceMeasure {
        &self.ref_out
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// The linear prediction `⟨log ν₁, 𝔹⟩₂` before any projection.
    pub fn predict_linear(&self, nu1: &GaussianMeasure) -> Result<XiElement> {
        if nu1.dim() != self.ref_in.dim() {
            return Err(GwrError::DimensionMismatch { expected: self.ref_in.dim(), found: nu1.dim() });
        }
        self.tensor.contract(&log_map(nu1, &self.ref_in)?)
    }

    pub fn predict(&self, nu1: &GaussianMeasure) -> Result<Prediction> {
        let u = self.predict_linear(nu1)?;
        let (u, eta) = boundary_projection(&u);
        Ok(Prediction { measure: exp_map(&u, &self.ref_out)?, projected: eta < 1.0, eta })
    }

    pub fn to_document(&self) -> ModelDocument {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self.kind,
            d1: self.tensor.d1(),
            d2: self.tensor.d2(),
            shape: self.tensor.shape(),
            index_order: TENSOR_INDEX_ORDER.to_string(),
            tensor: self.tensor.entries().to_vec(),
            factors: self.factors.as_ref().map(|f| FactorDocument { a1: rows(&f.a1), a2: rows(&f.a2), a3: rows(&f.a3), a4: rows(&f.a4) }),
            ref_in: self.ref_in.measure().clone(),
            ref_out: self.ref_out.measure().clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(GwrError::InvalidConfig(format!("unsupported model schema_version {}", doc.schema_version)));
        }
        if doc.shape != [doc.d1, doc.d1 + 1, doc.d2, doc.d2 + 1] {
            return Err(GwrError::InvalidConfig(format!("shape {:?} does not match d1={} d2={}", doc.shape, doc.d1, doc.d2)));
        }
        if doc.index_order != TENSOR_INDEX_ORDER {
            return Err(GwrError::InvalidConfig(format!("unsupported index_order {:?}", doc.index_order)));
        }
        let tensor = CoefficientTensor::from_entries(doc.d1, doc.d2, doc.tensor)?;
        let matrix = |rows: Vec<Vec<f64>>, nrows: usize, ncols: usize| -> Result<DMatrix<f64>> {
            if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
                return Err(GwrError::InvalidConfig("factor matrix has the wrong shape".into()));
            }
            Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
        };
        let factors = match (doc.model, doc.factors) {
            (ModelKind::LowRank { rank }, Some(f)) => Some(LowRankFactors::new(
                matrix(f.a1, doc.d1, rank)?,
                matrix(f.a2, doc.d1 + 1, rank)?,
                matrix(f.a3, doc.d2, rank)?,
                matrix(f.a4, doc.d2 + 1, rank)?,
            )?),
            (ModelKind::Basic, Some(_)) => {
                return Err(GwrError::InvalidConfig("basic model cannot carry low-rank factors".into()))
            }
            (_, None) => None,
        };
        let ref_in = ReferenceMeasure::new(doc.ref_in)?;
        let ref_out = ReferenceMeasure::new(doc.ref_out)?;
        FittedModel::new(doc.model, tensor, factors, ref_in, ref_out, doc.diagnostics)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| GwrError::InvalidConfig(format!("model JSON: {e}")))?;
        Self::from_document(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDocument {
    pub a1: Vec<Vec<f64>>,
    pub a2: Vec<Vec<f64>>,
    pub a3: Vec<Vec<f64>>,
    pub a4: Vec<Vec<f64>>,
}

/// Serialized form of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub model: ModelKind,
    pub d1: usize,
    pub d2: usize,
    pub shape: [usize; 4],
    pub index_order: String,
    pub tensor: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<FactorDocument>,
    pub ref_in: GaussianMeasure,
    pub ref_out: GaussianMeasure,
    pub diagnostics: FitDiagnostics,
}

/// Fits with the given references, which need not be the Fréchet means of
/// the data.
pub fn fit_with_references(
    pred: &[GaussianMeasure],
    resp: &[GaussianMeasure],
    ref_in: ReferenceMeasure,
    ref_out: ReferenceMeasure,
    kind: ModelKind,
    options: &LowRankOptions,
) -> Result<FittedModel> {
    if pred.is_empty() || resp.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    if pred.len() != resp.len() {
        return Err(GwrError::LengthMismatch { expected: pred.len(), found: resp.len() });
    }
    let x = pred.iter().map(|m| log_map(m, &ref_in)).collect::<Result<Vec<_>>>()?;
    let y = resp.iter().map(|m| log_map(m, &ref_out)).collect::<Result<Vec<_>>>()?;
    let (tensor, factors, mut diagnostics) = match kind {
        ModelKind::Basic => {
            let b = fit_basic(&x, &y, &ref_out)?.into_tensor();
            let obj = objective(&x, &y, &b, &ref_out)?;
            let diag = FitDiagnostics { iterations: 0, objective: obj, restarts: 0, singular_blocks: 0, boundary_projections: 0 };
            (b, None, diag)
        }
        ModelKind::LowRank { rank } => {
            let fit = fit_low_rank(&x, &y, &ref_out, rank, options)?;
            let diag = FitDiagnostics {
                iterations: fit.iterations,
                objective: fit.objective,
                restarts: options.restarts,
                singular_blocks: fit.singular_blocks,
                boundary_projections: 0,
            };
            (fit.factors.materialize(), Some(fit.factors), diag)
        }
    };
    let mut projections = 0;
    for xi in &x {
        if !in_range(&tensor.contract(xi)?) {
            projections += 1;
        }
    }
    diagnostics.boundary_projections = projections;
    FittedModel::new(kind, tensor, factors, ref_in, ref_out, diagnostics)
}

/// Estimates both references as empirical Fréchet means, then fits.
pub fn fit_from_measures(
    pred: &[GaussianMeasure],
    resp: &[GaussianMeasure],
    kind: ModelKind,
    options: &LowRankOptions,
) -> Result<FittedModel> {
    if pred.is_empty() || resp.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    let reference = |ms: &[GaussianMeasure], role: &str| -> Result<ReferenceMeasure> {
        let mean = frechet_mean(ms, None).map_err(|e| match e {
            GwrError::DegenerateInput(msg) => GwrError::DegenerateReference(format!("{role} Fréchet mean: {msg}")),
            other => other,
        })?;
        ReferenceMeasure::new(mean).map_err(|e| GwrError::DegenerateReference(format!("{role} Fréchet mean: {e}")))
    };
    let ref_in = reference(pred, "predictor")?;
    let ref_out = reference(resp, "response")?;
    fit_with_references(pred, resp, ref_in, ref_out, kind, options)
}
