//! Rank-K coefficient tensors fitted by block relaxation.
//!
//! A rank-K tensor `𝔸 = Σₖ a1ₖ ∘ a2ₖ ∘ a3ₖ ∘ a4ₖ` contracts an input `X` to
//! `Σₖ (a1ₖᵀ X a2ₖ) a3ₖ a4ₖᵀ`; the model uses its symmetrization
//! `(𝔸 + 𝔸*)/2`. The least squares objective is quadratic in each factor
//! matrix separately, so each factor is updated in turn by an exact weighted
//! least squares solve with the other three held fixed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwrError, Result};
use crate::geometry::{ReferenceMeasure, XiElement};
use crate::matrix::SymMatrix;

use super::tensor::CoefficientTensor;
use super::vech::{gram_matrix, vech_len, vech_positions, xi_to_vech};

/// Relative eigenvalue cutoff of the block pseudo-inverse.
const BLOCK_RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub a4: DMatrix<f64>,
}

impl LowRankFactors {
    pub fn new(a1: DMatrix<f64>, a2: DMatrix<f64>, a3: DMatrix<f64>, a4: DMatrix<f64>) -> Result<Self> {
        let k = a1.ncols();
        if k == 0 {
            return Err(GwrError::InvalidConfig("rank must be at least 1".into()));
        }
        let d1 = a1.nrows();
        let d2 = a3.nrows();
        for (m, rows) in [(&a2, d1 + 1), (&a3, d2), (&a4, d2 + 1)] {
            if m.ncols() != k {
                return Err(GwrError::LengthMismatch { expected: k, found: m.ncols() });
            }
            if m.nrows() != rows {
                return Err(GwrError::DimensionMismatch { expected: rows, found: m.nrows() });
            }
        }
        Ok(LowRankFactors { a1, a2, a3, a4 })
    }

    pub fn rank(&self) -> usize {
        self.a1.ncols()
    }

    pub fn d1(&self) -> usize {
        self.a1.nrows()
    }

    pub fn d2(&self) -> usize {
        self.a3.nrows()
    }

    /// `⟦A1, A2, A3, A4⟧` without symmetrization.
    pub fn raw_tensor(&self) -> CoefficientTensor {
        let (d1, d2) = (self.d1(), self.d2());
        let mut t = CoefficientTensor::zeros(d1, d2);
        for k in 0..self.rank() {
            for p in 0..d1 {
                for q in 0..=d1 {
                    let w = self.a1[(p, k)] * self.a2[(q, k)];
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..d2 {
                        for s in 0..=d2 {
                            let v = t.get(p, q, r, s) + w * self.a3[(r, k)] * self.a4[(s, k)];
                            t.set(p, q, r, s, v);
                        }
                    }
                }
            }
        }
        t
    }

    /// `(𝔸 + 𝔸*)/2`.
    pub fn materialize(&self) -> CoefficientTensor {
        self.raw_tensor().symmetrized()
    }

    /// Fixes the scaling and permutation indeterminacy without changing
    /// [`Self::materialize`]: the leading nonzero entry of each column of
    /// `A1`, `A2` and `A3` becomes 1 with the scale moved into `A4`, then
    /// columns are sorted by the last row of `A4` in descending order, ties
    /// broken lexicographically on the stacked column.
    pub fn canonicalize(&self) -> LowRankFactors {
        let mut f = self.clone();
        for k in 0..f.rank() {
            let mut scale = 1.0;
            for m in [&mut f.a1, &mut f.a2, &mut f.a3] {
                if let Some(lead) = m.column(k).iter().copied().find(|v| *v != 0.0) {
                    m.column_mut(k).unscale_mut(lead);
                    scale *= lead;
                }
            }
            f.a4.column_mut(k).scale_mut(scale);
        }
        let last = f.a4.nrows() - 1;
        let stacked = |k: usize| -> Vec<f64> {
            let mut v = vec![f.a4[(last, k)]];
            for m in [&f.a1, &f.a2, &f.a3, &f.a4] {
                v.extend(m.column(k).iter());
            }
            v
        };
        let mut order: Vec<usize> = (0..f.rank()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (stacked(i), stacked(j));
            for (x, y) in a.iter().zip(&b) {
                match y.total_cmp(x) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            std::cmp::Ordering::Equal
        });
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, order[c])]);
        LowRankFactors { a1: pick(&f.a1), a2: pick(&f.a2), a3: pick(&f.a3), a4: pick(&f.a4) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankOptions {
    pub restarts: usize,
    /// Maximum number of sweeps over the four blocks.
    pub max_iters: usize,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub tol: f64,
    pub init_interval: (f64, f64),
    pub seed: u64,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        LowRankOptions { restarts: 5, max_iters: 100, tol: 1e-8, init_interval: (-1.0, 1.0), seed: 0 }
    }
}

impl LowRankOptions {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(GwrError::InvalidConfig("restarts and max_iters must be positive".into()));
        }
        let (lo, hi) = self.init_interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GwrError::InvalidConfig(format!("invalid initialization interval [{lo}, {hi}]")));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(GwrError::InvalidConfig(format!("invalid tolerance {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFit {
    /// Canonicalized factors of the best restart.
    pub factors: LowRankFactors,
    pub objective: f64,
    /// Sweeps used by the best restart.
    pub iterations: usize,
    pub best_restart: usize,
    /// Per restart: the initial objective followed by the value after every
    /// block update.
    pub traces: Vec<Vec<f64>>,
    /// Block solves whose normal equations were rank deficient, over all
    /// restarts.
    pub singular_blocks: usize,
}

/// Data in whitened output coordinates, `ỹ = Lᵀ vech*(Y)` with `G = LLᵀ`.
struct Problem {
    x: Vec<DMatrix<f64>>,
    y: DMatrix<f64>,
    lt: DMatrix<f64>,
    d1: usize,
    d2: usize,
}

/// `vech*` coordinates of the symmetrized output `(C + C*)/2`.
fn symvech(c: &DMatrix<f64>) -> DVector<f64> {
    let d = c.nrows();
    DVector::from_iterator(
        vech_len(d),
        vech_positions(d).into_iter().map(|(r, s)| if s == 0 { c[(r, 0)] } else { 0.5 * (c[(r, s)] + c[(s - 1, r + 1)]) }),
    )
}

impl Problem {
    fn scores(&self, f: &LowRankFactors) -> DMatrix<f64> {
        DMatrix::from_fn(self.x.len(), f.rank(), |i, k| (f.a1.column(k).transpose() * &self.x[i] * f.a2.column(k))[(0, 0)])
    }

    /// Rows `Lᵀ symvech(a3ₖ a4ₖᵀ)`.
    fn output_directions(&self, f: &LowRankFactors) -> DMatrix<f64> {
        let q = vech_len(self.d2);
        let mut w = DMatrix::zeros(f.rank(), q);
        for k in 0..f.rank() {
            let c = f.a3.column(k) * f.a4.column(k).transpose();
            w.set_row(k, &(&self.lt * symvech(&c)).transpose());
        }
        w
    }

    fn objective(&self, f: &LowRankFactors) -> f64 {
        let resid = &self.y - self.scores(f) * self.output_directions(f);
        resid.norm_squared()
    }

    /// Minimizes `Σᵢ ‖ỹᵢ − Σⱼ θⱼ αᵢⱼ βⱼ‖²` over `θ`. Returns the minimum-norm
    /// solution and whether the normal equations were rank deficient.
    fn solve_block(&self, alpha: &DMatrix<f64>, beta: &DMatrix<f64>) -> (DVector<f64>, bool) {
        let gram = (alpha.transpose() * alpha).component_mul(&(beta * beta.transpose()));
        let rhs = DVector::from_iterator(
            beta.nrows(),
            (alpha.transpose() * &self.y).component_mul(beta).row_iter().map(|row| row.sum()),
        );
        let eig = gram.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
        let cutoff = lmax * BLOCK_RANK_CUTOFF;
        let mut singular = lmax <= 0.0;
        let proj = eig.eigenvectors.transpose() * rhs;
        let mut scaled = DVector::zeros(proj.len());
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > cutoff && lam > 0.0 {
                scaled[j] = proj[j] / lam;
            } else {
                singular = true;
            }
        }
        (&eig.eigenvectors * scaled, singular)
    }

    /// Exact update of block `b` (0-based); `θ` is indexed `k · rows + row`.
    fn update_block(&self, f: &LowRankFactors, b: usize) -> (LowRankFactors, bool) {
        let n = self.x.len();
        let k_rank = f.rank();
        let q = vech_len(self.d2);
        let rows = match b {
            0 => self.d1,
            1 => self.d1 + 1,
            2 => self.d2,
            _ => self.d2 + 1,
        };
        let m = k_rank * rows;
        let mut alpha = DMatrix::zeros(n, m);
        let mut beta = DMatrix::zeros(m, q);
        match b {
            0 | 1 => {
                let w = self.output_directions(f);
                for k in 0..k_rank {
                    for i in 0..n {
                        let v = if b == 0 { &self.x[i] * f.a2.column(k) } else { self.x[i].transpose() * f.a1.column(k) };
                        alpha.view_mut((i, k * rows), (1, rows)).copy_from(&v.transpose());
                    }
                    for j in 0..rows {
                        beta.set_row(k * rows + j, &w.row(k));
                    }
                }
            }
            _ => {
                let scores = self.scores(f);
                for k in 0..k_rank {
                    for j in 0..rows {
                        alpha.set_column(k * rows + j, &scores.column(k));
                        let c = if b == 2 {
                            let mut e = DVector::zeros(self.d2);
                            e[j] = 1.0;
                            e * f.a4.column(k).transpose()
                        } else {
                            let mut e = DVector::zeros(self.d2 + 1);
                            e[j] = 1.0;
                            f.a3.column(k) * e.transpose()
                        };
                        beta.set_row(k * rows + j, &(&self.lt * symvech(&c)).transpose());
                    }
                }
            }
        }
        let (theta, singular) = self.solve_block(&alpha, &beta);
        let block = DMatrix::from_column_slice(rows, k_rank, theta.as_slice());
        let mut out = f.clone();
        match b {
            0 => out.a1 = block,
            1 => out.a2 = block,
            2 => out.a3 = block,
            _ => out.a4 = block,
        }
        (out, singular)
    }

    fn random_factors(&self, k: usize, rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> LowRankFactors {
        let mut draw = |r: usize| DMatrix::from_fn(r, k, |_, _| rng.random_range(lo..=hi));
        let a1 = draw(self.d1);
        let a2 = draw(self.d1 + 1);
        let a3 = draw(self.d2);
        let a4 = draw(self.d2 + 1);
        LowRankFactors { a1, a2, a3, a4 }
    }
}

struct RestartResult {
    factors: LowRankFactors,
    objective: f64,
    iterations: usize,
    trace: Vec<f64>,
    singular_blocks: usize,
}

fn run_restart(problem: &Problem, k: usize, options: &LowRankOptions, restart: usize) -> RestartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(restart as u64);
    let mut factors = problem.random_factors(k, &mut rng, options.init_interval);
    let mut current = problem.objective(&factors);
    let floor = problem.y.norm_squared() * f64::EPSILON * f64::EPSILON;
    let mut trace = vec![current];
    let mut singular_blocks = 0;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let start = current;
        for b in 0..4 {
            let (candidate, singular) = problem.update_block(&factors, b);
            singular_blocks += usize::from(singular);
            let value = problem.objective(&candidate);
            // rounding in an exact block solve can only lose accuracy; keep
            // the previous block when it does
            if value <= current {
                factors = candidate;
                current = value;
            }
            trace.push(current);
        }
        if current <= floor || start - current < options.tol * start {
            break;
        }
    }
    RestartResult { factors, objective: current, iterations, trace, singular_blocks }
}

/// Rank-K least squares fit of `Y ≈ ⟨X, (𝔸 + 𝔸*)/2⟩₂` in the norm of
/// `ref_out`, keeping the best of several random initializations.
pub fn fit_low_rank(
    x: &[XiElement],
    y: &[XiElement],
    ref_out: &ReferenceMeasure,
    rank: usize,
    options: &LowRankOptions,
) -> Result<LowRankFit> {
    if x.is_empty() || y.is_empty() {
        return Err(GwrError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(GwrError::LengthMismatch { expected: x.len(), found: y.len() });
    }
    if rank == 0 {
        return Err(GwrError::InvalidConfig("rank must be at least 1".into()));
    }
    options.validate()?;
    let d1 = x[0].dim();
    let d2 = ref_out.dim();
    if let Some(bad) = x.iter().find(|xi| xi.dim() != d1) {
        return Err(GwrError::DimensionMismatch { expected: d1, found: bad.dim() });
    }
    if let Some(bad) = y.iter().find(|yi| yi.dim() != d2) {
        return Err(GwrError::DimensionMismatch { expected: d2, found: bad.dim() });
    }
    let gram = gram_matrix(ref_out);
    let chol = SymMatrix::new(gram)
        .into_inner()
        .cholesky()
        .ok_or_else(|| GwrError::DegenerateReference("output norm is not positive definite".into()))?;
    let lt = chol.l().transpose();
    let q = vech_len(d2);
    let mut ys = DMatrix::zeros(y.len(), q);
    for (i, yi) in y.iter().enumerate() {
        ys.set_row(i, &(&lt * xi_to_vech(yi)).transpose());
    }
    let problem = Problem { x: x.iter().map(XiElement::to_layout).collect(), y: ys, lt, d1, d2 };

    let results: Vec<RestartResult> =
        (0..options.restarts).into_par_iter().map(|r| run_restart(&problem, rank, options, r)).collect();
    let best = results
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.objective.total_cmp(&b.objective))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let singular_blocks = results.iter().map(|r| r.singular_blocks).sum();
    let winner = &results[best];
    Ok(LowRankFit {
        factors: winner.factors.canonicalize(),
        objective: winner.objective,
        iterations: winner.iterations,
        best_restart: best,
        traces: results.iter().map(|r| r.trace.clone()).collect(),
        singular_blocks,
    })
}
