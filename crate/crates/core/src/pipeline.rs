//! One reproducible run from an order book to sampled outcomes: clear,
//! certify, follow θ to zero, decompose the limit prices, fit the
//! max-entropy model and draw from it.

use crate::clearing::{
    certify, clear_barrier, clear_lp, lp_dual_objective, trace_homotopy, CertificationReport,
    ClearingResult, HomotopyTrace,
};
use crate::combinatorics::{bvn_decompose, BvnDecomposition};
use crate::maxent::{fit_ellipsoid, fit_exact, ml_check, sample, MaxEntModel};
use crate::parallel::Parallelism;
use crate::{Error, MarketInstance, Result, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

/// Largest `n` for which the max-entropy and sampling stages run.
pub const MAXENT_STAGE_MAX_N: usize = 6;

/// Tolerance handed to the decomposition of the limit prices.
const BVN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxEntMode {
    #[default]
    Exact,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub maxent_mode: MaxEntMode,
    pub epsilon: f64,
    pub samples: usize,
    pub parallelism: Parallelism,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            maxent_mode: MaxEntMode::Exact,
            epsilon: 0.1,
            samples: 20,
            parallelism: Parallelism::Parallel,
        }
    }
}

/// A stage that either produced a result or was skipped on purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "result", rename_all = "snake_case")]
pub enum Stage<T> {
    Done(T),
    Skipped { reason: String },
}

impl<T> Stage<T> {
    pub fn done(&self) -> Option<&T> {
        match self {
            Stage::Done(t) => Some(t),
            Stage::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyStage {
    pub trace: HomotopyTrace,
    pub tail_decreasing: bool,
    pub lp_objective: f64,
    /// LP dual objective evaluated at the limit prices.
    pub limit_dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStage {
    pub decomposition: BvnDecomposition,
    pub reconstruction_residual: f64,
    pub term_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntStage {
    pub model: MaxEntModel,
    pub entropy: f64,
    pub ml_residual: f64,
    pub decomposition_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub n: usize,
    pub clearing: ClearingResult,
    pub certification: CertificationReport,
    pub homotopy: HomotopyStage,
    pub decomposition: DecompositionStage,
    pub maxent: Stage<MaxEntStage>,
    /// One-based rankings.
    pub samples: Stage<Vec<Vec<usize>>>,
    pub passed: bool,
}

/// Runs every stage; the first hard failure aborts with the stage name.
pub fn end_to_end(instance: &MarketInstance, config: &PipelineConfig) -> Result<PipelineReport> {
    let n = instance.n();
    let clearing = clear_barrier(instance).map_err(|e| e.in_stage("clear"))?;
    let certification = certify(instance, &clearing).map_err(|e| e.in_stage("certify"))?;

    let schedule = instance.tolerances.homotopy_schedule.clone();
    let trace = trace_homotopy(instance, &schedule, config.parallelism)
        .map_err(|e| e.in_stage("limit_prices"))?;
    let lp = clear_lp(instance).map_err(|e| e.in_stage("limit_prices"))?;
    let limit = trace.limit().clone();
    let homotopy = HomotopyStage {
        tail_decreasing: trace.tail_decreasing(3),
        lp_objective: lp.objective_primal,
        limit_dual_objective: lp_dual_objective(instance, &limit),
        trace,
    };

    let bvn = bvn_decompose(limit.matrix(), BVN_TOL).map_err(|e| e.in_stage("decompose"))?;
    let decomposition = DecompositionStage {
        reconstruction_residual: (bvn.reconstruct(n) - limit.matrix()).amax(),
        term_bound: n * n - 2 * n + 2,
        decomposition: bvn,
    };

    let (maxent, samples) = if n > MAXENT_STAGE_MAX_N {
        let reason = format!("n = {n} exceeds the max-entropy stage limit {MAXENT_STAGE_MAX_N}");
        (
            Stage::Skipped {
                reason: reason.clone(),
            },
            Stage::Skipped { reason },
        )
    } else {
        let model = match config.maxent_mode {
            MaxEntMode::Exact => fit_exact(&limit),
            MaxEntMode::Ellipsoid => fit_ellipsoid(&limit, config.epsilon),
        }
        .map_err(|e| e.in_stage("maxent"))?
        .canonicalized();
        let draws = sample(&model, config.samples, config.seed).map_err(|e| e.in_stage("sample"))?;
        let stage = MaxEntStage {
            entropy: model.entropy().map_err(|e| e.in_stage("maxent"))?,
            ml_residual: ml_check(&model, &limit).map_err(|e| e.in_stage("maxent"))?,
            decomposition_entropy: decomposition.decomposition.entropy(),
            model,
        };
        (
            Stage::Done(stage),
            Stage::Done(draws.iter().map(|d| d.one_based()).collect()),
        )
    };

    let tol = instance.tolerances.certification;
    let passed = certification.passed
        && homotopy.tail_decreasing
        && (homotopy.limit_dual_objective - homotopy.lp_objective).abs() <= 1e-5
        && decomposition.reconstruction_residual <= BVN_TOL
        && decomposition.decomposition.terms.len() <= decomposition.term_bound
        && match (&maxent, config.maxent_mode) {
            (Stage::Done(m), MaxEntMode::Exact) => m.ml_residual <= tol,
            (Stage::Done(m), MaxEntMode::Ellipsoid) => m.model.fit.marginal_residual.is_finite(),
            (Stage::Skipped { .. }, _) => true,
        };
    Ok(PipelineReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        config: config.clone(),
        n,
        clearing,
        certification,
        homotopy,
        decomposition,
        maxent,
        samples,
        passed,
    })
}

impl PipelineReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Malformed(e.to_string()))
    }
}
