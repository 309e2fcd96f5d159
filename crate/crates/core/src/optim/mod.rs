//! The optimizer family: R-SPIDER with analysis-prescribed schedules, the
//! decaying-rate practical variant R-SPIDER-A, the multi-stage
//! gradient-dominated variant R-GD-SPIDER, and the baselines R-SGD, R-SVRG,
//! R-SRG / R-SRG+.
//!
//! Each run is single-threaded and deterministic given (problem, x0, config,
//! seed); a harness may execute many runs concurrently since runs share only
//! immutable problem data.

mod baselines;
mod gd_spider;
mod rspider;

pub use baselines::{
    run_rsgd, run_rsrg, run_rsvrg, RsgdParams, RsrgParams, RsrgRate, RsvrgParams,
    BASELINE_RATE_GRID,
};
pub use gd_spider::{run_rgd_spider, RGdSpiderConfig, StageMark};
pub use rspider::{
    analysis_iteration_cap, run_rspider, run_rspider_a, run_rspider_traced, RSpiderAParams,
    RSpiderConfig, RSpiderPlan, RSPIDER_A_ALPHA_GRID, RSPIDER_A_BETA_GRID,
};

use std::time::Instant;

use crate::error::OptimError;
use crate::manifold::ManifoldPoint;
use crate::problems::{estimate_smoothness, full_grad, full_loss, Problem, SmoothnessEstimates};

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// ‖v_k‖ fell to or below the accuracy threshold.
    GradBelowThreshold,
    /// Iteration or IFO budget exhausted.
    MaxIters,
    /// All stages of a multi-stage run completed.
    StageComplete,
}

/// One trace row: the state of the run after the k-th gradient-estimate
/// update, before the step it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    /// Cumulative incremental-first-order-oracle charge.
    pub ifo: u64,
    pub objective: f64,
    pub grad_estimate_norm: f64,
    /// Exact ‖∇f(x_k)‖; recorded only when requested (small problems).
    pub true_grad_norm: Option<f64>,
    /// Wall clock since run start; excluded from determinism guarantees.
    pub elapsed_s: f64,
}

/// Full account of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub terminal_point: ManifoldPoint,
    pub termination: Termination,
    /// Stage boundaries (multi-stage runs only).
    pub stages: Vec<StageMark>,
}

impl RunTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn total_ifo(&self) -> u64 {
        self.records.last().map(|r| r.ifo).unwrap_or(0)
    }
}

/// A mid-run failure together with the rows recorded before it, so a harness
/// can flush the partial trace.
#[derive(Debug)]
pub struct RunError {
    pub error: OptimError,
    pub partial_records: Vec<TraceRecord>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} records recorded)",
            self.error,
            self.partial_records.len()
        )
    }
}

impl std::error::Error for RunError {}

impl From<OptimError> for RunError {
    fn from(error: OptimError) -> Self {
        RunError {
            error,
            partial_records: Vec::new(),
        }
    }
}

/// How an optimizer obtains a smoothness constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothnessSpec {
    Known(f64),
    /// Estimate empirically from seeded probes at run start.
    Estimate,
}

pub(crate) const SMOOTHNESS_SALT: u64 = 0x5eed_ca11;

/// Resolves (L, σ), estimating whichever constants were not supplied.
/// The estimation seed is derived from the run seed, so runs stay
/// deterministic end to end.
pub fn resolve_smoothness(
    problem: &dyn Problem,
    l: SmoothnessSpec,
    sigma: SmoothnessSpec,
    probes: usize,
    seed: u64,
) -> Result<(f64, f64), OptimError> {
    let estimated: Option<SmoothnessEstimates> =
        if l == SmoothnessSpec::Estimate || sigma == SmoothnessSpec::Estimate {
            Some(estimate_smoothness(
                problem,
                probes,
                seed ^ SMOOTHNESS_SALT,
            )?)
        } else {
            None
        };
    let l = match l {
        SmoothnessSpec::Known(v) => v,
        SmoothnessSpec::Estimate => estimated.as_ref().unwrap().l_hat,
    };
    let sigma = match sigma {
        SmoothnessSpec::Known(v) => v,
        SmoothnessSpec::Estimate => estimated.as_ref().unwrap().sigma_hat,
    };
    if !(l.is_finite() && l > 0.0) {
        return Err(OptimError::InvalidConfig(format!("non-positive L = {l}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(OptimError::InvalidConfig(format!(
            "invalid sigma = {sigma}"
        )));
    }
    Ok((l, sigma))
}

/// Trace accumulator used by every run loop.
pub(crate) struct Recorder {
    records: Vec<TraceRecord>,
    start: Instant,
    record_true_grad: bool,
}

impl Recorder {
    pub(crate) fn new(record_true_grad: bool) -> Self {
        Recorder {
            records: Vec::new(),
            start: Instant::now(),
            record_true_grad,
        }
    }

    /// Evaluates the objective at `x`, appends a row, and returns the
    /// objective. Non-finite objectives abort the run.
    pub(crate) fn observe(
        &mut self,
        problem: &dyn Problem,
        iteration: u64,
        ifo: u64,
        x: &ManifoldPoint,
        grad_estimate_norm: f64,
    ) -> Result<f64, OptimError> {
        let objective = full_loss(problem, x)?;
        if !objective.is_finite() {
            return Err(OptimError::NonFiniteObjective {
                iteration,
                value: objective,
            });
        }
        let true_grad_norm = if self.record_true_grad {
            Some(full_grad(problem, x)?.norm())
        } else {
            None
        };
        self.records.push(TraceRecord {
            iteration,
            ifo,
            objective,
            grad_estimate_norm,
            true_grad_norm,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
        Ok(objective)
    }

    pub(crate) fn take_records(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.records)
    }

    pub(crate) fn finish(
        mut self,
        terminal_point: ManifoldPoint,
        termination: Termination,
        stages: Vec<StageMark>,
    ) -> RunTrace {
        RunTrace {
            records: self.take_records(),
            terminal_point,
            termination,
            stages,
        }
    }
}

/// Δ = f(x₀) − f* when the optimum (or a lower bound) is known.
pub(crate) fn initial_gap(problem: &dyn Problem, f0: f64) -> Option<f64> {
    problem.objective_lower_bound().map(|lb| (f0 - lb).max(0.0))
}
