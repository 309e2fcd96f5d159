//! R-SPIDER: normalized Riemannian descent driven by the SPIDER estimate,
//! with the batch/step schedules the convergence analysis prescribes, plus
//! the decaying-rate practical variant R-SPIDER-A.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::OptimError;
use crate::manifold::ManifoldPoint;
use crate::optim::{
    initial_gap, resolve_smoothness, Recorder, RunError, RunTrace, SmoothnessSpec, Termination,
};
use crate::problems::{full_loss, Problem};
use crate::spider::{SamplingMode, SpiderSchedule, SpiderState};

/// Learning-rate grid the decaying-rate variant is tuned over.
pub const RSPIDER_A_ALPHA_GRID: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 0.99];
pub const RSPIDER_A_BETA_GRID: [f64; 4] = [5e-2, 1e-2, 5e-3, 1e-3];

#[derive(Debug, Clone)]
pub struct RSpiderConfig {
    /// Target accuracy ε for E‖∇f‖.
    pub epsilon: f64,
    pub l: SmoothnessSpec,
    pub sigma: SmoothnessSpec,
    /// Batch/step trade-off parameter n₀, clamped into the admissible
    /// interval of the active mode with a warning.
    pub n0: f64,
    pub mode: SamplingMode,
    /// Hard iteration cap; defaults to the analysis cap ⌈14·L·n₀·Δ/ε²⌉.
    pub max_iters: Option<u64>,
    pub seed: u64,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
    /// Probe pairs for smoothness estimation when a constant is `Estimate`.
    pub smoothness_probes: usize,
}

impl RSpiderConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        RSpiderConfig {
            epsilon,
            l: SmoothnessSpec::Estimate,
            sigma: SmoothnessSpec::Estimate,
            n0: 1.0,
            mode: SamplingMode::FiniteSum,
            max_iters: None,
            seed,
            ifo_budget: None,
            record_true_grad: false,
            smoothness_probes: 256,
        }
    }
}

/// The fully resolved run plan: smoothness constants, clamped n₀, batch
/// schedule, and the step-size cap ε/(2Ln₀).
#[derive(Debug, Clone)]
pub struct RSpiderPlan {
    pub l: f64,
    pub sigma: f64,
    pub n0: f64,
    pub schedule: SpiderSchedule,
    pub eta_cap: f64,
}

impl RSpiderPlan {
    pub fn from_config(problem: &dyn Problem, cfg: &RSpiderConfig) -> Result<Self, OptimError> {
        if !cfg.epsilon.is_finite() || cfg.epsilon <= 0.0 {
            return Err(OptimError::InvalidConfig("epsilon must be positive".into()));
        }
        let (l, sigma) =
            resolve_smoothness(problem, cfg.l, cfg.sigma, cfg.smoothness_probes, cfg.seed)?;
        let n = problem.num_components() as f64;
        let eps = cfg.epsilon;

        let (n0, schedule) = match cfg.mode {
            SamplingMode::FiniteSum => {
                // s = min(n, 16σ²/ε²), p = n₀√s, |S₁| = s, |S₂| = ⌈4√s/n₀⌉.
                let s = n.min((16.0 * sigma * sigma / (eps * eps)).ceil()).max(1.0);
                let n0 = clamp_n0(cfg.n0, 4.0 * s.sqrt());
                let p = (n0 * s.sqrt()).ceil().max(1.0) as usize;
                let s1 = s as usize;
                let s2 = (4.0 * s.sqrt() / n0).ceil().max(1.0) as usize;
                (n0, SpiderSchedule::new(p, s1, s2, cfg.mode)?)
            }
            SamplingMode::Online => {
                // p = σn₀/ε, |S₁| = 64σ²/ε², |S₂| = ⌈4σ/(εn₀)⌉.
                if sigma <= 0.0 {
                    return Err(OptimError::InvalidConfig(
                        "online schedule needs sigma > 0".into(),
                    ));
                }
                let n0 = clamp_n0(cfg.n0, 4.0 * sigma / eps);
                let p = (sigma * n0 / eps).ceil().max(1.0) as usize;
                let s1 = (64.0 * sigma * sigma / (eps * eps)).ceil().max(1.0) as usize;
                let s2 = (4.0 * sigma / (eps * n0)).ceil().max(1.0) as usize;
                (n0, SpiderSchedule::new(p, s1, s2, cfg.mode)?)
            }
        };

        Ok(RSpiderPlan {
            l,
            sigma,
            n0,
            schedule,
            eta_cap: eps / (2.0 * l * n0),
        })
    }

    /// η_k = min(ε/(2Ln₀), ‖v_k‖/(4Ln₀)).
    pub fn step_size(&self, v_norm: f64) -> f64 {
        self.eta_cap.min(v_norm / (4.0 * self.l * self.n0))
    }
}

fn clamp_n0(n0: f64, upper: f64) -> f64 {
    let hi = upper.max(1.0);
    if n0 < 1.0 || n0 > hi {
        let clamped = n0.clamp(1.0, hi);
        log::warn!("n0 = {n0} outside the admissible interval [1, {hi:.3}], clamped to {clamped}");
        clamped
    } else {
        n0
    }
}

/// Upper bound ⌈14·L·n₀·Δ/ε²⌉ on the iterations the analysis allows before
/// termination.
pub fn analysis_iteration_cap(l: f64, n0: f64, delta: f64, epsilon: f64) -> u64 {
    (14.0 * l * n0 * delta / (epsilon * epsilon))
        .ceil()
        .max(1.0) as u64
}

/// Algorithm: every p steps refresh v from S₁, otherwise recurse through the
/// moved iterate; stop as soon as ‖v_k‖ ≤ 0.5ε (checked before the step),
/// else move x_{k+1} = exp(x_k, −η_k·v_k/‖v_k‖).
pub fn run_rspider(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    cfg: &RSpiderConfig,
) -> Result<RunTrace, RunError> {
    run_rspider_traced(problem, x0, cfg).map(|(trace, _)| trace)
}

/// Like [`run_rspider`] but also returns the iterate sequence (one point per
/// trace record), for geometry checks and frozen-trajectory studies.
pub fn run_rspider_traced(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    cfg: &RSpiderConfig,
) -> Result<(RunTrace, Vec<ManifoldPoint>), RunError> {
    let plan = RSpiderPlan::from_config(problem, cfg)?;
    let mut recorder = Recorder::new(cfg.record_true_grad);
    let mut iterates = Vec::new();
    match rspider_loop(problem, x0, cfg, &plan, &mut recorder, &mut iterates) {
        Ok((terminal, why)) => Ok((recorder.finish(terminal, why, Vec::new()), iterates)),
        Err(error) => Err(RunError {
            error,
            partial_records: recorder.take_records(),
        }),
    }
}

fn rspider_loop(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    cfg: &RSpiderConfig,
    plan: &RSpiderPlan,
    recorder: &mut Recorder,
    iterates: &mut Vec<ManifoldPoint>,
) -> Result<(ManifoldPoint, Termination), OptimError> {
    let m = problem.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = cfg.epsilon;

    let f0 = full_loss(problem, x0)?;
    // The analysis cap needs Δ = f(x0) − f*. Without a known optimum or
    // lower bound, use Δ ≈ f(x0) − (running best), floored at ε², and
    // re-evaluate the cap as the best improves.
    let known_gap = initial_gap(problem, f0);
    let mut best = f0;
    let cap = |best: f64| -> u64 {
        match cfg.max_iters {
            Some(mi) => mi,
            None => {
                let delta = known_gap.unwrap_or_else(|| (f0 - best).max(eps * eps));
                analysis_iteration_cap(plan.l, plan.n0, delta.max(1e-12), eps)
            }
        }
    };

    let mut x = x0.clone();
    let mut x_prev: Option<ManifoldPoint> = None;
    let mut ifo: u64 = 0;
    let mut state: Option<SpiderState> = None;
    let mut k: u64 = 0;
    loop {
        if k >= cap(best) {
            return Ok((x, Termination::MaxIters));
        }
        let charge = match &mut state {
            None => {
                let (s, charge) = SpiderState::initialize(plan.schedule, problem, &x, &mut rng)?;
                state = Some(s);
                charge
            }
            Some(s) => {
                if (k as usize).is_multiple_of(plan.schedule.refresh_interval) {
                    s.refresh(problem, &x, &mut rng)?
                } else {
                    let prev = x_prev.as_ref().expect("recursion needs a previous iterate");
                    s.recurse(problem, prev, &x, &mut rng)?
                }
            }
        };
        ifo += charge;
        let est = state.as_ref().unwrap().estimate();
        let v_norm = est.norm();
        let objective = recorder.observe(problem, k, ifo, &x, v_norm)?;
        iterates.push(x.clone());
        best = best.min(objective);

        // Termination test precedes the step; an exactly zero estimate counts
        // as converged.
        if v_norm <= 0.5 * eps {
            return Ok((x, Termination::GradBelowThreshold));
        }
        if let Some(budget) = cfg.ifo_budget {
            if ifo >= budget {
                return Ok((x, Termination::MaxIters));
            }
        }

        let eta = plan.eta_cap.min(v_norm / (4.0 * plan.l * plan.n0));
        let step = est.scaled(-(eta / v_norm));
        let next = m.exp(&x, &step)?;
        x_prev = Some(std::mem::replace(&mut x, next));
        k += 1;
    }
}

/// Decaying-rate practical variant: η_k = α^⌊k/p⌋·β with the normalized
/// update direction kept; runs to the iteration or IFO budget with no
/// ε-termination.
#[derive(Debug, Clone)]
pub struct RSpiderAParams {
    pub alpha: f64,
    pub beta: f64,
    pub refresh_interval: usize,
    pub refresh_batch: usize,
    pub step_batch: usize,
    pub max_iters: u64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
}

pub fn run_rspider_a(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RSpiderAParams,
) -> Result<RunTrace, RunError> {
    if params.alpha.is_nan() || params.alpha <= 0.0 || params.alpha > 1.0 {
        return Err(OptimError::InvalidConfig("alpha must be in (0, 1]".into()).into());
    }
    if params.beta.is_nan() || params.beta <= 0.0 {
        return Err(OptimError::InvalidConfig("beta must be positive".into()).into());
    }
    let schedule = SpiderSchedule::new(
        params.refresh_interval,
        params.refresh_batch,
        params.step_batch,
        params.mode,
    )?;
    let mut recorder = Recorder::new(params.record_true_grad);
    match rspider_a_loop(problem, x0, params, schedule, &mut recorder) {
        Ok((terminal, why)) => Ok(recorder.finish(terminal, why, Vec::new())),
        Err(error) => Err(RunError {
            error,
            partial_records: recorder.take_records(),
        }),
    }
}

fn rspider_a_loop(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RSpiderAParams,
    schedule: SpiderSchedule,
    recorder: &mut Recorder,
) -> Result<(ManifoldPoint, Termination), OptimError> {
    let m = problem.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = x0.clone();
    let mut x_prev: Option<ManifoldPoint> = None;
    let mut ifo: u64 = 0;
    let mut state: Option<SpiderState> = None;
    for k in 0..params.max_iters {
        let charge = match &mut state {
            None => {
                let (s, charge) = SpiderState::initialize(schedule, problem, &x, &mut rng)?;
                state = Some(s);
                charge
            }
            Some(s) => {
                if (k as usize).is_multiple_of(schedule.refresh_interval) {
                    s.refresh(problem, &x, &mut rng)?
                } else {
                    let prev = x_prev.as_ref().expect("recursion needs a previous iterate");
                    s.recurse(problem, prev, &x, &mut rng)?
                }
            }
        };
        ifo += charge;
        let est = state.as_ref().unwrap().estimate();
        let v_norm = est.norm();
        recorder.observe(problem, k, ifo, &x, v_norm)?;

        if let Some(budget) = params.ifo_budget {
            if ifo >= budget {
                return Ok((x, Termination::MaxIters));
            }
        }
        if v_norm == 0.0 {
            // The normalized direction is undefined at an exact stationary
            // point; stay put.
            return Ok((x, Termination::GradBelowThreshold));
        }

        let eta = params
            .alpha
            .powi((k as usize / schedule.refresh_interval) as i32)
            * params.beta;
        let step = est.scaled(-(eta / v_norm));
        let next = m.exp(&x, &step)?;
        x_prev = Some(std::mem::replace(&mut x, next));
    }
    Ok((x, Termination::MaxIters))
}
