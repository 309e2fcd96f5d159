//! R-GD-SPIDER: a multi-stage variant for τ-gradient-dominated objectives.
//! Each stage runs the SPIDER loop at accuracy ε_{t−1} with stage-specific
//! batch rules, then halves the accuracy: ε_t = 0.5·ε_{t−1}. Steps are
//! un-normalized, x_{k+1} = exp(x_k, −v_k/(2Ln₀)), because the stage step
//! rule η_k = ‖v_k‖/(2Ln₀) cancels the normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::OptimError;
use crate::manifold::ManifoldPoint;
use crate::optim::{
    initial_gap, resolve_smoothness, Recorder, RunError, RunTrace, SmoothnessSpec, Termination,
};
use crate::problems::{full_loss, Problem};
use crate::spider::{SamplingMode, SpiderSchedule, SpiderState};

/// Guard against runaway per-step batch sizes in online mode, where the
/// analysis's |S₂,ₖ| rule has no population cap.
const MAX_STEP_BATCH: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct RGdSpiderConfig {
    /// Initial accuracy ε₀; defaults to √Δ/(2√τ) with Δ = f(x₀) − f*.
    pub epsilon0: Option<f64>,
    /// Run stages until the accuracy falls below this.
    pub epsilon_final: f64,
    /// Gradient-dominance constant τ.
    pub tau: f64,
    pub l: SmoothnessSpec,
    pub sigma: SmoothnessSpec,
    /// Fixed at 1 by default: the admissible range for a per-stage n₀ depends
    /// on per-step gradient norms and is not constructively enforceable.
    pub n0: f64,
    pub mode: SamplingMode,
    pub seed: u64,
    /// Override of the per-stage iteration cap K_t = ⌈64·L·n₀·Δ_t/ε_{t−1}²⌉.
    pub max_stage_iters: Option<u64>,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
    pub smoothness_probes: usize,
}

impl RGdSpiderConfig {
    pub fn new(epsilon_final: f64, tau: f64, seed: u64) -> Self {
        RGdSpiderConfig {
            epsilon0: None,
            epsilon_final,
            tau,
            l: SmoothnessSpec::Estimate,
            sigma: SmoothnessSpec::Estimate,
            n0: 1.0,
            mode: SamplingMode::FiniteSum,
            seed,
            max_stage_iters: None,
            ifo_budget: None,
            record_true_grad: false,
            smoothness_probes: 256,
        }
    }
}

/// Where one stage ended: the global iteration index of its last record, the
/// accuracy it ran at, the halved accuracy assigned after it, and the
/// objective at its output point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageMark {
    pub end_iteration: u64,
    /// ε_{t−1}: the accuracy the stage targeted.
    pub target_epsilon: f64,
    /// ε_t = ε₀/2ᵗ: the accuracy after the halving rule.
    pub epsilon: f64,
    pub objective: f64,
}

pub fn run_rgd_spider(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    cfg: &RGdSpiderConfig,
) -> Result<RunTrace, RunError> {
    if cfg.tau.is_nan() || cfg.tau <= 0.0 {
        return Err(OptimError::InvalidConfig("tau must be positive".into()).into());
    }
    if cfg.epsilon_final.is_nan() || cfg.epsilon_final <= 0.0 {
        return Err(OptimError::InvalidConfig("epsilon_final must be positive".into()).into());
    }
    let mut recorder = Recorder::new(cfg.record_true_grad);
    let mut stages = Vec::new();
    match stage_loop(problem, x0, cfg, &mut recorder, &mut stages) {
        Ok(terminal) => Ok(recorder.finish(terminal, Termination::StageComplete, stages)),
        Err(error) => Err(RunError {
            error,
            partial_records: recorder.take_records(),
        }),
    }
}

fn stage_loop(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    cfg: &RGdSpiderConfig,
    recorder: &mut Recorder,
    stages: &mut Vec<StageMark>,
) -> Result<ManifoldPoint, OptimError> {
    let m = problem.manifold();
    let n = problem.num_components();
    let (l, sigma) =
        resolve_smoothness(problem, cfg.l, cfg.sigma, cfg.smoothness_probes, cfg.seed)?;
    let n0 = cfg.n0.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut f_cur = full_loss(problem, x0)?;
    let gap0 = initial_gap(problem, f_cur);
    let eps0 = match cfg.epsilon0 {
        Some(e) => e,
        None => {
            let delta = gap0.ok_or_else(|| {
                OptimError::InvalidConfig(
                    "epsilon0 defaulting needs a known optimum or lower bound; set epsilon0".into(),
                )
            })?;
            (delta.max(f64::MIN_POSITIVE)).sqrt() / (2.0 * cfg.tau.sqrt())
        }
    };
    if cfg.epsilon_final >= eps0 {
        return Err(OptimError::InvalidConfig(format!(
            "epsilon_final {} must be below epsilon0 {}",
            cfg.epsilon_final, eps0
        )));
    }

    let mut x = x0.clone();
    let mut eps_prev = eps0;
    let mut global_iter: u64 = 0;
    let mut ifo: u64 = 0;
    let mut best = f_cur;
    let mut stage = 0u32;

    loop {
        stage += 1;
        let eps_t = eps0 / 2f64.powi(stage as i32);

        // Per-stage Δ_t from the best objective knowledge available; the
        // running-best fallback re-evaluates the cap as the stage progresses.
        let f_stage_start = f_cur;
        let stage_cap = |best: f64| -> u64 {
            match cfg.max_stage_iters {
                Some(mi) => mi,
                None => {
                    let delta_t = match problem.objective_lower_bound() {
                        Some(lb) => (f_stage_start - lb).max(1e-12),
                        None => (f_stage_start - best).max(eps_prev * eps_prev),
                    };
                    (64.0 * l * n0 * delta_t / (eps_prev * eps_prev))
                        .ceil()
                        .max(1.0) as u64
                }
            }
        };

        // Stage schedule from the finite-sum/online parameter rules.
        let (s1, p_t) = match cfg.mode {
            SamplingMode::FiniteSum => {
                let s = (n as f64)
                    .min((32.0 * sigma * sigma / (eps_prev * eps_prev)).ceil())
                    .max(1.0);
                (s as usize, (n0 * s.sqrt()).ceil().max(1.0) as usize)
            }
            SamplingMode::Online => {
                let s1 = (32.0 * sigma * sigma / (eps_prev * eps_prev))
                    .ceil()
                    .max(1.0);
                (
                    s1 as usize,
                    (sigma * n0 / eps_prev).ceil().max(1.0) as usize,
                )
            }
        };
        let schedule = SpiderSchedule::new(p_t, s1, 1, cfg.mode)?;

        let mut state: Option<SpiderState> = None;
        let mut x_prev: Option<ManifoldPoint> = None;
        let mut prev_vnorm = 0.0f64;
        let mut budget_hit = false;
        let mut k: u64 = 0;
        while k < stage_cap(best) {
            let charge = match &mut state {
                None => {
                    let (s, charge) = SpiderState::initialize(schedule, problem, &x, &mut rng)?;
                    state = Some(s);
                    charge
                }
                Some(s) => {
                    if (k as usize).is_multiple_of(p_t) {
                        s.refresh(problem, &x, &mut rng)?
                    } else {
                        // Per-step batch |S₂,ₖ| from the previous estimate
                        // norm; finite-sum caps at n.
                        let s2 = step_batch_size(cfg.mode, n, p_t, n0, sigma, eps_prev, prev_vnorm);
                        s.set_step_batch(s2);
                        let prev = x_prev.as_ref().expect("recursion needs a previous iterate");
                        s.recurse(problem, prev, &x, &mut rng)?
                    }
                }
            };
            ifo += charge;
            let est = state.as_ref().unwrap().estimate();
            let v_norm = est.norm();
            let objective = recorder.observe(problem, global_iter, ifo, &x, v_norm)?;
            global_iter += 1;
            best = best.min(objective);

            if v_norm <= 0.5 * eps_prev {
                break;
            }
            if let Some(budget) = cfg.ifo_budget {
                if ifo >= budget {
                    budget_hit = true;
                    break;
                }
            }

            prev_vnorm = v_norm;
            let step = est.scaled(-1.0 / (2.0 * l * n0));
            let next = m.exp(&x, &step)?;
            x_prev = Some(std::mem::replace(&mut x, next));
            k += 1;
        }

        f_cur = full_loss(problem, &x)?;
        stages.push(StageMark {
            end_iteration: global_iter.saturating_sub(1),
            target_epsilon: eps_prev,
            epsilon: eps_t,
            objective: f_cur,
        });

        eps_prev = eps_t;
        if eps_t <= cfg.epsilon_final || budget_hit {
            return Ok(x);
        }
    }
}

fn step_batch_size(
    mode: SamplingMode,
    n: usize,
    p_t: usize,
    n0: f64,
    sigma: f64,
    eps_prev: f64,
    prev_vnorm: f64,
) -> usize {
    let raw = match mode {
        // |S₂,ₖ| = min(⌈8p‖v_{k−1}‖²/(n₀²ε²)⌉, n)
        SamplingMode::FiniteSum => {
            let v = (8.0 * p_t as f64 * prev_vnorm * prev_vnorm / (n0 * n0 * eps_prev * eps_prev))
                .ceil();
            v.min(n as f64)
        }
        // |S₂,ₖ| = ⌈8σ‖v_{k−1}‖²/(ε³n₀)⌉
        SamplingMode::Online => {
            (8.0 * sigma * prev_vnorm * prev_vnorm / (eps_prev.powi(3) * n0)).ceil()
        }
    };
    (raw.max(1.0) as usize).min(MAX_STEP_BATCH)
}
