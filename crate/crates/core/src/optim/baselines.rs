//! Baseline Riemannian stochastic optimizers: R-SGD with a decaying rate,
//! R-SVRG with a transported snapshot correction, and R-SRG (the same
//! recursion as the SPIDER estimator but with un-normalized steps), plus the
//! restart variant R-SRG+.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::OptimError;
use crate::manifold::{ManifoldPoint, TangentVector, TransportMode};
use crate::optim::{Recorder, RunError, RunTrace, Termination};
use crate::problems::Problem;
use crate::spider::{SamplingMode, SpiderSchedule, SpiderState};

/// Log-spaced rate grid the baselines are tuned over.
pub const BASELINE_RATE_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

fn draw_batch<R: Rng>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    if size >= n {
        (0..n).collect()
    } else {
        (0..size).map(|_| rng.random_range(0..n)).collect()
    }
}

fn batch_grad_at(
    p: &dyn Problem,
    x: &ManifoldPoint,
    batch: &[usize],
) -> Result<TangentVector, OptimError> {
    let (r, c) = p.manifold().point_shape();
    let mut acc = DMatrix::zeros(r, c);
    for &i in batch {
        acc += p.component_grad(i, x)?.coords();
    }
    acc /= batch.len() as f64;
    Ok(TangentVector::new(x.clone(), acc).map_err(crate::error::ProblemError::from)?)
}

#[derive(Debug, Clone)]
pub struct RsgdParams {
    /// Rate schedule η_k = c/(1 + k·λ).
    pub step_c: f64,
    pub step_lambda: f64,
    pub batch: usize,
    pub max_iters: u64,
    pub seed: u64,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
}

/// Stochastic gradient descent along the exponential map:
/// x_{k+1} = exp(x_k, −η_k·∇f_B(x_k)).
pub fn run_rsgd(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RsgdParams,
) -> Result<RunTrace, RunError> {
    if params.step_c.is_nan() || params.step_c <= 0.0 || params.batch == 0 {
        return Err(OptimError::InvalidConfig("need step_c > 0 and batch >= 1".into()).into());
    }
    let recorder = Recorder::new(params.record_true_grad);
    let inner = |recorder: &mut Recorder| -> Result<(ManifoldPoint, Termination), OptimError> {
        let m = problem.manifold();
        let n = problem.num_components();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut x = x0.clone();
        let mut ifo: u64 = 0;
        for k in 0..params.max_iters {
            let batch = draw_batch(n, params.batch, &mut rng);
            let g = batch_grad_at(problem, &x, &batch)?;
            ifo += batch.len() as u64;
            let g_norm = g.norm();
            recorder.observe(problem, k, ifo, &x, g_norm)?;
            if let Some(budget) = params.ifo_budget {
                if ifo >= budget {
                    return Ok((x, Termination::MaxIters));
                }
            }
            let eta = params.step_c / (1.0 + k as f64 * params.step_lambda);
            x = m.exp(&x, &g.scaled(-eta))?;
        }
        Ok((x, Termination::MaxIters))
    };
    run_with(recorder, inner)
}

#[derive(Debug, Clone)]
pub struct RsvrgParams {
    pub epoch_len: usize,
    pub rate: f64,
    pub batch: usize,
    pub max_iters: u64,
    pub seed: u64,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
}

/// Variance reduction against a snapshot point x̃ with its exact full
/// gradient μ: v_k = ∇f_B(x_k) − Γ_{x̃→x_k}(∇f_B(x̃) − μ).
pub fn run_rsvrg(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RsvrgParams,
) -> Result<RunTrace, RunError> {
    if params.epoch_len == 0 || params.batch == 0 || params.rate.is_nan() || params.rate <= 0.0 {
        return Err(
            OptimError::InvalidConfig("need epoch_len, batch >= 1 and rate > 0".into()).into(),
        );
    }
    let recorder = Recorder::new(params.record_true_grad);
    let inner = |recorder: &mut Recorder| -> Result<(ManifoldPoint, Termination), OptimError> {
        let m = problem.manifold();
        let n = problem.num_components();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut x = x0.clone();
        let mut ifo: u64 = 0;
        let mut k: u64 = 0;
        loop {
            // Epoch head: snapshot and exact full gradient (IFO charge n).
            let snapshot = x.clone();
            let all: Vec<usize> = (0..n).collect();
            let mu = batch_grad_at(problem, &snapshot, &all)?;
            ifo += n as u64;

            for _ in 0..params.epoch_len {
                if k >= params.max_iters {
                    return Ok((x, Termination::MaxIters));
                }
                let batch = draw_batch(n, params.batch, &mut rng);
                let g_cur = batch_grad_at(problem, &x, &batch)?;
                let g_snap = batch_grad_at(problem, &snapshot, &batch)?;
                ifo += 2 * batch.len() as u64;
                // Γ applied to the two snapshot terms separately; the batch
                // terms cancel exactly when x is still at the snapshot.
                let moved =
                    m.transport_many(&snapshot, &x, &[&g_snap, &mu], TransportMode::ExactGeodesic)?;
                let v = g_cur.sub(&moved[0])?.add(&moved[1])?;
                let v_norm = v.norm();
                recorder.observe(problem, k, ifo, &x, v_norm)?;
                if let Some(budget) = params.ifo_budget {
                    if ifo >= budget {
                        return Ok((x, Termination::MaxIters));
                    }
                }
                x = m.exp(&x, &v.scaled(-params.rate))?;
                k += 1;
            }
        }
    };
    run_with(recorder, inner)
}

/// Learning-rate rule for R-SRG.
#[derive(Debug, Clone, Copy)]
pub enum RsrgRate {
    Fixed(f64),
    /// Per-epoch decay η_k = α/(1 + α·λ_α·⌊k/p⌋); equals α at k = 0.
    Adaptive {
        alpha: f64,
        lambda_alpha: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RsrgParams {
    pub epoch_len: usize,
    pub rate: RsrgRate,
    pub batch: usize,
    pub max_iters: u64,
    pub seed: u64,
    /// Restart variant: the epoch length doubles after each refresh.
    pub plus_variant: bool,
    pub ifo_budget: Option<u64>,
    pub record_true_grad: bool,
}

/// Recursive gradient tracking with un-normalized steps
/// x_{k+1} = exp(x_k, −η_k·v_k); the recursion is the SPIDER estimator with a
/// full-gradient refresh at each epoch head.
pub fn run_rsrg(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RsrgParams,
) -> Result<RunTrace, RunError> {
    let rate = params.rate;
    let rate_fn = move |k: u64, epoch: u64, _v_norm: f64| -> f64 {
        let _ = k;
        match rate {
            RsrgRate::Fixed(r) => r,
            RsrgRate::Adaptive {
                alpha,
                lambda_alpha,
            } => alpha / (1.0 + alpha * lambda_alpha * epoch as f64),
        }
    };
    run_rsrg_with(problem, x0, params, rate_fn)
}

/// R-SRG core loop with an arbitrary step-size rule η(k, epoch, ‖v_k‖).
/// Applying η = η_spider(‖v‖)/‖v‖ reproduces R-SPIDER step for step.
pub(crate) fn run_rsrg_with(
    problem: &dyn Problem,
    x0: &ManifoldPoint,
    params: &RsrgParams,
    rate_fn: impl Fn(u64, u64, f64) -> f64,
) -> Result<RunTrace, RunError> {
    if params.epoch_len == 0 || params.batch == 0 {
        return Err(OptimError::InvalidConfig("need epoch_len and batch >= 1".into()).into());
    }
    if let RsrgRate::Fixed(r) = params.rate {
        if r.is_nan() || r <= 0.0 {
            return Err(OptimError::InvalidConfig("rate must be positive".into()).into());
        }
    }
    let recorder = Recorder::new(params.record_true_grad);
    let inner = |recorder: &mut Recorder| -> Result<(ManifoldPoint, Termination), OptimError> {
        let m = problem.manifold();
        let n = problem.num_components();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let schedule = SpiderSchedule::new(
            params.epoch_len,
            n, // full-gradient refresh at the epoch head
            params.batch,
            SamplingMode::FiniteSum,
        )?;
        let mut x = x0.clone();
        let mut x_prev: Option<ManifoldPoint> = None;
        let mut state: Option<SpiderState> = None;
        let mut ifo: u64 = 0;
        let mut epoch: u64 = 0;
        let mut epoch_len = params.epoch_len as u64;
        let mut epoch_step: u64 = 0;
        for k in 0..params.max_iters {
            let charge = match &mut state {
                None => {
                    let (s, charge) = SpiderState::initialize(schedule, problem, &x, &mut rng)?;
                    state = Some(s);
                    charge
                }
                Some(s) => {
                    if epoch_step == 0 {
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

            let eta = rate_fn(k, epoch, v_norm);
            let next = m.exp(&x, &est.scaled(-eta))?;
            x_prev = Some(std::mem::replace(&mut x, next));

            epoch_step += 1;
            if epoch_step >= epoch_len {
                epoch_step = 0;
                epoch += 1;
                if params.plus_variant {
                    epoch_len *= 2;
                }
            }
        }
        Ok((x, Termination::MaxIters))
    };
    run_with(recorder, inner)
}

fn run_with(
    mut recorder: Recorder,
    inner: impl FnOnce(&mut Recorder) -> Result<(ManifoldPoint, Termination), OptimError>,
) -> Result<RunTrace, RunError> {
    match inner(&mut recorder) {
        Ok((terminal, why)) => Ok(recorder.finish(terminal, why, Vec::new())),
        Err(error) => Err(RunError {
            error,
            partial_records: recorder.take_records(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::full_gradient;
    use crate::problems::{full_loss, KPcaProblem, QuadraticProblem};
    use nalgebra::DVector;

    #[test]
    fn full_batch_rsgd_is_classical_gradient_descent() {
        // On a Euclidean quadratic with batch = n and λ = 0 the iterates
        // follow x_{k+1} = x_k − η(Āx_k − b̄), checkable in closed form.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let p = QuadraticProblem::with_shared_curvature(a.clone(), vec![b.clone()]).unwrap();
        let m = p.manifold();
        let x0 = ManifoldPoint::new(m, DMatrix::from_column_slice(2, 1, &[3.0, 2.0])).unwrap();
        let params = RsgdParams {
            step_c: 0.1,
            step_lambda: 0.0,
            batch: 1,
            max_iters: 25,
            seed: 0,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsgd(&p, &x0, &params).unwrap();
        let mut x = DVector::from_vec(vec![3.0, 2.0]);
        for _ in 0..25 {
            let g = &a * &x - &b;
            x -= 0.1 * g;
        }
        assert!((trace.terminal_point.coords().column(0) - x).norm() < 1e-12);
        // IFO per step = batch size.
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.ifo, (k as u64 + 1) * params.batch as u64);
        }
    }

    #[test]
    fn rsvrg_with_full_batches_uses_exact_gradients() {
        let p = KPcaProblem::synthetic_for_tests(12, 5, 2, 2);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = m.random_point(&mut rng);
        let params = RsvrgParams {
            epoch_len: 3,
            rate: 0.05,
            batch: 12,
            max_iters: 12,
            seed: 3,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsvrg(&p, &x0, &params).unwrap();
        // Replay: with batch = n the correction collapses and every step uses
        // ∇f(x_k) exactly.
        let mut x = x0.clone();
        for r in &trace.records {
            let g = full_gradient(&p, &x).unwrap();
            assert!((r.grad_estimate_norm - g.norm()).abs() <= 1e-12);
            x = m.exp(&x, &g.scaled(-0.05)).unwrap();
        }
    }

    #[test]
    fn rsvrg_epoch_len_one_is_full_gradient_descent() {
        let p = KPcaProblem::synthetic_for_tests(10, 4, 2, 3);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = m.random_point(&mut rng);
        let params = RsvrgParams {
            epoch_len: 1,
            rate: 0.1,
            batch: 2, // small batch, but the snapshot cancellation is exact
            max_iters: 8,
            seed: 4,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsvrg(&p, &x0, &params).unwrap();
        let mut x = x0.clone();
        for r in &trace.records {
            let g = full_gradient(&p, &x).unwrap();
            assert!(
                (r.grad_estimate_norm - g.norm()).abs() <= 1e-12,
                "inner estimate differs from full gradient"
            );
            x = m.exp(&x, &g.scaled(-0.1)).unwrap();
        }
        assert!((trace.terminal_point.coords() - x.coords()).norm() <= 1e-12);
    }

    #[test]
    fn rsvrg_correction_variance_vanishes_near_snapshot() {
        // Exhaustive variance oracle: enumerate all single-index batches of
        // v = ∇f_i(x) − Γ(∇f_i(x̃) − μ) at shrinking distances from the
        // snapshot. The variance must decay monotonically and hit exactly
        // zero at the snapshot itself.
        let p = KPcaProblem::synthetic_for_tests(8, 4, 2, 5);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let snapshot = m.random_point(&mut rng);
        let all: Vec<usize> = (0..8).collect();
        let mu = batch_grad_at(&p, &snapshot, &all).unwrap();
        let dir = m.random_tangent(&snapshot, 1.0, &mut rng).unwrap();

        let variance_at = |t: f64| -> f64 {
            let x = m.exp(&snapshot, &dir.scaled(t)).unwrap();
            let estimates: Vec<TangentVector> = (0..8)
                .map(|i| {
                    let g_cur = batch_grad_at(&p, &x, &[i]).unwrap();
                    let g_snap = batch_grad_at(&p, &snapshot, &[i]).unwrap();
                    let moved = m
                        .transport_many(
                            &snapshot,
                            &x,
                            &[&g_snap, &mu],
                            TransportMode::ExactGeodesic,
                        )
                        .unwrap();
                    g_cur.sub(&moved[0]).unwrap().add(&moved[1]).unwrap()
                })
                .collect();
            let mut mean = x.zero_tangent();
            for e in &estimates {
                mean.axpy(1.0 / 8.0, e).unwrap();
            }
            estimates
                .iter()
                .map(|e| e.sub(&mean).unwrap().norm().powi(2))
                .sum::<f64>()
                / 8.0
        };

        let vars: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&t| variance_at(t))
            .collect();
        for w in vars.windows(2) {
            assert!(
                w[1] < w[0],
                "variance not shrinking toward the snapshot: {vars:?}"
            );
        }

        // Exactly at the snapshot every single-index estimate collapses to μ.
        for i in 0..8 {
            let g_cur = batch_grad_at(&p, &snapshot, &[i]).unwrap();
            let g_snap = batch_grad_at(&p, &snapshot, &[i]).unwrap();
            let v = g_cur.sub(&g_snap).unwrap().add(&mu).unwrap();
            assert_eq!(v.coords(), mu.coords());
        }
    }

    #[test]
    fn rsrg_full_batch_tracks_exact_gradient() {
        let p = KPcaProblem::synthetic_for_tests(10, 5, 2, 7);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0 = m.random_point(&mut rng);
        let params = RsrgParams {
            epoch_len: 4,
            rate: RsrgRate::Fixed(0.05),
            batch: 10,
            max_iters: 12,
            seed: 5,
            plus_variant: false,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsrg(&p, &x0, &params).unwrap();
        let mut x = x0.clone();
        for r in &trace.records {
            let g = full_gradient(&p, &x).unwrap();
            assert!((r.grad_estimate_norm - g.norm()).abs() <= 1e-11);
            x = m.exp(&x, &g.scaled(-0.05)).unwrap();
        }
    }

    #[test]
    fn adaptive_rate_starts_at_alpha_and_decays() {
        let rate = RsrgRate::Adaptive {
            alpha: 0.2,
            lambda_alpha: 3.0,
        };
        let eta = |epoch: u64| match rate {
            RsrgRate::Adaptive {
                alpha,
                lambda_alpha,
            } => alpha / (1.0 + alpha * lambda_alpha * epoch as f64),
            _ => unreachable!(),
        };
        assert_eq!(eta(0), 0.2);
        assert!(eta(1) < eta(0));
        assert!((eta(1) - 0.2 / 1.6).abs() < 1e-15);
    }

    #[test]
    fn rsrg_plus_doubles_epochs() {
        // With plus_variant, refreshes land at k = 0, p, 3p, 7p, ...; verify
        // by counting the IFO jumps of size n.
        let p = KPcaProblem::synthetic_for_tests(16, 5, 2, 9);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = m.random_point(&mut rng);
        let params = RsrgParams {
            epoch_len: 2,
            rate: RsrgRate::Fixed(0.02),
            batch: 2,
            max_iters: 15,
            seed: 6,
            plus_variant: true,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsrg(&p, &x0, &params).unwrap();
        let mut refresh_iters = Vec::new();
        let mut prev_ifo = 0u64;
        for r in &trace.records {
            if r.ifo - prev_ifo == 16 {
                refresh_iters.push(r.iteration);
            }
            prev_ifo = r.ifo;
        }
        assert_eq!(refresh_iters, vec![0, 2, 6, 14]);
    }

    #[test]
    fn descent_happens_on_kpca() {
        let p = KPcaProblem::synthetic_for_tests(64, 8, 2, 11);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x0 = m.random_point(&mut rng);
        let f0 = full_loss(&p, &x0).unwrap();
        let params = RsgdParams {
            step_c: 0.05,
            step_lambda: 0.01,
            batch: 8,
            max_iters: 200,
            seed: 7,
            ifo_budget: None,
            record_true_grad: false,
        };
        let trace = run_rsgd(&p, &x0, &params).unwrap();
        assert!(trace.final_objective().unwrap() < f0);
    }
}
