//! The stochastic path-integrated differential estimator on a manifold.
//!
//! Every p iterations the gradient estimate is refreshed from a large batch
//! S₁; in between it is tracked recursively with a small batch S₂ drawn with
//! replacement, the same S₂ evaluating both endpoints:
//!
//!   v_k = ∇f_{S₂}(x_k) − Γ_{x_{k−1}→x_k}(∇f_{S₂}(x_{k−1}) − v_{k−1}).
//!
//! Mini-batch gradients are averaged in the tangent space of their evaluation
//! point before any transport.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::OptimError;
use crate::manifold::{ManifoldPoint, TangentVector, TransportMode};
use crate::problems::{Problem, SmoothnessEstimates};

/// Whether the finite sum is treated as the whole population (`FiniteSum`) or
/// as a sampling pool for a simulated online stream (`Online`). Online mode
/// never takes the exact-full-gradient shortcut and its error bound always
/// keeps the refresh variance term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    FiniteSum,
    Online,
}

/// Batch-size and refresh-interval schedule for the estimator.
#[derive(Debug, Clone, Copy)]
pub struct SpiderSchedule {
    /// Refresh interval p (iterations between large-batch snapshots).
    pub refresh_interval: usize,
    /// Refresh batch size |S₁|.
    pub refresh_batch: usize,
    /// Recursion batch size |S₂|.
    pub step_batch: usize,
    pub mode: SamplingMode,
}

impl SpiderSchedule {
    pub fn new(
        refresh_interval: usize,
        refresh_batch: usize,
        step_batch: usize,
        mode: SamplingMode,
    ) -> Result<Self, OptimError> {
        if refresh_interval < 1 || refresh_batch < 1 || step_batch < 1 {
            return Err(OptimError::InvalidConfig(format!(
                "schedule sizes must be >= 1 (p={refresh_interval}, s1={refresh_batch}, s2={step_batch})"
            )));
        }
        Ok(SpiderSchedule {
            refresh_interval,
            refresh_batch,
            step_batch,
            mode,
        })
    }
}

/// Estimator state: the current estimate v_k (based at the current iterate)
/// and the position within the refresh cycle.
#[derive(Debug, Clone)]
pub struct SpiderState {
    v: TangentVector,
    steps_since_refresh: usize,
    schedule: SpiderSchedule,
}

fn draw_with_replacement<R: Rng>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

/// Mean component gradient over explicit indices, accumulated in ambient
/// coordinates at `x`.
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

impl SpiderState {
    /// Creates the state by taking the initial large-batch snapshot at `x`.
    /// Returns the state and the IFO charge of the snapshot.
    pub fn initialize<R: Rng>(
        schedule: SpiderSchedule,
        problem: &dyn Problem,
        x: &ManifoldPoint,
        rng: &mut R,
    ) -> Result<(Self, u64), OptimError> {
        let mut state = SpiderState {
            v: x.zero_tangent(),
            steps_since_refresh: 0,
            schedule,
        };
        let charge = state.refresh(problem, x, rng)?;
        Ok((state, charge))
    }

    pub fn estimate(&self) -> &TangentVector {
        &self.v
    }

    pub fn steps_since_refresh(&self) -> usize {
        self.steps_since_refresh
    }

    pub fn schedule(&self) -> &SpiderSchedule {
        &self.schedule
    }

    /// Adjusts the recursion batch size (used by the per-step |S₂,ₖ| rules of
    /// the gradient-dominated variant).
    pub fn set_step_batch(&mut self, s2: usize) {
        self.schedule.step_batch = s2.max(1);
    }

    /// Large-batch snapshot v = ∇f_{S₁}(x), S₁ drawn with replacement; the
    /// exact full gradient when |S₁| ≥ n in finite-sum mode. Returns the IFO
    /// charge: min(|S₁|, n) in finite-sum mode, |S₁| online.
    pub fn refresh<R: Rng>(
        &mut self,
        problem: &dyn Problem,
        x: &ManifoldPoint,
        rng: &mut R,
    ) -> Result<u64, OptimError> {
        let n = problem.num_components();
        let s1 = self.schedule.refresh_batch;
        let (v, charge) = if self.schedule.mode == SamplingMode::FiniteSum && s1 >= n {
            let all: Vec<usize> = (0..n).collect();
            (batch_grad_at(problem, x, &all)?, n as u64)
        } else {
            let batch = draw_with_replacement(n, s1, rng);
            (batch_grad_at(problem, x, &batch)?, s1 as u64)
        };
        self.v = v;
        self.steps_since_refresh = 0;
        Ok(charge)
    }

    /// One recursion step from `x_prev` (where the current estimate lives) to
    /// `x_cur`, with a freshly drawn S₂. Returns the IFO charge 2·|S₂| (each
    /// index contributes gradients at both points).
    pub fn recurse<R: Rng>(
        &mut self,
        problem: &dyn Problem,
        x_prev: &ManifoldPoint,
        x_cur: &ManifoldPoint,
        rng: &mut R,
    ) -> Result<u64, OptimError> {
        let n = problem.num_components();
        let s2 = self.schedule.step_batch;
        let batch = if self.schedule.mode == SamplingMode::FiniteSum && s2 >= n {
            (0..n).collect()
        } else {
            draw_with_replacement(n, s2, rng)
        };
        self.recurse_with_batch(problem, x_prev, x_cur, &batch)
    }

    /// Recursion step with an explicit sample multiset (exposed so tests can
    /// enumerate the sampling distribution exactly).
    pub fn recurse_with_batch(
        &mut self,
        problem: &dyn Problem,
        x_prev: &ManifoldPoint,
        x_cur: &ManifoldPoint,
        batch: &[usize],
    ) -> Result<u64, OptimError> {
        if self.v.base() != x_prev {
            return Err(OptimError::InvalidConfig(
                "estimator state is not based at x_prev".into(),
            ));
        }
        let m = problem.manifold();
        let g_cur = batch_grad_at(problem, x_cur, batch)?;
        let g_prev = batch_grad_at(problem, x_prev, batch)?;
        // Transport is linear, so Γ(g_prev − v) = Γg_prev − Γv; moving the
        // pieces separately lets the g-terms cancel exactly when the iterate
        // did not move. The geodesic is factorized once.
        let moved = m.transport_many(
            x_prev,
            x_cur,
            &[&g_prev, &self.v],
            TransportMode::ExactGeodesic,
        )?;
        let v_new = g_cur.sub(&moved[0])?.add(&moved[1])?;
        self.v = v_new;
        self.steps_since_refresh += 1;
        Ok(2 * batch.len() as u64)
    }
}

/// Monte-Carlo estimate of the gradient-estimation error along a fixed
/// trajectory, paired with the theoretical bound
///
///   bound[k] = 1_{|S₁|<n}·σ̂²/|S₁| + (L̂²/|S₂|)·Σ_{i<k} d²(xᵢ, xᵢ₊₁)
///
/// evaluated with the estimated constants.
#[derive(Debug, Clone)]
pub struct EstimationErrorMc {
    /// Monte-Carlo mean of ‖v_k − ∇f(x_k)‖² per trajectory step.
    pub mean_sq_error: Vec<f64>,
    /// Error bound per trajectory step.
    pub bound: Vec<f64>,
}

pub fn estimation_error_mc<R: Rng>(
    problem: &dyn Problem,
    trajectory: &[ManifoldPoint],
    schedule: SpiderSchedule,
    trials: usize,
    smoothness: &SmoothnessEstimates,
    rng: &mut R,
) -> Result<EstimationErrorMc, OptimError> {
    if trajectory.is_empty() {
        return Err(OptimError::InvalidConfig("empty trajectory".into()));
    }
    if trajectory.len() > schedule.refresh_interval + 1 {
        return Err(OptimError::InvalidConfig(format!(
            "trajectory has {} points, at most p+1 = {} fit in one refresh cycle",
            trajectory.len(),
            schedule.refresh_interval + 1
        )));
    }
    if trials < 100 {
        return Err(OptimError::InvalidConfig(
            "need at least 100 Monte-Carlo trials".into(),
        ));
    }

    let m = problem.manifold();
    let n = problem.num_components();
    let steps = trajectory.len();

    let full_grads: Vec<TangentVector> = trajectory
        .iter()
        .map(|x| crate::oracle::full_gradient(problem, x))
        .collect::<Result<_, _>>()?;

    let mut sum_sq = vec![0.0; steps];
    for _ in 0..trials {
        let (mut state, _) = SpiderState::initialize(schedule, problem, &trajectory[0], rng)?;
        sum_sq[0] += state.estimate().sub(&full_grads[0])?.norm().powi(2);
        for t in 1..steps {
            state.recurse(problem, &trajectory[t - 1], &trajectory[t], rng)?;
            sum_sq[t] += state.estimate().sub(&full_grads[t])?.norm().powi(2);
        }
    }
    let mean_sq_error: Vec<f64> = sum_sq.iter().map(|s| s / trials as f64).collect();

    let refresh_term = if schedule.mode == SamplingMode::Online || schedule.refresh_batch < n {
        smoothness.sigma_hat.powi(2) / schedule.refresh_batch as f64
    } else {
        0.0
    };
    let mut bound = Vec::with_capacity(steps);
    let mut acc = refresh_term;
    bound.push(acc);
    for t in 1..steps {
        let d = m.distance(&trajectory[t - 1], &trajectory[t])?;
        acc += smoothness.l_hat.powi(2) * d * d / schedule.step_batch as f64;
        bound.push(acc);
    }

    Ok(EstimationErrorMc {
        mean_sq_error,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::full_gradient;
    use crate::problems::{KPcaProblem, QuadraticProblem};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn full_schedule(n: usize) -> SpiderSchedule {
        SpiderSchedule::new(4, n, n, SamplingMode::FiniteSum).unwrap()
    }

    #[test]
    fn full_batch_refresh_is_exact() {
        let p = KPcaProblem::synthetic_for_tests(10, 5, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = p.manifold().random_point(&mut rng);
        let (state, charge) = SpiderState::initialize(full_schedule(10), &p, &x, &mut rng).unwrap();
        assert_eq!(charge, 10);
        let exact = full_gradient(&p, &x).unwrap();
        assert!((state.estimate().coords() - exact.coords()).norm() < 1e-15);
    }

    #[test]
    fn single_component_refresh_ignores_batch_size() {
        let p = KPcaProblem::synthetic_for_tests(1, 4, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = p.manifold().random_point(&mut rng);
        let sched = SpiderSchedule::new(4, 7, 1, SamplingMode::Online).unwrap();
        let (state, charge) = SpiderState::initialize(sched, &p, &x, &mut rng).unwrap();
        assert_eq!(charge, 7);
        let g = p.component_grad(0, &x).unwrap();
        assert!((state.estimate().coords() - g.coords()).norm() < 1e-15);
    }

    #[test]
    fn refresh_expectation_is_full_gradient() {
        // E[v] over a single uniform draw equals (1/n)·Σ ∇fᵢ; by linearity the
        // same holds for any with-replacement batch size, so enumerating the
        // single-draw distribution is the exhaustive oracle for s1 = 4 too.
        let p = KPcaProblem::synthetic_for_tests(16, 5, 2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = p.manifold().random_point(&mut rng);
        let (r, c) = p.manifold().point_shape();
        let mut acc = DMatrix::zeros(r, c);
        for i in 0..16 {
            acc += p.component_grad(i, &x).unwrap().coords();
        }
        acc /= 16.0;
        let exact = full_gradient(&p, &x).unwrap();
        assert!((acc - exact.coords()).norm() < 1e-14);
    }

    #[test]
    fn recurse_at_fixed_point_preserves_estimate_exactly() {
        let p = KPcaProblem::synthetic_for_tests(8, 5, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = p.manifold().random_point(&mut rng);
        let sched = SpiderSchedule::new(4, 8, 2, SamplingMode::FiniteSum).unwrap();
        let (mut state, _) = SpiderState::initialize(sched, &p, &x, &mut rng).unwrap();
        let before = state.estimate().clone();
        let charge = state.recurse(&p, &x, &x, &mut rng).unwrap();
        assert_eq!(charge, 4);
        assert_eq!(state.estimate().coords(), before.coords());
    }

    #[test]
    fn full_batches_telescope_to_exact_gradient() {
        let p = KPcaProblem::synthetic_for_tests(12, 6, 2, 7);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = m.random_point(&mut rng);
        let (mut state, _) = SpiderState::initialize(full_schedule(12), &p, &x, &mut rng).unwrap();
        for _ in 0..100 {
            let v = m.random_tangent(&x, 0.05, &mut rng).unwrap();
            let z = m.exp(&x, &v).unwrap();
            state.recurse(&p, &x, &z, &mut rng).unwrap();
            let exact = full_gradient(&p, &z).unwrap();
            assert!(
                (state.estimate().coords() - exact.coords()).norm() <= 1e-12,
                "estimate drifted beyond 1e-12"
            );
            x = z;
        }
    }

    #[test]
    fn recursion_matches_straight_line_spider_oracle() {
        // Independent reimplementation on a Euclidean quadratic: replicate the
        // index draws and compute v_k by the textbook formula.
        let d = 4;
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mats: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                &g * g.transpose() / d as f64
            })
            .collect();
        let offsets: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let p = QuadraticProblem::new(mats.clone(), offsets.clone()).unwrap();
        let m = p.manifold();

        let sched = SpiderSchedule::new(8, n, 2, SamplingMode::FiniteSum).unwrap();
        let mut rng_algo = ChaCha8Rng::seed_from_u64(42);
        let x0 = m.random_point(&mut rng_algo);
        let (mut state, _) = SpiderState::initialize(sched, &p, &x0, &mut rng_algo).unwrap();

        // Oracle state, updated with the very same index draws.
        let grad_at = |i: usize, x: &DVector<f64>| -> DVector<f64> { &mats[i] * x - &offsets[i] };
        let mut v_oracle: DVector<f64> = {
            let mut acc = DVector::zeros(d);
            for i in 0..n {
                acc += grad_at(i, &x0.coords().column(0).clone_owned());
            }
            acc / n as f64
        };

        let mut rng_oracle = rng_algo.clone();
        let mut x_prev = x0;
        for _ in 0..20 {
            let step = m.random_tangent(&x_prev, 0.1, &mut rng).unwrap();
            let x_cur = m.exp(&x_prev, &step).unwrap();

            state.recurse(&p, &x_prev, &x_cur, &mut rng_algo).unwrap();

            let batch: Vec<usize> = (0..2).map(|_| rng_oracle.random_range(0..n)).collect();
            let xp = x_prev.coords().column(0).clone_owned();
            let xc = x_cur.coords().column(0).clone_owned();
            let mut g_cur = DVector::zeros(d);
            let mut g_prev = DVector::zeros(d);
            for &i in &batch {
                g_cur += grad_at(i, &xc);
                g_prev += grad_at(i, &xp);
            }
            g_cur /= 2.0;
            g_prev /= 2.0;
            v_oracle = g_cur - (g_prev - &v_oracle);

            let got = state.estimate().coords().column(0).clone_owned();
            assert!(
                (got - &v_oracle).norm() < 1e-14,
                "recursion diverged from straight-line oracle"
            );
            x_prev = x_cur;
        }
    }

    #[test]
    fn conditional_unbiasedness_by_enumeration() {
        // n = 8, |S₂| = 1: averaging recurse over every possible draw must
        // equal the independently implemented exhaustive expectation.
        let p = KPcaProblem::synthetic_for_tests(8, 5, 2, 15);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x_prev = m.random_point(&mut rng);
        let step = m.random_tangent(&x_prev, 0.2, &mut rng).unwrap();
        let x_cur = m.exp(&x_prev, &step).unwrap();

        let sched = SpiderSchedule::new(4, 8, 1, SamplingMode::FiniteSum).unwrap();
        let (state0, _) = SpiderState::initialize(sched, &p, &x_prev, &mut rng).unwrap();
        let v_prev = state0.estimate().clone();

        let (r, c) = m.point_shape();
        let mut acc = DMatrix::zeros(r, c);
        for i in 0..8 {
            let mut state = state0.clone();
            state.recurse_with_batch(&p, &x_prev, &x_cur, &[i]).unwrap();
            acc += state.estimate().coords();
        }
        acc /= 8.0;

        let oracle = crate::oracle::exhaustive_expectation(&p, &x_prev, &x_cur, &v_prev).unwrap();
        assert!((acc - oracle.coords()).norm() < 1e-12);
    }

    #[test]
    fn mc_error_is_zero_for_full_batches() {
        let p = KPcaProblem::synthetic_for_tests(6, 4, 2, 17);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut trajectory = vec![m.random_point(&mut rng)];
        for _ in 0..3 {
            let last = trajectory.last().unwrap();
            let v = m.random_tangent(last, 0.1, &mut rng).unwrap();
            trajectory.push(m.exp(last, &v).unwrap());
        }
        let est = SmoothnessEstimates {
            l_hat: 1.0,
            sigma_hat: 1.0,
            tau_hat: None,
        };
        let out =
            estimation_error_mc(&p, &trajectory, full_schedule(6), 100, &est, &mut rng).unwrap();
        assert!(out.mean_sq_error.iter().all(|&e| e <= 1e-24));
        // Full-batch finite-sum: no refresh variance term in the bound.
        assert_eq!(out.bound[0], 0.0);
    }

    #[test]
    fn mc_error_on_constant_trajectory_is_refresh_term_only() {
        let p = KPcaProblem::synthetic_for_tests(16, 5, 2, 19);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = m.random_point(&mut rng);
        let trajectory = vec![x.clone(), x.clone(), x];
        let sched = SpiderSchedule::new(4, 4, 2, SamplingMode::FiniteSum).unwrap();
        let est = crate::problems::estimate_smoothness(&p, 32, 3).unwrap();
        let out = estimation_error_mc(&p, &trajectory, sched, 400, &est, &mut rng).unwrap();
        // Recursion over a constant trajectory adds nothing: per-step error
        // equals the refresh error exactly, trial by trial.
        assert!((out.mean_sq_error[1] - out.mean_sq_error[0]).abs() < 1e-18);
        assert!((out.mean_sq_error[2] - out.mean_sq_error[0]).abs() < 1e-18);
        assert_eq!(out.bound[0], out.bound[1]);
    }

    #[test]
    fn mc_error_stays_below_error_bound() {
        let p = KPcaProblem::synthetic_for_tests(64, 8, 2, 23);
        let m = p.manifold();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut trajectory = vec![m.random_point(&mut rng)];
        for _ in 0..4 {
            let last = trajectory.last().unwrap();
            let v = m.random_tangent(last, 0.02, &mut rng).unwrap();
            trajectory.push(m.exp(last, &v).unwrap());
        }
        let sched = SpiderSchedule::new(4, 16, 4, SamplingMode::FiniteSum).unwrap();
        let est = crate::problems::estimate_smoothness(&p, 64, 5).unwrap();
        let out = estimation_error_mc(&p, &trajectory, sched, 500, &est, &mut rng).unwrap();
        for (k, (&measured, &bound)) in out.mean_sq_error.iter().zip(&out.bound).enumerate() {
            assert!(
                measured <= 1.05 * bound,
                "step {k}: measured {measured:.3e} > 1.05 x bound {bound:.3e}"
            );
        }
    }
}
