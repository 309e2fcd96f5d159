//! Cross-module contracts of the optimizer loops: normalized-step geometry,
//! termination soundness against the full-gradient oracle, and the
//! gradient-estimation error bound along a frozen trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rspider_core::data::{kpca_from_dataset, synth_kpca};
use rspider_core::manifold::ManifoldPoint;
use rspider_core::optim::{run_rspider, RSpiderConfig, RSpiderPlan, SmoothnessSpec, Termination};
use rspider_core::oracle::full_gradient;
use rspider_core::problems::{estimate_smoothness, Problem};
use rspider_core::spider::{estimation_error_mc, SamplingMode, SpiderSchedule, SpiderState};

fn kpca_problem(n: usize, d: usize, k: usize, seed: u64) -> impl Problem {
    let ds = synth_kpca(n, d, k, 0.5, seed).unwrap();
    kpca_from_dataset(&ds, k, true).unwrap()
}

/// Replays the R-SPIDER loop with the run's own seed and verifies both that
/// the replay matches the recorded trace and that every step moves the
/// iterate by exactly η_k along the geodesic.
#[test]
fn normalized_steps_move_exactly_eta() {
    let p = kpca_problem(128, 10, 2, 3);
    let m = p.manifold();
    let mut cfg = RSpiderConfig::new(2e-3, 17);
    cfg.l = SmoothnessSpec::Known(2.0);
    cfg.sigma = SmoothnessSpec::Known(0.3);
    cfg.max_iters = Some(60);
    let plan = RSpiderPlan::from_config(&p, &cfg).unwrap();

    let mut rng_x0 = ChaCha8Rng::seed_from_u64(1);
    let x0 = m.random_point(&mut rng_x0);
    let trace = run_rspider(&p, &x0, &cfg).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x = x0.clone();
    let mut x_prev: Option<ManifoldPoint> = None;
    let mut state: Option<SpiderState> = None;
    for (k, record) in trace.records.iter().enumerate() {
        match &mut state {
            None => {
                let (s, _) = SpiderState::initialize(plan.schedule, &p, &x, &mut rng).unwrap();
                state = Some(s);
            }
            Some(s) => {
                if k % plan.schedule.refresh_interval == 0 {
                    s.refresh(&p, &x, &mut rng).unwrap();
                } else {
                    s.recurse(&p, x_prev.as_ref().unwrap(), &x, &mut rng)
                        .unwrap();
                }
            }
        }
        let est = state.as_ref().unwrap().estimate();
        let v_norm = est.norm();
        assert_eq!(
            v_norm.to_bits(),
            record.grad_estimate_norm.to_bits(),
            "replay diverged from the recorded run at iteration {k}"
        );
        if v_norm <= 0.5 * cfg.epsilon {
            break;
        }
        let eta = plan.step_size(v_norm);
        let next = m.exp(&x, &est.scaled(-(eta / v_norm))).unwrap();
        let moved = m.distance(&x, &next).unwrap();
        assert!(
            (moved - eta).abs() <= 1e-10,
            "step {k}: displacement {moved:.12e} != eta {eta:.12e}"
        );
        x_prev = Some(std::mem::replace(&mut x, next));
    }
}

#[test]
fn termination_is_sound_against_full_gradient_oracle() {
    let p = kpca_problem(256, 16, 3, 5);
    let m = p.manifold();
    let epsilon = 5e-3;
    let mut sound = 0;
    let seeds = 1..=5u64;
    let total = seeds.clone().count();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x0 = m.random_point(&mut rng);
        let mut cfg = RSpiderConfig::new(epsilon, seed);
        cfg.smoothness_probes = 64;
        let trace = run_rspider(&p, &x0, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::GradBelowThreshold);
        let g = full_gradient(&p, &trace.terminal_point).unwrap();
        if g.norm() <= epsilon {
            sound += 1;
        }
    }
    assert!(
        sound >= total - 1,
        "true gradient above epsilon in {} of {total} runs",
        total - sound
    );
}

#[test]
fn estimation_error_respects_bound_along_frozen_run() {
    // Freeze the first refresh cycle of a real R-SPIDER run, then measure the
    // estimator error along it with fresh randomness.
    let p = kpca_problem(64, 8, 2, 23);
    let m = p.manifold();
    let mut cfg = RSpiderConfig::new(5e-3, 29);
    cfg.l = SmoothnessSpec::Known(2.0);
    cfg.sigma = SmoothnessSpec::Known(0.3);
    cfg.max_iters = Some(4);
    let plan = RSpiderPlan::from_config(&p, &cfg).unwrap();

    // Rebuild the first iterates by replay.
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut x = {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        m.random_point(&mut r)
    };
    let mut trajectory = vec![x.clone()];
    let (mut state, _) = SpiderState::initialize(plan.schedule, &p, &x, &mut rng).unwrap();
    let mut x_prev;
    for _ in 0..4 {
        let est = state.estimate();
        let eta = plan.step_size(est.norm());
        let next = m.exp(&x, &est.scaled(-(eta / est.norm()))).unwrap();
        trajectory.push(next.clone());
        x_prev = std::mem::replace(&mut x, next);
        state.recurse(&p, &x_prev, &x, &mut rng).unwrap();
    }

    let schedule = SpiderSchedule::new(4, 16, 4, SamplingMode::FiniteSum).unwrap();
    let smoothness = estimate_smoothness(&p, 128, 7).unwrap();
    let mut rng_mc = ChaCha8Rng::seed_from_u64(99);
    let out =
        estimation_error_mc(&p, &trajectory, schedule, 400, &smoothness, &mut rng_mc).unwrap();
    for (k, (&measured, &bound)) in out.mean_sq_error.iter().zip(&out.bound).enumerate() {
        assert!(
            measured <= 1.05 * bound,
            "step {k}: measured {measured:.3e} above 1.05 x {bound:.3e}"
        );
    }
}

#[test]
fn budget_termination_and_ifo_monotonicity() {
    let p = kpca_problem(64, 8, 2, 31);
    let m = p.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = m.random_point(&mut rng);
    let mut cfg = RSpiderConfig::new(1e-4, 7);
    cfg.smoothness_probes = 32;
    cfg.ifo_budget = Some(2000);
    let trace = run_rspider(&p, &x0, &cfg).unwrap();
    assert_eq!(trace.termination, Termination::MaxIters);
    assert!(trace.total_ifo() >= 2000);
    let mut prev = 0;
    for r in &trace.records {
        assert!(r.ifo > prev || (prev == 0 && r.ifo > 0));
        prev = r.ifo;
    }
}
