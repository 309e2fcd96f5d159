//! The `gradcheck` and `variance-check` verification commands.

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rspider_core::optim::{run_rspider_traced, RSpiderConfig};
use rspider_core::oracle::{gradcheck, FdConfig};
use rspider_core::problems::estimate_smoothness;
use rspider_core::spider::{estimation_error_mc, SamplingMode, SpiderSchedule};

use crate::config::RunConfig;
use crate::runner::{build_problem, seeded_x0};

pub const GRADCHECK_FAIL_THRESHOLD: f64 = 1e-4;
pub const VARIANCE_BOUND_SLACK: f64 = 1.05;

/// Finite-difference gradient verification; returns false (nonzero exit)
/// when the max relative error exceeds 1e-4.
pub fn cmd_gradcheck(config: &RunConfig, seed: u64) -> Result<bool> {
    let problem = build_problem(&config.problem)?;
    let p = problem.as_dyn();
    let x = seeded_x0(p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FdConfig::default();
    let report = gradcheck(p, &x, &cfg, &mut rng)?;
    println!(
        "gradient check: {} probes, fd step {:.1e}",
        cfg.directions, cfg.step
    );
    for (i, (fd, analytic)) in report.probes.iter().enumerate() {
        println!("  probe {i}: fd = {fd:+.9e}  analytic = {analytic:+.9e}");
    }
    let pass = report.max_rel_err <= GRADCHECK_FAIL_THRESHOLD;
    println!(
        "max relative error: {:.3e} ({})",
        report.max_rel_err,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

/// Monte-Carlo check of the gradient-estimation error bound along a frozen
/// trajectory; returns false when any step exceeds 1.05x the bound.
pub fn cmd_variance_check(
    config: &RunConfig,
    trials_override: Option<usize>,
    seed: u64,
) -> Result<bool> {
    let problem = build_problem(&config.problem)?;
    let p = problem.as_dyn();
    let vc = config.variance_check.clone().unwrap_or_default();
    let trials = trials_override.unwrap_or(vc.trials);

    // Freeze a short R-SPIDER trajectory.
    let mut cfg = RSpiderConfig::new(vc.epsilon.unwrap_or(1e-2), seed);
    cfg.max_iters = Some(vc.p as u64 + 1);
    cfg.smoothness_probes = 128;
    let x0 = seeded_x0(p, seed);
    let (_, iterates) = run_rspider_traced(p, &x0, &cfg)?;
    let trajectory: Vec<_> = iterates.into_iter().take(vc.p + 1).collect();

    let schedule = SpiderSchedule::new(vc.p, vc.s1, vc.s2, SamplingMode::FiniteSum)?;
    let smoothness = estimate_smoothness(p, 256, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4d43_7472);
    let out = estimation_error_mc(p, &trajectory, schedule, trials, &smoothness, &mut rng)?;

    let m = p.manifold();
    println!(
        "variance check: n = {}, p = {}, |S1| = {}, |S2| = {}, {} trials",
        p.num_components(),
        vc.p,
        vc.s1,
        vc.s2,
        trials
    );
    println!(
        "estimated constants: L_hat = {:.6e}, sigma_hat = {:.6e}",
        smoothness.l_hat, smoothness.sigma_hat
    );
    let mut pass = true;
    for (k, (&measured, &bound)) in out.mean_sq_error.iter().zip(&out.bound).enumerate() {
        let dist = if k == 0 {
            0.0
        } else {
            m.distance(&trajectory[k - 1], &trajectory[k])?
        };
        let ratio = if bound > 0.0 { measured / bound } else { 0.0 };
        let ok = measured <= VARIANCE_BOUND_SLACK * bound;
        pass &= ok;
        println!(
            "  step {k}: d(x_prev,x) = {:.6e}  measured = {:.6e}  bound = {:.6e}  ratio = {:.3} {}",
            dist,
            measured,
            bound,
            ratio,
            if ok { "" } else { "EXCEEDED" }
        );
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}
