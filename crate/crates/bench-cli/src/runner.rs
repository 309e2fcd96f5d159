//! Problem construction and the `run` command: seeded optimizer comparisons
//! with IFO accounting, trace files, and a summary table.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rspider_core::data::{kpca_from_dataset, parse_libsvm, synth_kpca, synth_lrmc};
use rspider_core::manifold::ManifoldPoint;
use rspider_core::optim::{
    run_rgd_spider, run_rsgd, run_rspider, run_rspider_a, run_rsrg, run_rsvrg, RGdSpiderConfig,
    RSpiderAParams, RSpiderConfig, RsgdParams, RsrgParams, RsrgRate, RsvrgParams, RunError,
    RunTrace, SmoothnessSpec, Termination,
};
use rspider_core::problems::{
    lrmc_reference_optimum, KPcaProblem, LrmcProblem, Problem, QuadraticProblem, ReferenceGdOptions,
};
use rspider_core::spider::SamplingMode;

use crate::config::{OptimizerSpec, ProblemSpec, RunConfig};
use crate::trace_io::{write_summary, write_trace, CellSummary, RunSummary, SuboptReference};

/// Salt separating the x₀ draw from the optimizer's sampling stream.
const X0_SALT: u64 = 0x0f0f_5a17;

pub enum BuiltProblem {
    KPca(KPcaProblem),
    Lrmc(LrmcProblem),
    Quadratic(QuadraticProblem),
}

impl BuiltProblem {
    pub fn as_dyn(&self) -> &dyn Problem {
        match self {
            BuiltProblem::KPca(p) => p,
            BuiltProblem::Lrmc(p) => p,
            BuiltProblem::Quadratic(p) => p,
        }
    }

    /// Exact or reference optimum for sub-optimality reporting.
    pub fn reference_optimum(&self) -> Result<Option<f64>> {
        match self {
            BuiltProblem::KPca(p) => Ok(Some(p.optimum())),
            BuiltProblem::Quadratic(p) => Ok(p.known_optimum()),
            BuiltProblem::Lrmc(p) => {
                let opts = ReferenceGdOptions::default();
                match lrmc_reference_optimum(p, &opts) {
                    Ok(f) => Ok(Some(f)),
                    Err(e) => {
                        log::warn!("reference solve failed ({e}); falling back to run-set minimum");
                        Ok(None)
                    }
                }
            }
        }
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<BuiltProblem> {
    let need = |v: Option<usize>, what: &str| {
        v.ok_or_else(|| anyhow!("problem.{what} is required for kind `{}`", spec.kind))
    };
    match spec.kind.as_str() {
        "kpca" => {
            let k = need(spec.k, "k")?;
            if let Some(path) = &spec.path {
                let file = File::open(path).with_context(|| format!("opening {path}"))?;
                let ds = parse_libsvm(BufReader::new(file))?;
                report_known_shape(path, ds.n(), ds.d);
                Ok(BuiltProblem::KPca(kpca_from_dataset(
                    &ds,
                    k,
                    spec.normalize,
                )?))
            } else {
                let n = need(spec.n, "n")?;
                let d = need(spec.d, "d")?;
                let ds = synth_kpca(n, d, k, spec.decay.unwrap_or(0.5), spec.data_seed)?;
                Ok(BuiltProblem::KPca(kpca_from_dataset(
                    &ds,
                    k,
                    spec.normalize,
                )?))
            }
        }
        "lrmc" => {
            let n = need(spec.n, "n")?;
            let d = need(spec.d, "d")?;
            let k = need(spec.k, "k")?;
            let (p, _) = synth_lrmc(
                d,
                n,
                k,
                spec.density.unwrap_or(0.3),
                spec.noise.unwrap_or(0.0),
                spec.data_seed,
            )?;
            Ok(BuiltProblem::Lrmc(p))
        }
        "quadratic" => {
            let n = need(spec.n, "n")?;
            let d = need(spec.d, "d")?;
            let p = QuadraticProblem::gaussian(
                d,
                n,
                spec.mu.unwrap_or(0.5),
                spec.l.unwrap_or(2.0),
                spec.spread.unwrap_or(0.5),
                spec.data_seed,
            )?;
            Ok(BuiltProblem::Quadratic(p))
        }
        other => bail!("unknown problem kind `{other}`"),
    }
}

/// When a file matches a known benchmark dataset by shape, say so.
fn report_known_shape(path: &str, n: usize, d: usize) {
    for info in rspider_core::data::dataset_registry() {
        if info.samples == n as u64 && info.features == d as u64 {
            log::info!("{path}: shape matches dataset `{}`", info.name);
            return;
        }
    }
}

pub fn seeded_x0(problem: &dyn Problem, seed: u64) -> ManifoldPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ X0_SALT);
    problem.manifold().random_point(&mut rng)
}

/// Dispatches one optimizer spec at one seed.
pub fn run_cell(
    problem: &dyn Problem,
    spec: &OptimizerSpec,
    seed: u64,
    ifo_budget: Option<u64>,
    record_true_grad: bool,
) -> Result<RunTrace, CellError> {
    let x0 = seeded_x0(problem, seed);
    let n = problem.num_components();
    let mode = if spec.online {
        SamplingMode::Online
    } else {
        SamplingMode::FiniteSum
    };
    let smoothness = |v: Option<f64>| v.map_or(SmoothnessSpec::Estimate, SmoothnessSpec::Known);
    let require = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| CellError::Config(format!("optimizer `{}` requires `{what}`", spec.name)))
    };
    let default_iters = || -> Result<u64, CellError> {
        match (spec.max_iters, ifo_budget) {
            (Some(m), _) => Ok(m),
            (None, Some(_)) => Ok(u64::MAX),
            (None, None) => Err(CellError::Config(format!(
                "optimizer `{}` needs max_iters or run.ifo_budget",
                spec.name
            ))),
        }
    };

    let trace = match spec.name.as_str() {
        "rspider" => {
            let cfg = RSpiderConfig {
                epsilon: require(spec.epsilon, "epsilon")?,
                l: smoothness(spec.l),
                sigma: smoothness(spec.sigma),
                n0: spec.n0.unwrap_or(1.0),
                mode,
                max_iters: spec.max_iters,
                seed,
                ifo_budget,
                record_true_grad,
                smoothness_probes: 256,
            };
            run_rspider(problem, &x0, &cfg)?
        }
        "rspider_a" => {
            let params = RSpiderAParams {
                alpha: require(spec.alpha, "alpha")?,
                beta: require(spec.beta, "beta")?,
                refresh_interval: spec.p.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize),
                refresh_batch: spec.s1.unwrap_or(n),
                step_batch: spec.s2.unwrap_or(4),
                max_iters: default_iters()?,
                seed,
                mode,
                ifo_budget,
                record_true_grad,
            };
            run_rspider_a(problem, &x0, &params)?
        }
        "rgd_spider" => {
            let cfg = RGdSpiderConfig {
                epsilon0: spec.epsilon,
                epsilon_final: require(spec.epsilon_final, "epsilon_final")?,
                tau: require(spec.tau, "tau")?,
                l: smoothness(spec.l),
                sigma: smoothness(spec.sigma),
                n0: spec.n0.unwrap_or(1.0),
                mode,
                seed,
                max_stage_iters: spec.max_iters,
                ifo_budget,
                record_true_grad,
                smoothness_probes: 256,
            };
            run_rgd_spider(problem, &x0, &cfg)?
        }
        "rsgd" => {
            let params = RsgdParams {
                step_c: require(spec.rate, "rate")?,
                step_lambda: spec.lambda.unwrap_or(1e-3),
                batch: spec.batch.unwrap_or_else(|| (n / 100).max(1)),
                max_iters: default_iters()?,
                seed,
                ifo_budget,
                record_true_grad,
            };
            run_rsgd(problem, &x0, &params)?
        }
        "rsvrg" => {
            let batch = spec.batch.unwrap_or_else(|| (n / 100).max(1));
            let params = RsvrgParams {
                epoch_len: spec.epoch_len.unwrap_or_else(|| (n / batch).max(1)),
                rate: require(spec.rate, "rate")?,
                batch,
                max_iters: default_iters()?,
                seed,
                ifo_budget,
                record_true_grad,
            };
            run_rsvrg(problem, &x0, &params)?
        }
        "rsrg" => {
            let batch = spec.batch.unwrap_or_else(|| (n / 100).max(1));
            let rate = match (spec.rate, spec.alpha) {
                (Some(r), None) => RsrgRate::Fixed(r),
                (None, Some(alpha)) => RsrgRate::Adaptive {
                    alpha,
                    lambda_alpha: spec.lambda_alpha.unwrap_or(1.0),
                },
                _ => {
                    return Err(CellError::Config(
                        "rsrg needs either `rate` or `alpha` (+ lambda_alpha)".into(),
                    ))
                }
            };
            let params = RsrgParams {
                epoch_len: spec.epoch_len.unwrap_or_else(|| (n / batch).max(1)),
                rate,
                batch,
                max_iters: default_iters()?,
                seed,
                plus_variant: spec.plus,
                ifo_budget,
                record_true_grad,
            };
            run_rsrg(problem, &x0, &params)?
        }
        other => return Err(CellError::Config(format!("unknown optimizer `{other}`"))),
    };
    Ok(trace)
}

#[derive(Debug)]
pub enum CellError {
    Config(String),
    Run(RunError),
}

impl std::fmt::Display for CellError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellError::Config(m) => write!(f, "{m}"),
            CellError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<RunError> for CellError {
    fn from(e: RunError) -> Self {
        CellError::Run(e)
    }
}

fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::GradBelowThreshold => "grad_below_threshold",
        Termination::MaxIters => "max_iters",
        Termination::StageComplete => "stage_complete",
    }
}

/// Unique run ids: the optimizer name, suffixed with its ordinal when the
/// same optimizer appears more than once.
pub fn assign_run_ids(optimizers: &[OptimizerSpec]) -> Vec<String> {
    let mut ids = Vec::with_capacity(optimizers.len());
    for (i, opt) in optimizers.iter().enumerate() {
        let dup = optimizers.iter().filter(|o| o.name == opt.name).count() > 1;
        if dup {
            let ordinal = optimizers[..=i]
                .iter()
                .filter(|o| o.name == opt.name)
                .count();
            ids.push(format!("{}_{ordinal}", opt.name));
        } else {
            ids.push(opt.name.clone());
        }
    }
    ids
}

/// Executes every (optimizer, seed) cell, writes one trace file per cell plus
/// a JSON summary, and reports whether all cells succeeded.
pub fn cmd_run(config: &RunConfig, out_dir: &Path, workers: Option<usize>) -> Result<bool> {
    if config.optimizers.is_empty() {
        bail!("config declares no optimizers");
    }
    std::fs::create_dir_all(out_dir)?;
    let problem = build_problem(&config.problem)?;
    let reference = problem.reference_optimum()?;
    let run_ids = assign_run_ids(&config.optimizers);

    struct Cell<'a> {
        spec: &'a OptimizerSpec,
        run_id: String,
        seed: u64,
    }
    let cells: Vec<Cell> = config
        .optimizers
        .iter()
        .zip(&run_ids)
        .flat_map(|(spec, id)| {
            config.run.seeds.iter().map(move |&seed| Cell {
                spec,
                run_id: id.clone(),
                seed,
            })
        })
        .collect();

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = workers {
            builder = builder.num_threads(w);
        }
        builder.build()?
    };
    let dyn_problem = problem.as_dyn();
    let results: Vec<Result<RunTrace, CellError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                run_cell(
                    dyn_problem,
                    cell.spec,
                    cell.seed,
                    config.run.ifo_budget,
                    config.run.record_true_grad,
                )
            })
            .collect()
    });

    // Sub-optimality reference: exact optimum when available, otherwise the
    // best objective ever observed across the run set.
    let reference = match reference {
        Some(f) => SuboptReference::Optimum(f),
        None => {
            let best = results
                .iter()
                .flat_map(|r| match r {
                    Ok(trace) => trace.records.iter(),
                    Err(CellError::Run(e)) => e.partial_records.iter(),
                    Err(CellError::Config(_)) => [].iter(),
                })
                .map(|rec| rec.objective)
                .fold(f64::INFINITY, f64::min);
            SuboptReference::RunSetMinimum(if best.is_finite() { best } else { 0.0 })
        }
    };

    let mut all_ok = true;
    let mut summaries = Vec::new();
    for (cell, result) in cells.iter().zip(&results) {
        match result {
            Ok(trace) => {
                write_trace(out_dir, &cell.run_id, cell.seed, &trace.records, &reference)?;
                let last = trace.records.last();
                summaries.push(CellSummary {
                    optimizer: cell.spec.name.clone(),
                    run_id: cell.run_id.clone(),
                    seed: cell.seed,
                    final_objective: last.map(|r| r.objective),
                    final_subopt: last.map(|r| r.objective - reference.value()),
                    total_ifo: trace.total_ifo(),
                    iterations: trace.records.len() as u64,
                    wall_s: last.map(|r| r.elapsed_s).unwrap_or(0.0),
                    termination: termination_label(trace.termination).into(),
                    error: None,
                });
            }
            Err(err) => {
                all_ok = false;
                // Mid-run failures still flush the partial trace.
                if let CellError::Run(run_err) = err {
                    write_trace(
                        out_dir,
                        &cell.run_id,
                        cell.seed,
                        &run_err.partial_records,
                        &reference,
                    )?;
                }
                log::error!("{} seed {} failed: {err}", cell.run_id, cell.seed);
                summaries.push(CellSummary {
                    optimizer: cell.spec.name.clone(),
                    run_id: cell.run_id.clone(),
                    seed: cell.seed,
                    final_objective: None,
                    final_subopt: None,
                    total_ifo: 0,
                    iterations: 0,
                    wall_s: 0.0,
                    termination: "error".into(),
                    error: Some(err.to_string()),
                });
            }
        }
    }

    let summary = RunSummary {
        config: config.clone(),
        problem_n: dyn_problem.num_components(),
        subopt_reference: reference,
        cells: summaries,
    };
    write_summary(out_dir, &summary)?;
    print_table(&summary);
    Ok(all_ok)
}

fn print_table(summary: &RunSummary) {
    println!(
        "{:<14} {:>6} {:>14} {:>12} {:>10} {:>9}  termination",
        "run", "seed", "final_subopt", "ifo", "iters", "wall_s"
    );
    let mut rows: Vec<&CellSummary> = summary.cells.iter().collect();
    rows.sort_by(|a, b| {
        let ka = a.final_subopt.unwrap_or(f64::INFINITY);
        let kb = b.final_subopt.unwrap_or(f64::INFINITY);
        ka.partial_cmp(&kb).unwrap().then(a.seed.cmp(&b.seed))
    });
    for c in rows {
        println!(
            "{:<14} {:>6} {:>14} {:>12} {:>10} {:>9.3}  {}",
            c.run_id,
            c.seed,
            c.final_subopt
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "-".into()),
            c.total_ifo,
            c.iterations,
            c.wall_s,
            c.error.as_deref().unwrap_or(&c.termination),
        );
    }
}
