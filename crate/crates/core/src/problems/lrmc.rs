//! Low-rank matrix completion on the Grassmann manifold. For an incomplete
//! d×n matrix A with per-column observation sets Ωᵢ,
//!
//!   fᵢ(U) = min_{Gᵢ} ‖𝒫_{Ωᵢ}(Aᵢ) − 𝒫_{Ωᵢ}(U·Gᵢ)‖²,
//!
//! with the inner coefficients Gᵢ eliminated per column by closed-form least
//! squares, so the optimization variable is U alone and the component losses
//! are independent.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ProblemError;
use crate::manifold::TangentVector;
use crate::manifold::{ManifoldKind, ManifoldPoint};
use crate::problems::{check_index, full_grad, full_loss, Problem};

/// Observed entries of one column: parallel lists of row indices (strictly
/// increasing) and values.
#[derive(Debug, Clone)]
pub struct LrmcColumn {
    pub rows: Vec<u32>,
    pub values: Vec<f64>,
}

pub struct LrmcProblem {
    d: usize,
    k: usize,
    columns: Vec<LrmcColumn>,
    manifold: ManifoldKind,
}

/// Ridge added to the normal equations when the restricted system is rank
/// deficient; keeps unlucky sparsity patterns from aborting a benchmark run.
const RIDGE: f64 = 1e-12;

impl LrmcProblem {
    pub fn new(d: usize, k: usize, mut columns: Vec<LrmcColumn>) -> Result<Self, ProblemError> {
        if columns.is_empty() {
            return Err(ProblemError::InvalidData("no columns".into()));
        }
        let manifold =
            ManifoldKind::grassmann(d, k).map_err(|e| ProblemError::InvalidData(e.to_string()))?;
        for (i, col) in columns.iter_mut().enumerate() {
            if col.rows.len() != col.values.len() {
                return Err(ProblemError::InvalidData(format!(
                    "column {i}: rows/values length mismatch"
                )));
            }
            if col.rows.len() < k {
                return Err(ProblemError::InvalidData(format!(
                    "column {i} has {} observations, need at least k = {k}",
                    col.rows.len()
                )));
            }
            let mut order: Vec<usize> = (0..col.rows.len()).collect();
            order.sort_by_key(|&j| col.rows[j]);
            let rows: Vec<u32> = order.iter().map(|&j| col.rows[j]).collect();
            let values: Vec<f64> = order.iter().map(|&j| col.values[j]).collect();
            if rows.windows(2).any(|w| w[0] == w[1]) {
                return Err(ProblemError::InvalidData(format!(
                    "column {i} has duplicate row indices"
                )));
            }
            if rows.last().map(|&r| r as usize >= d).unwrap_or(false) {
                return Err(ProblemError::InvalidData(format!(
                    "column {i}: row index out of range (d = {d})"
                )));
            }
            col.rows = rows;
            col.values = values;
        }
        Ok(LrmcProblem {
            d,
            k,
            columns,
            manifold,
        })
    }

    pub fn rows_dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.k
    }

    pub fn columns(&self) -> &[LrmcColumn] {
        &self.columns
    }

    /// Solves the column's restricted least squares min_G ‖a − U_Ω·G‖² and
    /// returns (G*, residual a − U_Ω·G*).
    fn solve_column(
        &self,
        i: usize,
        u: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), ProblemError> {
        let col = &self.columns[i];
        let m = col.rows.len();
        let mut u_omega = DMatrix::zeros(m, self.k);
        for (j, &r) in col.rows.iter().enumerate() {
            for c in 0..self.k {
                u_omega[(j, c)] = u[(r as usize, c)];
            }
        }
        let a = DVector::from_column_slice(&col.values);
        let normal = u_omega.tr_mul(&u_omega);
        let rhs = u_omega.tr_mul(&a);
        let chol = Cholesky::new(normal.clone())
            .or_else(|| Cholesky::new(normal + DMatrix::identity(self.k, self.k) * RIDGE));
        let g = match chol {
            Some(c) => c.solve(&rhs),
            None => return Err(ProblemError::RankDeficient { column: i }),
        };
        let residual = a - u_omega * &g;
        Ok((g, residual))
    }
}

impl Problem for LrmcProblem {
    fn name(&self) -> &str {
        "lrmc"
    }

    fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    fn num_components(&self) -> usize {
        self.columns.len()
    }

    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError> {
        check_index(self, i)?;
        let (_, residual) = self.solve_column(i, x.coords())?;
        Ok(residual.norm_squared())
    }

    /// Gradient of the partially minimized objective. By the envelope
    /// property the inner minimizer G* can be treated as constant, so the
    /// ambient gradient is −2·𝒫_{Ωᵢ}(rᵢ)·G*ᵀ.
    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
        check_index(self, i)?;
        let (g, residual) = self.solve_column(i, x.coords())?;
        let col = &self.columns[i];
        let mut ambient = DMatrix::zeros(self.d, self.k);
        for (j, &r) in col.rows.iter().enumerate() {
            let c = -2.0 * residual[j];
            for l in 0..self.k {
                ambient[(r as usize, l)] += c * g[l];
            }
        }
        Ok(self.manifold.project_tangent(x, &ambient)?)
    }

    fn objective_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Options for the Riemannian gradient-descent reference solve.
#[derive(Debug, Clone)]
pub struct ReferenceGdOptions {
    pub seed: u64,
    /// Start point; a seeded random point when absent.
    pub x0: Option<ManifoldPoint>,
    pub max_iters: u64,
    /// Stop when ‖∇f(x)‖/‖x‖ falls below this.
    pub grad_tol_rel: f64,
}

impl Default for ReferenceGdOptions {
    fn default() -> Self {
        ReferenceGdOptions {
            seed: 0,
            x0: None,
            max_iters: 1_000_000,
            grad_tol_rel: 1e-8,
        }
    }
}

/// Reference optimum f* for sub-optimality reporting: runs full Riemannian
/// gradient descent with Armijo backtracking until ‖∇f(x)‖/‖x‖ ≤ tol.
/// Deterministic given the seed. Hitting the iteration cap is an error that
/// carries the best value seen.
pub fn lrmc_reference_optimum(
    p: &LrmcProblem,
    opts: &ReferenceGdOptions,
) -> Result<f64, ProblemError> {
    let m = p.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = match &opts.x0 {
        Some(x0) => x0.clone(),
        None => m.random_point(&mut rng),
    };
    let x_norm = x.coords().norm();
    let mut f = full_loss(p, &x)?;
    let mut best = f;
    let mut step = 1.0;
    for it in 0..opts.max_iters {
        let g = full_grad(p, &x)?;
        let gn = g.norm();
        if gn / x_norm <= opts.grad_tol_rel {
            return Ok(f);
        }
        // Armijo backtracking with a growing initial step.
        let mut eta = step * 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = m.exp(&x, &g.scaled(-eta))?;
            let f_new = full_loss(p, &candidate)?;
            if f_new <= f - 1e-4 * eta * gn * gn {
                x = candidate;
                f = f_new;
                step = eta;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // Step underflow: gradient accurate descent is no longer
            // possible at this scale; report as converged if close, else fail.
            if gn / x_norm <= opts.grad_tol_rel * 10.0 {
                return Ok(f);
            }
            return Err(ProblemError::ConvergenceFailure {
                iters: it,
                best: best.min(f),
            });
        }
        best = best.min(f);
    }
    Err(ProblemError::ConvergenceFailure {
        iters: opts.max_iters,
        best,
    })
}
