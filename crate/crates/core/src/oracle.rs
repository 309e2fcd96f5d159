//! Independent verification oracles used by tests and acceptance runs.
//!
//! Everything here is written as a separate straight-line computation that
//! does not call the code paths it checks, so agreement constitutes
//! independent evidence.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::ProblemError;
use crate::manifold::{ManifoldPoint, TangentVector, TransportMode};
use crate::problems::Problem;

/// Settings for central-difference directional derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Central-difference step; 1e-5 balances truncation and cancellation in
    /// double precision.
    pub step: f64,
    /// Number of random probe directions for a gradient check.
    pub directions: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            directions: 5,
        }
    }
}

/// Central-difference directional derivative of the full objective along the
/// unit tangent `v`:  (f(exp(x, t·v)) − f(exp(x, −t·v))) / (2t).
pub fn fd_directional(
    p: &dyn Problem,
    x: &ManifoldPoint,
    v: &TangentVector,
    cfg: &FdConfig,
) -> Result<f64, ProblemError> {
    let m = p.manifold();
    let t = cfg.step;
    let plus = m.exp(x, &v.scaled(t))?;
    let minus = m.exp(x, &v.scaled(-t))?;
    let f_plus = straight_line_loss(p, &plus)?;
    let f_minus = straight_line_loss(p, &minus)?;
    Ok((f_plus - f_minus) / (2.0 * t))
}

fn straight_line_loss(p: &dyn Problem, x: &ManifoldPoint) -> Result<f64, ProblemError> {
    let n = p.num_components();
    let mut acc = 0.0;
    for i in 0..n {
        acc += p.component_loss(i, x)?;
    }
    Ok(acc / n as f64)
}

/// Exact full gradient: the plain mean of all component gradients,
/// accumulated directly in ambient coordinates.
pub fn full_gradient(p: &dyn Problem, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
    let n = p.num_components();
    let (r, c) = p.manifold().point_shape();
    let mut acc = DMatrix::zeros(r, c);
    for i in 0..n {
        acc += p.component_grad(i, x)?.coords();
    }
    acc /= n as f64;
    Ok(TangentVector::new(x.clone(), acc)?)
}

/// Exact conditional expectation of the SPIDER recursion increment for
/// batch size 1, by enumerating every sample choice:
///
///   E[v_k | history] = (1/n)·Σᵢ [∇fᵢ(x_cur) − Γ(∇fᵢ(x_prev) − v_prev)]
///                    = ∇f(x_cur) − Γ(∇f(x_prev) − v_prev).
pub fn exhaustive_expectation(
    p: &dyn Problem,
    x_prev: &ManifoldPoint,
    x_cur: &ManifoldPoint,
    v_prev: &TangentVector,
) -> Result<TangentVector, ProblemError> {
    let n = p.num_components();
    assert!(n <= 64, "exhaustive enumeration is limited to n <= 64");
    let m = p.manifold();
    let (r, c) = m.point_shape();
    let mut acc = DMatrix::zeros(r, c);
    for i in 0..n {
        let g_cur = p.component_grad(i, x_cur)?;
        let g_prev = p.component_grad(i, x_prev)?;
        let bracket = g_prev.sub(v_prev)?;
        let moved = m.transport(x_prev, x_cur, &bracket, TransportMode::ExactGeodesic)?;
        acc += (g_cur.sub(&moved)?).coords();
    }
    acc /= n as f64;
    Ok(TangentVector::new(x_cur.clone(), acc)?)
}

/// Result of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over probes of |fd − ⟨∇f, v⟩| / max(1, |⟨∇f, v⟩|).
    pub max_rel_err: f64,
    /// Per-probe (finite difference, analytic directional derivative).
    pub probes: Vec<(f64, f64)>,
}

/// Compares central differences against the analytic directional derivative
/// ⟨∇f(x), v⟩ along `cfg.directions` random unit tangents.
pub fn gradcheck<R: Rng>(
    p: &dyn Problem,
    x: &ManifoldPoint,
    cfg: &FdConfig,
    rng: &mut R,
) -> Result<GradCheckReport, ProblemError> {
    let m = p.manifold();
    let grad = full_gradient(p, x)?;
    let mut probes = Vec::with_capacity(cfg.directions);
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..cfg.directions {
        let v = m.random_tangent(x, 1.0, rng)?;
        let fd = fd_directional(p, x, &v, cfg)?;
        let analytic = m.inner(&grad, &v)?;
        let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
        max_rel_err = max_rel_err.max(rel);
        probes.push((fd, analytic));
    }
    Ok(GradCheckReport {
        max_rel_err,
        probes,
    })
}

/// Fault-injection wrapper: scales one component's gradient by (1 + fault).
/// Used to verify that the gradient check actually detects broken gradients.
pub struct CorruptedGradProblem<'a> {
    inner: &'a dyn Problem,
    component: usize,
    fault: f64,
}

impl<'a> CorruptedGradProblem<'a> {
    pub fn new(inner: &'a dyn Problem, component: usize, fault: f64) -> Self {
        CorruptedGradProblem {
            inner,
            component,
            fault,
        }
    }
}

impl Problem for CorruptedGradProblem<'_> {
    fn name(&self) -> &str {
        "corrupted"
    }

    fn manifold(&self) -> crate::manifold::ManifoldKind {
        self.inner.manifold()
    }

    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError> {
        self.inner.component_loss(i, x)
    }

    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
        let g = self.inner.component_grad(i, x)?;
        if i == self.component {
            Ok(g.scaled(1.0 + self.fault))
        } else {
            Ok(g)
        }
    }
}
