//! Finite-sum objectives on manifolds: f(x) = (1/n)·Σᵢ fᵢ(x), each component
//! exposing its loss and Riemannian gradient.
//!
//! Problem instances are immutable after construction; component evaluations
//! are pure and may run concurrently from multiple threads.

mod kpca;
mod lrmc;
mod quadratic;

pub use kpca::KPcaProblem;
pub use lrmc::{lrmc_reference_optimum, LrmcColumn, LrmcProblem, ReferenceGdOptions};
pub use quadratic::QuadraticProblem;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ProblemError;
use crate::manifold::{ManifoldKind, ManifoldPoint, TangentVector, TransportMode};

/// A differentiable finite-sum objective bound to a manifold.
///
/// The full loss is the mean of the component losses and the full gradient is
/// the mean of the component gradients; `component_grad` is always tangent at
/// its evaluation point.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn manifold(&self) -> ManifoldKind;
    /// Number of components n.
    fn num_components(&self) -> usize;
    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError>;
    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError>;
    /// Exact optimal value f*, when available in closed form.
    fn known_optimum(&self) -> Option<f64> {
        None
    }
    /// A lower bound on f, used to bound Δ = f(x₀) − f* when f* is unknown.
    fn objective_lower_bound(&self) -> Option<f64> {
        self.known_optimum()
    }
}

pub(crate) fn check_index(p: &dyn Problem, i: usize) -> Result<(), ProblemError> {
    let n = p.num_components();
    if i >= n {
        return Err(ProblemError::IndexOutOfRange { index: i, n });
    }
    Ok(())
}

/// Mean component loss over a batch of indices.
pub fn batch_loss(
    p: &dyn Problem,
    x: &ManifoldPoint,
    batch: &[usize],
) -> Result<f64, ProblemError> {
    if batch.is_empty() {
        return Err(ProblemError::EmptyBatch);
    }
    let mut acc = 0.0;
    for &i in batch {
        acc += p.component_loss(i, x)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Mean component gradient over a batch, averaged in the tangent space at `x`
/// before any transport.
pub fn batch_grad(
    p: &dyn Problem,
    x: &ManifoldPoint,
    batch: &[usize],
) -> Result<TangentVector, ProblemError> {
    if batch.is_empty() {
        return Err(ProblemError::EmptyBatch);
    }
    let mut acc: Option<DMatrix<f64>> = None;
    for &i in batch {
        let g = p.component_grad(i, x)?;
        match &mut acc {
            None => acc = Some(g.coords().clone()),
            Some(a) => *a += g.coords(),
        }
    }
    let coords = acc.unwrap() / batch.len() as f64;
    Ok(TangentVector::new(x.clone(), coords)?)
}

/// Full objective f(x) = (1/n)·Σᵢ fᵢ(x).
pub fn full_loss(p: &dyn Problem, x: &ManifoldPoint) -> Result<f64, ProblemError> {
    let batch: Vec<usize> = (0..p.num_components()).collect();
    batch_loss(p, x, &batch)
}

/// Full Riemannian gradient ∇f(x) = (1/n)·Σᵢ ∇fᵢ(x).
pub fn full_grad(p: &dyn Problem, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
    let batch: Vec<usize> = (0..p.num_components()).collect();
    batch_grad(p, x, &batch)
}

/// Empirical estimates of the smoothness constants the convergence schedules
/// need: the geodesic gradient-Lipschitz constant L and the stochastic
/// gradient variance bound σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimates {
    pub l_hat: f64,
    pub sigma_hat: f64,
    pub tau_hat: Option<f64>,
}

/// Estimates L and σ by probing:
///
/// - `l_hat` = max over `sample_count` random geodesic pairs (x, y = exp(x,v),
///   ‖v‖ ≤ 0.1) and all components i of ‖∇fᵢ(x) − Γ_{y→x}∇fᵢ(y)‖ / d(x,y);
/// - `sigma_hat` = max over sampled points x of √((1/n)·Σᵢ‖∇fᵢ(x) − ∇f(x)‖²).
///
/// Deterministic given `seed`; probes are drawn sequentially, so increasing
/// `sample_count` never decreases `l_hat`.
pub fn estimate_smoothness(
    p: &dyn Problem,
    sample_count: usize,
    seed: u64,
) -> Result<SmoothnessEstimates, ProblemError> {
    if sample_count < 2 {
        return Err(ProblemError::InvalidData(
            "estimate_smoothness needs sample_count >= 2".into(),
        ));
    }
    let m = p.manifold();
    let n = p.num_components();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l_hat: f64 = 0.0;
    for _ in 0..sample_count {
        let x = m.random_point(&mut rng);
        let norm = rng.random::<f64>() * 0.1;
        let norm = if norm == 0.0 { 0.05 } else { norm };
        let v = m.random_tangent(&x, norm, &mut rng)?;
        let y = m.exp(&x, &v)?;
        let dist = m.distance(&x, &y)?;
        if dist < 1e-12 {
            continue;
        }
        let grads_y: Vec<TangentVector> = (0..n)
            .map(|i| p.component_grad(i, &y))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&TangentVector> = grads_y.iter().collect();
        let moved = m.transport_many(&y, &x, &refs, TransportMode::ExactGeodesic)?;
        for (i, gy) in moved.iter().enumerate() {
            let gx = p.component_grad(i, &x)?;
            let ratio = gx.sub(gy)?.norm() / dist;
            l_hat = l_hat.max(ratio);
        }
    }

    // Variance probes from an independent stream so the L probes above stay a
    // prefix sequence in sample_count.
    let mut rng_s = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let sigma_points = (sample_count / 8).max(2);
    let mut sigma_hat: f64 = 0.0;
    for _ in 0..sigma_points {
        let x = m.random_point(&mut rng_s);
        let grads: Vec<TangentVector> = (0..n)
            .map(|i| p.component_grad(i, &x))
            .collect::<Result<_, _>>()?;
        let mut mean = x.zero_tangent();
        for g in &grads {
            mean.axpy(1.0 / n as f64, g)?;
        }
        let var: f64 = grads
            .iter()
            .map(|g| {
                let d = g.sub(&mean).expect("same base");
                d.norm().powi(2)
            })
            .sum::<f64>()
            / n as f64;
        sigma_hat = sigma_hat.max(var.sqrt());
    }

    Ok(SmoothnessEstimates {
        l_hat,
        sigma_hat,
        tau_hat: None,
    })
}

/// Wrapper that counts component evaluations, used by the IFO-accounting
/// instrumentation tests.
pub struct CountedProblem<'a> {
    inner: &'a dyn Problem,
    grad_evals: AtomicU64,
    loss_evals: AtomicU64,
}

impl<'a> CountedProblem<'a> {
    pub fn new(inner: &'a dyn Problem) -> Self {
        CountedProblem {
            inner,
            grad_evals: AtomicU64::new(0),
            loss_evals: AtomicU64::new(0),
        }
    }

    /// Number of component-gradient retrievals so far (the IFO measure).
    pub fn grad_evals(&self) -> u64 {
        self.grad_evals.load(Ordering::Relaxed)
    }

    pub fn loss_evals(&self) -> u64 {
        self.loss_evals.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.grad_evals.store(0, Ordering::Relaxed);
        self.loss_evals.store(0, Ordering::Relaxed);
    }
}

impl Problem for CountedProblem<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn manifold(&self) -> ManifoldKind {
        self.inner.manifold()
    }

    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError> {
        self.loss_evals.fetch_add(1, Ordering::Relaxed);
        self.inner.component_loss(i, x)
    }

    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
        self.grad_evals.fetch_add(1, Ordering::Relaxed);
        self.inner.component_grad(i, x)
    }

    fn known_optimum(&self) -> Option<f64> {
        self.inner.known_optimum()
    }

    fn objective_lower_bound(&self) -> Option<f64> {
        self.inner.objective_lower_bound()
    }
}
