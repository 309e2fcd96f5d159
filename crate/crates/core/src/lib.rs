//! Riemannian variance-reduced stochastic optimization on matrix manifolds.
//!
//! The crate provides:
//! - geometry primitives (exp/log/parallel transport/retraction) for the
//!   Grassmann, sphere, and Euclidean manifolds ([`manifold`]);
//! - finite-sum benchmark problems: k-PCA on the Grassmann manifold, low-rank
//!   matrix completion, and Euclidean quadratics ([`problems`]);
//! - the recursive SPIDER gradient estimator with parallel transport
//!   ([`spider`]);
//! - the R-SPIDER optimizer family with analysis-prescribed schedules plus
//!   R-SGD / R-SVRG / R-SRG baselines ([`optim`]);
//! - LibSVM ingestion and synthetic dataset generators ([`data`]);
//! - independent verification oracles used by the test and acceptance suites
//!   ([`oracle`]).

pub mod data;
pub mod error;
pub mod manifold;
pub mod optim;
pub mod oracle;
pub mod problems;
pub mod spider;
