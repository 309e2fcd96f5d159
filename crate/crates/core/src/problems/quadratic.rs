//! Euclidean finite-sum quadratics fᵢ(x) = ½·xᵀAᵢx − bᵢᵀx, used as a
//! gradient-dominated objective with a closed-form optimum: a strongly convex
//! quadratic with μ = λ_min(Ā) is τ-gradient dominated with τ = 1/(2μ).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::ProblemError;
use crate::manifold::{qr_orthonormalize, ManifoldKind, ManifoldPoint, TangentVector};
use crate::problems::{check_index, Problem};

enum CurvatureStore {
    Shared(DMatrix<f64>),
    PerComponent(Vec<DMatrix<f64>>),
}

pub struct QuadraticProblem {
    curvatures: CurvatureStore,
    offsets: Vec<DVector<f64>>,
    d: usize,
    manifold: ManifoldKind,
    mean_mat: DMatrix<f64>,
    optimum: Option<f64>,
    minimizer: Option<DVector<f64>>,
    strong_convexity: Option<f64>,
}

impl QuadraticProblem {
    /// One curvature matrix per component.
    pub fn new(mats: Vec<DMatrix<f64>>, offsets: Vec<DVector<f64>>) -> Result<Self, ProblemError> {
        if mats.len() != offsets.len() {
            return Err(ProblemError::InvalidData(
                "matrix/offset count mismatch".into(),
            ));
        }
        Self::build(CurvatureStore::PerComponent(mats), offsets)
    }

    /// All components share the curvature matrix; only the linear terms vary.
    pub fn with_shared_curvature(
        a: DMatrix<f64>,
        offsets: Vec<DVector<f64>>,
    ) -> Result<Self, ProblemError> {
        Self::build(CurvatureStore::Shared(a), offsets)
    }

    fn build(curvatures: CurvatureStore, offsets: Vec<DVector<f64>>) -> Result<Self, ProblemError> {
        if offsets.is_empty() {
            return Err(ProblemError::InvalidData("no components".into()));
        }
        let d = offsets[0].len();
        if offsets.iter().any(|b| b.len() != d) {
            return Err(ProblemError::InvalidData(
                "offset dimension mismatch".into(),
            ));
        }
        let n = offsets.len();
        let check = |m: &DMatrix<f64>| -> Result<(), ProblemError> {
            if m.nrows() != d || m.ncols() != d {
                return Err(ProblemError::InvalidData("curvature shape mismatch".into()));
            }
            if (m - m.transpose()).norm() > 1e-10 * m.norm().max(1.0) {
                return Err(ProblemError::InvalidData("curvature not symmetric".into()));
            }
            Ok(())
        };
        let mean_mat = match &curvatures {
            CurvatureStore::Shared(a) => {
                check(a)?;
                a.clone()
            }
            CurvatureStore::PerComponent(mats) => {
                if mats.len() != n {
                    return Err(ProblemError::InvalidData("matrix count mismatch".into()));
                }
                let mut acc = DMatrix::zeros(d, d);
                for m in mats {
                    check(m)?;
                    acc += m;
                }
                acc / n as f64
            }
        };
        let mean_offset: DVector<f64> =
            offsets.iter().fold(DVector::zeros(d), |acc, b| acc + b) / n as f64;

        // Closed-form optimum when the mean curvature is positive definite.
        let (optimum, minimizer, strong_convexity) = match Cholesky::new(mean_mat.clone()) {
            Some(chol) => {
                let x_star = chol.solve(&mean_offset);
                let f_star = -0.5 * mean_offset.dot(&x_star);
                let mu = mean_mat
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                (Some(f_star), Some(x_star), Some(mu))
            }
            None => (None, None, None),
        };

        let manifold = ManifoldKind::euclidean(d).expect("d >= 1");
        Ok(QuadraticProblem {
            curvatures,
            offsets,
            d,
            manifold,
            mean_mat,
            optimum,
            minimizer,
            strong_convexity,
        })
    }

    /// Random strongly convex instance: shared curvature Q·diag(μ..L)·Qᵀ with
    /// a Haar-random Q, offsets bᵢ = b̄ + spread·zᵢ. Deterministic given seed.
    pub fn gaussian(
        d: usize,
        n: usize,
        mu: f64,
        l: f64,
        offset_spread: f64,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        if !(0.0 < mu && mu <= l) || d == 0 || n == 0 {
            return Err(ProblemError::InvalidData(
                "need 0 < mu <= l, d >= 1, n >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = qr_orthonormalize(&DMatrix::from_fn(d, d, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let spectrum = DVector::from_fn(d, |i, _| {
            if d == 1 {
                l
            } else {
                mu + (l - mu) * i as f64 / (d - 1) as f64
            }
        });
        let a = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let b_mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let offsets = (0..n)
            .map(|_| {
                &b_mean
                    + DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
                        * offset_spread
            })
            .collect();
        Self::with_shared_curvature(a, offsets)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn minimizer(&self) -> Option<ManifoldPoint> {
        self.minimizer.as_ref().map(|x| {
            ManifoldPoint::new(
                self.manifold,
                DMatrix::from_column_slice(self.d, 1, x.as_slice()),
            )
            .expect("euclidean point")
        })
    }

    /// λ_min of the mean curvature, when positive definite.
    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    /// Gradient-dominance constant τ = 1/(2μ) for strongly convex instances.
    pub fn tau(&self) -> Option<f64> {
        self.strong_convexity.map(|mu| 1.0 / (2.0 * mu))
    }

    pub fn mean_curvature(&self) -> &DMatrix<f64> {
        &self.mean_mat
    }

    fn mat(&self, i: usize) -> &DMatrix<f64> {
        match &self.curvatures {
            CurvatureStore::Shared(a) => a,
            CurvatureStore::PerComponent(mats) => &mats[i],
        }
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    fn num_components(&self) -> usize {
        self.offsets.len()
    }

    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError> {
        check_index(self, i)?;
        let xv = x.coords().column(0);
        let ax = self.mat(i) * xv;
        Ok(0.5 * xv.dot(&ax) - self.offsets[i].dot(&xv))
    }

    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
        check_index(self, i)?;
        let xv = x.coords().column(0);
        let g = self.mat(i) * xv - &self.offsets[i];
        let coords = DMatrix::from_column_slice(self.d, 1, g.as_slice());
        Ok(TangentVector::new(x.clone(), coords)?)
    }

    fn known_optimum(&self) -> Option<f64> {
        self.optimum
    }
}
