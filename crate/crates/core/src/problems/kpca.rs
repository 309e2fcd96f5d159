//! k-PCA on the Grassmann manifold: find the k-dimensional subspace capturing
//! the most sample energy,
//!
//!   f(U) = −(1/n)·Σᵢ ‖Uᵀaᵢ‖²,  U ∈ Gr(k,d),
//!
//! whose minimizer is the span of the k leading eigenvectors of the sample
//! covariance C = (1/n)·Σᵢ aᵢaᵢᵀ, with f* = −Σ_{j≤k} λⱼ(C).

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::ProblemError;
use crate::manifold::{ManifoldKind, ManifoldPoint, TangentVector};
use crate::problems::{check_index, Problem};

/// Row-major sample storage; sparse rows are never densified, the component
/// gradient aᵢ(aᵢᵀU) only touches the stored entries.
enum SampleStore {
    Dense(DMatrix<f64>),
    Sparse {
        rows: Vec<Vec<(u32, f64)>>,
        d: usize,
    },
}

impl SampleStore {
    fn n(&self) -> usize {
        match self {
            SampleStore::Dense(m) => m.nrows(),
            SampleStore::Sparse { rows, .. } => rows.len(),
        }
    }

    fn d(&self) -> usize {
        match self {
            SampleStore::Dense(m) => m.ncols(),
            SampleStore::Sparse { d, .. } => *d,
        }
    }

    fn row_norm(&self, i: usize) -> f64 {
        match self {
            SampleStore::Dense(m) => m.row(i).norm(),
            SampleStore::Sparse { rows, .. } => {
                rows[i].iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
            }
        }
    }

    fn scale_all(&mut self, c: f64) {
        match self {
            SampleStore::Dense(m) => *m *= c,
            SampleStore::Sparse { rows, .. } => {
                for row in rows {
                    for (_, v) in row {
                        *v *= c;
                    }
                }
            }
        }
    }

    /// w = Uᵀaᵢ (length k).
    fn proj_coeffs(&self, i: usize, u: &DMatrix<f64>) -> DVector<f64> {
        match self {
            SampleStore::Dense(m) => {
                let row = m.row(i);
                DVector::from_fn(u.ncols(), |j, _| row.dot(&u.column(j).transpose()))
            }
            SampleStore::Sparse { rows, .. } => {
                let mut w = DVector::zeros(u.ncols());
                for &(idx, v) in &rows[i] {
                    for j in 0..u.ncols() {
                        w[j] += v * u[(idx as usize, j)];
                    }
                }
                w
            }
        }
    }

    /// out += c · aᵢ·wᵀ.
    fn add_scaled_outer(&self, i: usize, w: &DVector<f64>, c: f64, out: &mut DMatrix<f64>) {
        match self {
            SampleStore::Dense(m) => {
                let row = m.row(i);
                for l in 0..out.nrows() {
                    let a = c * row[l];
                    if a != 0.0 {
                        for j in 0..out.ncols() {
                            out[(l, j)] += a * w[j];
                        }
                    }
                }
            }
            SampleStore::Sparse { rows, .. } => {
                for &(idx, v) in &rows[i] {
                    let a = c * v;
                    for j in 0..out.ncols() {
                        out[(idx as usize, j)] += a * w[j];
                    }
                }
            }
        }
    }

    /// C = (1/n)·Σᵢ aᵢaᵢᵀ.
    fn covariance(&self) -> DMatrix<f64> {
        let d = self.d();
        let n = self.n();
        let mut c = DMatrix::zeros(d, d);
        match self {
            SampleStore::Dense(m) => {
                c.gemm_tr(1.0 / n as f64, m, m, 0.0);
            }
            SampleStore::Sparse { rows, .. } => {
                for row in rows {
                    for &(i1, v1) in row {
                        for &(i2, v2) in row {
                            c[(i1 as usize, i2 as usize)] += v1 * v2;
                        }
                    }
                }
                c /= n as f64;
            }
        }
        c
    }
}

pub struct KPcaProblem {
    store: SampleStore,
    k: usize,
    manifold: ManifoldKind,
    /// Factor the raw samples were divided by (1.0 when not normalized).
    scale: f64,
    optimum: OnceLock<f64>,
}

impl KPcaProblem {
    /// Builds the problem from dense samples, one row per sample. With
    /// `normalize`, samples are rescaled so maxᵢ‖aᵢ‖₂ = 1, which keeps the
    /// gradient-Lipschitz constant O(1) across datasets.
    pub fn from_dense(
        samples: DMatrix<f64>,
        k: usize,
        normalize: bool,
    ) -> Result<Self, ProblemError> {
        Self::build(SampleStore::Dense(samples), k, normalize)
    }

    /// Builds the problem from sparse rows of (0-based index, value) pairs.
    pub fn from_sparse_rows(
        rows: Vec<Vec<(u32, f64)>>,
        d: usize,
        k: usize,
        normalize: bool,
    ) -> Result<Self, ProblemError> {
        for row in &rows {
            if row.iter().any(|&(idx, _)| idx as usize >= d) {
                return Err(ProblemError::InvalidData(format!(
                    "feature index out of range (d = {d})"
                )));
            }
        }
        Self::build(SampleStore::Sparse { rows, d }, k, normalize)
    }

    fn build(mut store: SampleStore, k: usize, normalize: bool) -> Result<Self, ProblemError> {
        if store.n() == 0 {
            return Err(ProblemError::InvalidData("no samples".into()));
        }
        let manifold = ManifoldKind::grassmann(store.d(), k)
            .map_err(|e| ProblemError::InvalidData(e.to_string()))?;
        let mut scale = 1.0;
        if normalize {
            let max_norm = (0..store.n())
                .map(|i| store.row_norm(i))
                .fold(0.0f64, f64::max);
            if max_norm == 0.0 {
                return Err(ProblemError::InvalidData("all samples are zero".into()));
            }
            store.scale_all(1.0 / max_norm);
            scale = max_norm;
        }
        Ok(KPcaProblem {
            store,
            k,
            manifold,
            scale,
            optimum: OnceLock::new(),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.store.d()
    }

    pub fn subspace_dim(&self) -> usize {
        self.k
    }

    /// Factor the raw samples were divided by during normalization.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    /// Sample covariance C = (1/n)·Σᵢ aᵢaᵢᵀ of the (scaled) samples.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.store.covariance()
    }

    /// f* = −Σ_{j≤k} λⱼ(C): the negated sum of the k largest covariance
    /// eigenvalues, obtained by eigendecomposition.
    pub fn optimum(&self) -> f64 {
        *self.optimum.get_or_init(|| {
            let mut eig: Vec<f64> = self
                .store
                .covariance()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            -eig.iter().take(self.k).sum::<f64>()
        })
    }

    /// Orthonormal basis of the top-k covariance eigenspace (the SVD ground
    /// truth U*).
    pub fn leading_subspace(&self) -> ManifoldPoint {
        let eig = self.store.covariance().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let d = self.store.d();
        let mut u = DMatrix::zeros(d, self.k);
        for (j, &idx) in order.iter().take(self.k).enumerate() {
            u.set_column(j, &eig.eigenvectors.column(idx));
        }
        ManifoldPoint::new(self.manifold, u).expect("eigenvectors are orthonormal")
    }
}

impl Problem for KPcaProblem {
    fn name(&self) -> &str {
        "kpca"
    }

    fn manifold(&self) -> ManifoldKind {
        self.manifold
    }

    fn num_components(&self) -> usize {
        self.store.n()
    }

    fn component_loss(&self, i: usize, x: &ManifoldPoint) -> Result<f64, ProblemError> {
        check_index(self, i)?;
        let w = self.store.proj_coeffs(i, x.coords());
        Ok(-w.norm_squared())
    }

    fn component_grad(&self, i: usize, x: &ManifoldPoint) -> Result<TangentVector, ProblemError> {
        check_index(self, i)?;
        let w = self.store.proj_coeffs(i, x.coords());
        let mut ambient = DMatrix::zeros(x.coords().nrows(), x.coords().ncols());
        self.store.add_scaled_outer(i, &w, -2.0, &mut ambient);
        Ok(self.manifold.project_tangent(x, &ambient)?)
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(self.optimum())
    }
}

#[cfg(test)]
impl KPcaProblem {
    pub(crate) fn synthetic_for_tests(n: usize, d: usize, k: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = DMatrix::from_fn(n, d, |_, _| rng.sample(rand_distr::StandardNormal));
        KPcaProblem::from_dense(samples, k, true).unwrap()
    }
}
