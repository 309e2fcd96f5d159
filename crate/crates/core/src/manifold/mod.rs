//! Riemannian geometry primitives: exponential map, logarithm, parallel
//! transport, tangent projection, inner product, geodesic distance, and
//! cheaper retraction/vector-transport substitutes, for the Grassmann,
//! sphere, and Euclidean manifolds.
//!
//! All operations are pure functions of their inputs; the types are immutable
//! after construction and safe to share across threads.

mod grassmann;
mod sphere;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::GeometryError;

pub(crate) use grassmann::qr_orthonormalize;

/// Numerical tolerances for the geometry layer, kept in one place.
pub mod tol {
    /// Max allowed ‖UᵀU − I‖_F for a Grassmann point.
    pub const MEMBERSHIP_GRASSMANN: f64 = 1e-10;
    /// Max allowed |‖x‖ − 1| for a sphere point.
    pub const MEMBERSHIP_SPHERE: f64 = 1e-12;
    /// Max allowed ‖Uᵀv‖_F for a Grassmann tangent (horizontality).
    pub const TANGENCY_GRASSMANN: f64 = 1e-10;
    /// Max allowed |xᵀv| for a sphere tangent.
    pub const TANGENCY_SPHERE: f64 = 1e-12;
    /// Membership drift above which exp/retract re-orthonormalizes its result.
    pub const REORTH_TRIGGER: f64 = 1e-12;
}

/// Which matrix manifold a point lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    /// Gr(k,d): k-dimensional subspaces of R^d, represented by d×k
    /// orthonormal frames with horizontal tangents.
    Grassmann { d: usize, k: usize },
    /// Unit sphere in R^d.
    Sphere { d: usize },
    /// Flat R^d; every operation reduces to vector arithmetic.
    Euclidean { d: usize },
}

/// How tangent vectors are moved between tangent spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    /// Parallel transport along the connecting geodesic; preserves inner
    /// products and norms.
    ExactGeodesic,
    /// Orthogonal projection onto the destination tangent space; first-order
    /// accurate, not isometric.
    ProjectionVectorTransport,
}

impl ManifoldKind {
    pub fn grassmann(d: usize, k: usize) -> Result<Self, GeometryError> {
        if k < 1 || k >= d {
            return Err(GeometryError::InvalidManifold(format!(
                "Grassmann requires 1 <= k < d, got d={d}, k={k}"
            )));
        }
        Ok(ManifoldKind::Grassmann { d, k })
    }

    pub fn sphere(d: usize) -> Result<Self, GeometryError> {
        if d < 2 {
            return Err(GeometryError::InvalidManifold(format!(
                "Sphere requires d >= 2, got d={d}"
            )));
        }
        Ok(ManifoldKind::Sphere { d })
    }

    pub fn euclidean(d: usize) -> Result<Self, GeometryError> {
        if d < 1 {
            return Err(GeometryError::InvalidManifold(
                "Euclidean requires d >= 1".into(),
            ));
        }
        Ok(ManifoldKind::Euclidean { d })
    }

    /// Shape (rows, cols) of the coordinate matrix of a point.
    pub fn point_shape(&self) -> (usize, usize) {
        match *self {
            ManifoldKind::Grassmann { d, k } => (d, k),
            ManifoldKind::Sphere { d } | ManifoldKind::Euclidean { d } => (d, 1),
        }
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<(), GeometryError> {
        let (r, c) = self.point_shape();
        if m.nrows() != r || m.ncols() != c {
            return Err(GeometryError::ShapeMismatch {
                expected_rows: r,
                expected_cols: c,
                got_rows: m.nrows(),
                got_cols: m.ncols(),
            });
        }
        Ok(())
    }

    fn membership_defect(&self, coords: &DMatrix<f64>) -> f64 {
        match self {
            ManifoldKind::Grassmann { .. } => grassmann::membership_defect(coords),
            ManifoldKind::Sphere { .. } => sphere::membership_defect(coords),
            ManifoldKind::Euclidean { .. } => 0.0,
        }
    }

    fn membership_tol(&self) -> f64 {
        match self {
            ManifoldKind::Grassmann { .. } => tol::MEMBERSHIP_GRASSMANN,
            ManifoldKind::Sphere { .. } => tol::MEMBERSHIP_SPHERE,
            ManifoldKind::Euclidean { .. } => f64::INFINITY,
        }
    }

    fn tangency_defect(&self, base: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        match self {
            ManifoldKind::Grassmann { .. } => base.tr_mul(v).norm(),
            ManifoldKind::Sphere { .. } => base.dot(v).abs(),
            ManifoldKind::Euclidean { .. } => 0.0,
        }
    }

    fn tangency_tol(&self) -> f64 {
        match self {
            ManifoldKind::Grassmann { .. } => tol::TANGENCY_GRASSMANN,
            ManifoldKind::Sphere { .. } => tol::TANGENCY_SPHERE,
            ManifoldKind::Euclidean { .. } => f64::INFINITY,
        }
    }

    /// Draws a uniformly distributed point (Haar for Grassmann/sphere,
    /// standard normal coordinates for Euclidean).
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> ManifoldPoint {
        let (r, c) = self.point_shape();
        let g = DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal));
        let coords = match self {
            ManifoldKind::Grassmann { .. } => qr_orthonormalize(&g),
            ManifoldKind::Sphere { .. } => {
                let n = g.norm();
                g / n
            }
            ManifoldKind::Euclidean { .. } => g,
        };
        ManifoldPoint {
            kind: *self,
            coords,
        }
    }

    /// Draws a random tangent vector at `x` with the requested norm
    /// (Gaussian direction projected onto the tangent space).
    pub fn random_tangent<R: Rng>(
        &self,
        x: &ManifoldPoint,
        norm: f64,
        rng: &mut R,
    ) -> Result<TangentVector, GeometryError> {
        let (r, c) = self.point_shape();
        loop {
            let g = DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal));
            let v = self.project_tangent(x, &g)?;
            let n = v.norm();
            if n > 1e-12 {
                return Ok(v.scaled(norm / n));
            }
        }
    }

    /// Orthogonal projection of an ambient matrix onto the tangent space at
    /// `x` (converts ambient Euclidean gradients to Riemannian gradients).
    /// Idempotent.
    pub fn project_tangent(
        &self,
        x: &ManifoldPoint,
        g: &DMatrix<f64>,
    ) -> Result<TangentVector, GeometryError> {
        self.expect_point(x)?;
        self.check_shape(g)?;
        let coords = match self {
            ManifoldKind::Grassmann { .. } => grassmann::project_tangent(&x.coords, g),
            ManifoldKind::Sphere { .. } => sphere::project_tangent(&x.coords, g),
            ManifoldKind::Euclidean { .. } => g.clone(),
        };
        Ok(TangentVector {
            base: x.clone(),
            coords,
        })
    }

    /// Exponential map: follows the geodesic leaving `x` with velocity `v`
    /// for unit time. The result satisfies the membership invariant.
    pub fn exp(
        &self,
        x: &ManifoldPoint,
        v: &TangentVector,
    ) -> Result<ManifoldPoint, GeometryError> {
        self.expect_point(x)?;
        v.expect_base(x)?;
        let coords = match self {
            ManifoldKind::Grassmann { .. } => grassmann::exp(&x.coords, &v.coords),
            ManifoldKind::Sphere { .. } => sphere::exp(&x.coords, &v.coords),
            ManifoldKind::Euclidean { .. } => &x.coords + &v.coords,
        };
        Ok(ManifoldPoint {
            kind: *self,
            coords,
        })
    }

    /// Inverse exponential map: the tangent vector at `x` pointing to `z`
    /// along the connecting geodesic, with ‖log(x,z)‖ = distance(x,z).
    ///
    /// For Grassmann the recovered representative exp(x, log(x,z)) spans the
    /// same subspace as `z` but may differ by an orthogonal frame rotation;
    /// horizontal tangents make every objective invariant to that rotation.
    pub fn log(
        &self,
        x: &ManifoldPoint,
        z: &ManifoldPoint,
    ) -> Result<TangentVector, GeometryError> {
        self.expect_point(x)?;
        self.expect_point(z)?;
        let coords = match self {
            ManifoldKind::Grassmann { .. } => {
                if x.coords == z.coords {
                    DMatrix::zeros(x.coords.nrows(), x.coords.ncols())
                } else {
                    grassmann::log_factors(&x.coords, &z.coords)?.tangent()
                }
            }
            ManifoldKind::Sphere { .. } => sphere::log(&x.coords, &z.coords)?,
            ManifoldKind::Euclidean { .. } => &z.coords - &x.coords,
        };
        Ok(TangentVector {
            base: x.clone(),
            coords,
        })
    }

    /// Geodesic distance ‖log(x,z)‖.
    pub fn distance(&self, x: &ManifoldPoint, z: &ManifoldPoint) -> Result<f64, GeometryError> {
        self.expect_point(x)?;
        self.expect_point(z)?;
        match self {
            ManifoldKind::Grassmann { .. } => {
                if x.coords == z.coords {
                    Ok(0.0)
                } else {
                    Ok(grassmann::log_factors(&x.coords, &z.coords)?.distance())
                }
            }
            ManifoldKind::Sphere { .. } => sphere::distance(&x.coords, &z.coords),
            ManifoldKind::Euclidean { .. } => Ok((&z.coords - &x.coords).norm()),
        }
    }

    /// Moves the tangent vector `v` (based at `x`) into the tangent space at
    /// `z`. `ExactGeodesic` is isometric; `ProjectionVectorTransport` is the
    /// cheap non-isometric substitute.
    pub fn transport(
        &self,
        x: &ManifoldPoint,
        z: &ManifoldPoint,
        v: &TangentVector,
        mode: TransportMode,
    ) -> Result<TangentVector, GeometryError> {
        self.expect_point(x)?;
        self.expect_point(z)?;
        v.expect_base(x)?;
        if x.coords == z.coords {
            let mut out = v.clone();
            out.base = z.clone();
            return Ok(out);
        }
        let coords = match (self, mode) {
            (ManifoldKind::Euclidean { .. }, _) => v.coords.clone(),
            (_, TransportMode::ProjectionVectorTransport) => match self {
                ManifoldKind::Grassmann { .. } => grassmann::project_tangent(&z.coords, &v.coords),
                ManifoldKind::Sphere { .. } => sphere::project_tangent(&z.coords, &v.coords),
                ManifoldKind::Euclidean { .. } => unreachable!(),
            },
            (ManifoldKind::Grassmann { .. }, TransportMode::ExactGeodesic) => {
                let f = grassmann::log_factors(&x.coords, &z.coords)?;
                grassmann::transport_with(&x.coords, &f, &v.coords)
            }
            (ManifoldKind::Sphere { .. }, TransportMode::ExactGeodesic) => {
                sphere::transport(&x.coords, &z.coords, &v.coords)?
            }
        };
        // Accumulated rounding can push the result slightly off the destination
        // tangent space; clean it up so the tangency invariant stays machine-true.
        let coords = match self {
            ManifoldKind::Grassmann { .. } => grassmann::project_tangent(&z.coords, &coords),
            ManifoldKind::Sphere { .. } => sphere::project_tangent(&z.coords, &coords),
            ManifoldKind::Euclidean { .. } => coords,
        };
        Ok(TangentVector {
            base: z.clone(),
            coords,
        })
    }

    /// Transports several tangent vectors at once; the geodesic is solved a
    /// single time.
    pub fn transport_many(
        &self,
        x: &ManifoldPoint,
        z: &ManifoldPoint,
        vs: &[&TangentVector],
        mode: TransportMode,
    ) -> Result<Vec<TangentVector>, GeometryError> {
        if let (ManifoldKind::Grassmann { .. }, TransportMode::ExactGeodesic) = (self, mode) {
            self.expect_point(x)?;
            self.expect_point(z)?;
            if x.coords != z.coords {
                let f = grassmann::log_factors(&x.coords, &z.coords)?;
                return vs
                    .iter()
                    .map(|v| {
                        v.expect_base(x)?;
                        let c = grassmann::transport_with(&x.coords, &f, &v.coords);
                        Ok(TangentVector {
                            base: z.clone(),
                            coords: grassmann::project_tangent(&z.coords, &c),
                        })
                    })
                    .collect();
            }
        }
        vs.iter().map(|v| self.transport(x, z, v, mode)).collect()
    }

    /// Riemannian inner product of two tangent vectors at the same base
    /// point (the embedded Frobenius metric for all three manifolds).
    pub fn inner(&self, u: &TangentVector, v: &TangentVector) -> Result<f64, GeometryError> {
        if u.base != v.base {
            return Err(GeometryError::BaseMismatch);
        }
        Ok(u.coords.dot(&v.coords))
    }

    pub fn norm(&self, v: &TangentVector) -> f64 {
        v.coords.norm()
    }

    /// First-order retraction: QR for Grassmann, metric projection for the
    /// sphere, addition for Euclidean. Agrees with exp to O(‖v‖²).
    pub fn retract(
        &self,
        x: &ManifoldPoint,
        v: &TangentVector,
    ) -> Result<ManifoldPoint, GeometryError> {
        self.expect_point(x)?;
        v.expect_base(x)?;
        let coords = match self {
            ManifoldKind::Grassmann { .. } => {
                if v.coords.iter().all(|&c| c == 0.0) {
                    x.coords.clone()
                } else {
                    qr_orthonormalize(&(&x.coords + &v.coords))
                }
            }
            ManifoldKind::Sphere { .. } => {
                if v.coords.iter().all(|&c| c == 0.0) {
                    x.coords.clone()
                } else {
                    sphere::retract(&x.coords, &v.coords)
                }
            }
            ManifoldKind::Euclidean { .. } => &x.coords + &v.coords,
        };
        Ok(ManifoldPoint {
            kind: *self,
            coords,
        })
    }

    fn expect_point(&self, x: &ManifoldPoint) -> Result<(), GeometryError> {
        if x.kind != *self {
            return Err(GeometryError::ManifoldMismatch);
        }
        Ok(())
    }
}

/// A point on a matrix manifold: a d×k column-orthonormal matrix for
/// Grassmann, a unit d-vector for the sphere, a plain d-vector for Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    kind: ManifoldKind,
    coords: DMatrix<f64>,
}

impl ManifoldPoint {
    /// Checks shape and the membership invariant.
    pub fn new(kind: ManifoldKind, coords: DMatrix<f64>) -> Result<Self, GeometryError> {
        kind.check_shape(&coords)?;
        let defect = kind.membership_defect(&coords);
        if defect > kind.membership_tol() {
            return Err(GeometryError::NotOnManifold { defect });
        }
        Ok(ManifoldPoint { kind, coords })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// ‖UᵀU − I‖_F (Grassmann) or |‖x‖ − 1| (sphere); 0 for Euclidean.
    pub fn membership_defect(&self) -> f64 {
        self.kind.membership_defect(&self.coords)
    }

    /// The zero vector of the tangent space at this point.
    pub fn zero_tangent(&self) -> TangentVector {
        TangentVector {
            base: self.clone(),
            coords: DMatrix::zeros(self.coords.nrows(), self.coords.ncols()),
        }
    }
}

/// A tangent vector in ambient coordinates, tied to its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: DMatrix<f64>,
}

impl TangentVector {
    /// Checks shape and the tangency invariant at `base`.
    pub fn new(base: ManifoldPoint, coords: DMatrix<f64>) -> Result<Self, GeometryError> {
        base.kind.check_shape(&coords)?;
        let defect = base.kind.tangency_defect(&base.coords, &coords);
        if defect > base.kind.tangency_tol() {
            return Err(GeometryError::NotTangent { defect });
        }
        Ok(TangentVector { base, coords })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }

    /// ‖Uᵀv‖_F (Grassmann) or |xᵀv| (sphere); 0 for Euclidean.
    pub fn tangency_defect(&self) -> f64 {
        self.base
            .kind
            .tangency_defect(&self.base.coords, &self.coords)
    }

    pub fn scaled(&self, c: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            coords: &self.coords * c,
        }
    }

    pub fn add(&self, other: &TangentVector) -> Result<TangentVector, GeometryError> {
        self.expect_base(&other.base)?;
        Ok(TangentVector {
            base: self.base.clone(),
            coords: &self.coords + &other.coords,
        })
    }

    pub fn sub(&self, other: &TangentVector) -> Result<TangentVector, GeometryError> {
        self.expect_base(&other.base)?;
        Ok(TangentVector {
            base: self.base.clone(),
            coords: &self.coords - &other.coords,
        })
    }

    /// In-place `self += c · other`; bases must match.
    pub fn axpy(&mut self, c: f64, other: &TangentVector) -> Result<(), GeometryError> {
        self.expect_base(&other.base)?;
        self.coords.zip_apply(&other.coords, |a, b| *a += c * b);
        Ok(())
    }

    fn expect_base(&self, x: &ManifoldPoint) -> Result<(), GeometryError> {
        if self.base != *x {
            return Err(GeometryError::BaseMismatch);
        }
        Ok(())
    }
}
