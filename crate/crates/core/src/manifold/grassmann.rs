//! Coordinate-level geometry of the Grassmann manifold Gr(k,d), represented by
//! d×k orthonormal frames U (UᵀU = I) with horizontal tangents (UᵀΔ = 0).
//!
//! Closed forms used throughout (thin SVD Δ = P·diag(θ)·Qᵀ of a tangent):
//!   exp_U(Δ)      = U·Q·cos(θ)·Qᵀ + P·sin(θ)·Qᵀ
//!   log_U(Z)      = P·arctan(s)·Qᵀ where (Z − U·UᵀZ)(UᵀZ)⁻¹ = P·diag(s)·Qᵀ
//!   Γ_{U→exp}(W)  = (−U·Q·sin(θ)·Pᵀ + P·cos(θ)·Pᵀ + (I − P·Pᵀ))·W

use nalgebra::{DMatrix, DVector};

use crate::error::GeometryError;
use crate::manifold::tol;

/// Thin SVD A = U·diag(s)·Vᵀ in canonical form: singular values descending,
/// first nonzero entry of each left singular vector nonnegative. The
/// canonicalization makes transport reproducible across platforms.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi SVD for tall-skinny matrices (k is the subspace
/// dimension here, so k is small). Chosen over the general-purpose
/// bidiagonalization solver because the geometry needs high *relative*
/// accuracy on near-rank-deficient tangents, where the library SVD can
/// return inaccurate factorizations.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let d = a.nrows();
    let k = a.ncols();
    debug_assert!(d >= k, "thin_svd expects a tall matrix");
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(k, k);

    const TOL: f64 = 1e-15;
    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let mut converged = true;
        for i in 0..k {
            for j in (i + 1)..k {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..d {
                    let x = u[(r, i)];
                    let y = u[(r, j)];
                    aii += x * x;
                    ajj += y * y;
                    aij += x * y;
                }
                if aij == 0.0 || aij.abs() <= TOL * (aii * ajj).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..d {
                    let x = u[(r, i)];
                    let y = u[(r, j)];
                    u[(r, i)] = cs * x - sn * y;
                    u[(r, j)] = sn * x + cs * y;
                }
                for r in 0..k {
                    let x = v[(r, i)];
                    let y = v[(r, j)];
                    v[(r, i)] = cs * x - sn * y;
                    v[(r, j)] = sn * x + cs * y;
                }
            }
        }
        if converged {
            break;
        }
    }

    // Singular values are the column norms; sort descending.
    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = (0..k).map(|i| u.column(i).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut s = DVector::zeros(k);
    let u_work = u.clone();
    let v_work = v.clone();
    for (new, &old) in order.iter().enumerate() {
        s[new] = norms[old];
        u.set_column(new, &u_work.column(old));
        v.set_column(new, &v_work.column(old));
    }

    // Normalize; exactly-zero columns get a Gram-Schmidt completion (they
    // only ever multiply f(0) = 0 spectral coefficients downstream).
    for i in 0..k {
        if s[i] > 0.0 {
            u.column_mut(i).unscale_mut(s[i]);
        } else {
            complete_column(&mut u, i);
        }
    }

    // Joint sign fix: flipping (uᵢ, vᵢ) together leaves the product unchanged.
    for i in 0..k {
        let col = u.column(i);
        if let Some(lead) = col.iter().find(|x| x.abs() > 1e-14) {
            if *lead < 0.0 {
                u.column_mut(i).neg_mut();
                v.column_mut(i).neg_mut();
            }
        }
    }

    ThinSvd { u, s, v }
}

/// Replaces column `idx` with a unit vector orthogonal to all other columns.
fn complete_column(u: &mut DMatrix<f64>, idx: usize) {
    let d = u.nrows();
    let k = u.ncols();
    for cand in 0..d {
        let mut col = DMatrix::zeros(d, 1);
        col[(cand, 0)] = 1.0;
        for other in 0..k {
            if other == idx {
                continue;
            }
            let proj: f64 = (0..d).map(|r| u[(r, other)] * col[(r, 0)]).sum();
            for r in 0..d {
                let v = u[(r, other)];
                col[(r, 0)] -= proj * v;
            }
        }
        let n = col.norm();
        if n > 0.5 {
            for r in 0..d {
                u[(r, idx)] = col[(r, 0)] / n;
            }
            return;
        }
    }
}

/// Q factor of the QR decomposition with the sign of each column fixed so the
/// corresponding diagonal of R is nonnegative. For a nearly orthonormal input
/// this returns a nearby exactly-orthonormal frame.
pub(crate) fn qr_orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Frobenius defect ‖UᵀU − I‖_F of the orthonormality constraint.
pub(crate) fn membership_defect(u: &DMatrix<f64>) -> f64 {
    let k = u.ncols();
    let gram = u.tr_mul(u);
    (gram - DMatrix::identity(k, k)).norm()
}

pub(crate) fn project_tangent(u: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - u * u.tr_mul(g)
}

pub(crate) fn exp(u: &DMatrix<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
    if delta.iter().all(|&x| x == 0.0) {
        return u.clone();
    }
    let ThinSvd { u: p, s, v: q } = thin_svd(delta);
    let cos = DMatrix::from_diagonal(&s.map(f64::cos));
    let sin = DMatrix::from_diagonal(&s.map(f64::sin));
    let qt = q.transpose();
    let mut res = u * &q * cos * &qt + p * sin * qt;
    if membership_defect(&res) > tol::REORTH_TRIGGER {
        res = qr_orthonormalize(&res);
    }
    res
}

/// The factors of log_U(Z); reused by `transport` so the geodesic is only
/// solved once per transport.
pub(crate) struct LogFactors {
    pub p: DMatrix<f64>,
    /// Principal angles θᵢ = arctan(sᵢ), descending.
    pub theta: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl LogFactors {
    pub(crate) fn tangent(&self) -> DMatrix<f64> {
        &self.p * DMatrix::from_diagonal(&self.theta) * self.q.transpose()
    }

    pub(crate) fn distance(&self) -> f64 {
        self.theta.norm()
    }
}

pub(crate) fn log_factors(u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<LogFactors, GeometryError> {
    let m = u.tr_mul(z);
    // Singular UᵀZ means a principal angle of π/2: the geodesic is not unique.
    let sigma_min = thin_svd(&m).s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if sigma_min < 1e-12 {
        return Err(GeometryError::CutLocus(format!(
            "principal angle at or beyond pi/2 (sigma_min(U^T Z) = {sigma_min:.3e})"
        )));
    }
    // W = (Z − U·M)·M⁻¹, solved as Mᵀ·Wᵀ = (Z − U·M)ᵀ.
    let g = z - u * &m;
    let w_t = m
        .transpose()
        .lu()
        .solve(&g.transpose())
        .ok_or_else(|| GeometryError::CutLocus("U^T Z is numerically singular".into()))?;
    let ThinSvd { u: p, s, v: q } = thin_svd(&w_t.transpose());
    Ok(LogFactors {
        p,
        theta: s.map(f64::atan),
        q,
    })
}

/// Parallel transport of `w` from T_U along the geodesic with direction
/// factors `f` (i.e. toward exp_U(log)). Isometric.
pub(crate) fn transport_with(u: &DMatrix<f64>, f: &LogFactors, w: &DMatrix<f64>) -> DMatrix<f64> {
    let a = f.p.tr_mul(w); // k×k
    let sin = DMatrix::from_diagonal(&f.theta.map(f64::sin));
    let cos_m1 = DMatrix::from_diagonal(&f.theta.map(|t| t.cos() - 1.0));
    w - u * (&f.q * sin * &a) + &f.p * (cos_m1 * &a)
}
