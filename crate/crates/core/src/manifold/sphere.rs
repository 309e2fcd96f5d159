//! Coordinate-level geometry of the unit sphere S^{d−1} ⊂ R^d, points stored
//! as d×1 column matrices.

use nalgebra::DMatrix;

use crate::error::GeometryError;
use crate::manifold::tol;

pub(crate) fn membership_defect(x: &DMatrix<f64>) -> f64 {
    (x.norm() - 1.0).abs()
}

pub(crate) fn project_tangent(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - x * x.dot(g)
}

pub(crate) fn exp(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let theta = v.norm();
    if theta == 0.0 {
        return x.clone();
    }
    let mut res = x * theta.cos() + v * (theta.sin() / theta);
    if membership_defect(&res) > tol::REORTH_TRIGGER {
        res /= res.norm();
    }
    res
}

pub(crate) fn log(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let c = x.dot(z).clamp(-1.0, 1.0);
    let perp = z - x * c;
    let n = perp.norm();
    let theta = n.atan2(c);
    if theta == 0.0 {
        return Ok(DMatrix::zeros(x.nrows(), 1));
    }
    if 1.0 + c <= 1e-12 {
        return Err(GeometryError::CutLocus(
            "antipodal points on the sphere".into(),
        ));
    }
    Ok(perp * (theta / n))
}

pub(crate) fn distance(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64, GeometryError> {
    let c = x.dot(z).clamp(-1.0, 1.0);
    if 1.0 + c <= 1e-12 {
        return Err(GeometryError::CutLocus(
            "antipodal points on the sphere".into(),
        ));
    }
    let perp = z - x * c;
    Ok(perp.norm().atan2(c))
}

/// Parallel transport of `w` from T_x to T_z along the connecting geodesic.
pub(crate) fn transport(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GeometryError> {
    let u = log(x, z)?;
    let theta = u.norm();
    if theta == 0.0 {
        return Ok(w.clone());
    }
    let e = &u / theta;
    let a = e.dot(w);
    Ok(w + (e * (theta.cos() - 1.0) - x * theta.sin()) * a)
}

pub(crate) fn retract(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let s = x + v;
    let n = s.norm();
    s / n
}
