//! Synthetic instance generators: Gaussian k-PCA data with a geometric
//! covariance spectrum, and masked low-rank matrices for completion. Pure
//! functions of (parameters, seed).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::RawDataset;
use crate::error::DataError;
use crate::problems::{LrmcColumn, LrmcProblem};

/// Gaussian samples with covariance eigenvalues λⱼ = decayʲ along the
/// canonical axes, so the top-k subspace is well separated (decay < 1) or
/// the covariance is isotropic (decay = 1).
pub fn synth_kpca(
    n: usize,
    d: usize,
    k: usize,
    spectrum_decay: f64,
    seed: u64,
) -> Result<RawDataset, DataError> {
    if !(1 <= k && k < d) {
        return Err(DataError::InvalidParams(format!(
            "need 1 <= k < d, got k={k}, d={d}"
        )));
    }
    if !(spectrum_decay > 0.0 && spectrum_decay <= 1.0) {
        return Err(DataError::InvalidParams(format!(
            "spectrum_decay must lie in (0, 1], got {spectrum_decay}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stddevs: Vec<f64> = (0..d)
        .map(|j| spectrum_decay.powi(j as i32).sqrt())
        .collect();
    let rows = (0..n)
        .map(|_| {
            (0..d)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    (j as u32, stddevs[j] * z)
                })
                .collect()
        })
        .collect();
    Ok(RawDataset {
        rows,
        labels: vec![0.0; n],
        d,
    })
}

/// The planted factors behind a synthetic completion instance.
#[derive(Debug, Clone)]
pub struct LrmcGroundTruth {
    /// d×k orthonormal column basis U*.
    pub basis: DMatrix<f64>,
    /// k×n coefficients G*.
    pub coefficients: DMatrix<f64>,
}

/// Masked low-rank observations A = U*·G* + noise·N with a Bernoulli(density)
/// per-entry mask; a column's mask is redrawn until it has at least k
/// observations, which keeps generation deterministic and total.
pub fn synth_lrmc(
    d: usize,
    n: usize,
    k: usize,
    density: f64,
    noise: f64,
    seed: u64,
) -> Result<(LrmcProblem, LrmcGroundTruth), DataError> {
    if !(1 <= k && k < d) {
        return Err(DataError::InvalidParams(format!(
            "need 1 <= k < d, got k={k}, d={d}"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(DataError::InvalidParams(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    if density * (d as f64) < (k + 2) as f64 {
        return Err(DataError::InvalidParams(format!(
            "density {density} expects fewer than k+2 = {} observations per column",
            k + 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let basis = gauss.qr().q();
    let coefficients = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let full = &basis * &coefficients;

    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let rows: Vec<u32> = loop {
            let drawn: Vec<u32> = (0..d as u32)
                .filter(|_| rng.random::<f64>() < density)
                .collect();
            if drawn.len() >= k {
                break drawn;
            }
        };
        let values = rows
            .iter()
            .map(|&r| {
                let clean = full[(r as usize, j)];
                if noise > 0.0 {
                    clean + noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    clean
                }
            })
            .collect();
        columns.push(LrmcColumn { rows, values });
    }
    let problem =
        LrmcProblem::new(d, k, columns).map_err(|e| DataError::InvalidParams(e.to_string()))?;
    Ok((
        problem,
        LrmcGroundTruth {
            basis,
            coefficients,
        },
    ))
}
