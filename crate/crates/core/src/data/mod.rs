//! Dataset ingestion (LibSVM text format), synthetic generators for the
//! benchmark problems, and the static dataset metadata registry.

mod libsvm;
mod registry;
mod synth;

pub use libsvm::{parse_libsvm, parse_libsvm_with_dim, write_libsvm, RawDataset};
pub use registry::{dataset_registry, lookup_dataset, DatasetInfo};
pub use synth::{synth_kpca, synth_lrmc, LrmcGroundTruth};

use crate::error::ProblemError;
use crate::problems::KPcaProblem;

/// Binds a parsed dataset to the k-PCA objective (labels are ignored).
pub fn kpca_from_dataset(
    ds: &RawDataset,
    k: usize,
    normalize: bool,
) -> Result<KPcaProblem, ProblemError> {
    KPcaProblem::from_sparse_rows(ds.rows.clone(), ds.d, k, normalize)
}
