//! Bundle containers and storage accounting.

pub mod container;
pub mod manifest;
pub mod report;
pub mod zip;

pub use container::{
    read_csr, read_dense, read_stored, write_csr, write_dense, write_stored, Bundle, CsrBundle, Layer, StoredBundle,
    StoredMatrix, WeightBundle,
};
pub use manifest::{default_blocks, DType, LayerInfo, ManifestEntry, ProjectionKind, StorageFormat, TensorManifest};
pub use report::{
    block_sparsity_report, csr_size_bytes, dense_size_bytes, deployment_format, BlockSparsity, LayerStorage,
    StorageReport, StorageTotals,
};
pub use zip::{zip_bytes_len, zip_compressed_size};
