//! Deployment-size, compression and per-block sparsity accounting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::storage::container::{StoredMatrix, WeightBundle, CSR_RECORD_HEADER_BYTES};
use crate::storage::manifest::{ProjectionKind, StorageFormat};
use crate::storage::zip::zip_bytes_len;

/// Bytes of one SPCR record: header, `row_ptr`, `col_idx` and `values`.
pub fn csr_size_bytes(rows: u64, nnz: u64) -> u64 {
    CSR_RECORD_HEADER_BYTES as u64 + 4 * (rows + 1) + 8 * nnz
}

/// Bytes of a raw f32 payload.
pub fn dense_size_bytes(rows: u64, cols: u64) -> u64 {
    4 * rows * cols
}

/// The smaller of the two encodings; dense wins ties.
pub fn deployment_format(rows: u64, cols: u64, nnz: u64) -> StorageFormat {
    if csr_size_bytes(rows, nnz) < dense_size_bytes(rows, cols) {
        StorageFormat::Csr
    } else {
        StorageFormat::Dense
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStorage {
    pub name: String,
    pub block: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProjectionKind>,
    pub rows: u64,
    pub cols: u64,
    pub nnz: u64,
    pub sparsity: f64,
    pub dense_bytes: u64,
    pub csr_bytes: u64,
    /// `min(dense_bytes, csr_bytes)`
    pub deployment_bytes: u64,
    pub deployment_format: StorageFormat,
    /// ZIP archive of the deployment encoding.
    pub zip_bytes: u64,
    /// Dense size of the original layer minus `deployment_bytes`.
    pub gain_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSparsity {
    pub block: String,
    pub layers: usize,
    pub parameters: u64,
    pub zeros: u64,
    /// `None` for a declared block with no parameters.
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageTotals {
    pub parameters: u64,
    pub zeros: u64,
    /// `None` when the bundle has no parameters.
    pub sparsity: Option<f64>,
    pub dense_bytes: u64,
    pub csr_bytes: u64,
    pub deployment_bytes: u64,
    pub zip_bytes: u64,
    pub gain_bytes: u64,
}

/// A written bundle file and its compressed size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStorage {
    pub path: String,
    pub bytes: u64,
    pub zip_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub layers: Vec<LayerStorage>,
    pub blocks: Vec<BlockSparsity>,
    pub totals: StorageTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<FileStorage>,
}

pub const CSV_HEADER: &str =
    "name,block,kind,rows,cols,nnz,sparsity,dense_bytes,csr_bytes,deployment_bytes,deployment_format,zip_bytes,gain_bytes";

impl LayerStorage {
    pub fn measure(name: &str, block: &str, kind: Option<ProjectionKind>, m: &DenseMatrix<f32>) -> Result<Self> {
        let (rows, cols) = (m.rows() as u64, m.cols() as u64);
        let nnz = m.nnz() as u64;
        let dense_bytes = dense_size_bytes(rows, cols);
        let csr_bytes = csr_size_bytes(rows, nnz);
        let format = deployment_format(rows, cols, nnz);
        let stored = match format {
            StorageFormat::Dense => StoredMatrix::Dense(m.clone()),
            StorageFormat::Csr => StoredMatrix::Csr(CsrMatrix::from_dense(m)?),
        };
        let deployment_bytes = dense_bytes.min(csr_bytes);
        debug_assert_eq!(stored.encoded_len(), deployment_bytes);
        let zip_bytes = zip_bytes_len(name, &stored.encode()?)?;
        Ok(Self {
            name: name.to_string(),
            block: block.to_string(),
            kind,
            rows,
            cols,
            nnz,
            sparsity: m.sparsity_fraction(),
            dense_bytes,
            csr_bytes,
            deployment_bytes,
            deployment_format: format,
            zip_bytes,
            gain_bytes: dense_bytes - deployment_bytes,
        })
    }
}

/// Per-layer storage, per-block parameter-weighted sparsity, and totals.
pub fn block_sparsity_report(bundle: &WeightBundle) -> Result<StorageReport> {
    let mut blocks: Vec<BlockSparsity> = bundle
        .blocks
        .iter()
        .map(|b| BlockSparsity { block: b.clone(), layers: 0, parameters: 0, zeros: 0, sparsity: None })
        .collect();
    let mut layers = Vec::with_capacity(bundle.len());
    for layer in &bundle.layers {
        let Some(block) = blocks.iter_mut().find(|b| b.block == layer.info.block) else {
            return invalid(format!("layer {:?} has unknown block {:?}", layer.info.name, layer.info.block));
        };
        let m = &layer.matrix;
        block.layers += 1;
        block.parameters += m.len() as u64;
        block.zeros += m.zero_count() as u64;
        layers.push(LayerStorage::measure(&layer.info.name, &layer.info.block, layer.info.kind, m)?);
    }
    let names = layers.iter().map(|l| &l.name).collect::<std::collections::HashSet<_>>();
    if names.len() != layers.len() {
        return invalid("duplicate layer names");
    }
    for b in &mut blocks {
        b.sparsity = (b.parameters > 0).then(|| b.zeros as f64 / b.parameters as f64);
    }
    let parameters: u64 = blocks.iter().map(|b| b.parameters).sum();
    let zeros: u64 = blocks.iter().map(|b| b.zeros).sum();
    let totals = StorageTotals {
        parameters,
        zeros,
        sparsity: (parameters > 0).then(|| zeros as f64 / parameters as f64),
        dense_bytes: layers.iter().map(|l| l.dense_bytes).sum(),
        csr_bytes: layers.iter().map(|l| l.csr_bytes).sum(),
        deployment_bytes: layers.iter().map(|l| l.deployment_bytes).sum(),
        zip_bytes: layers.iter().map(|l| l.zip_bytes).sum(),
        gain_bytes: layers.iter().map(|l| l.gain_bytes).sum(),
    };
    Ok(StorageReport { layers, blocks, totals, file: None })
}

impl StorageReport {
    /// Parameter-weighted mean of the per-block sparsities.
    pub fn weighted_block_sparsity(&self) -> Option<f64> {
        let params: u64 = self.blocks.iter().map(|b| b.parameters).sum();
        if params == 0 {
            return None;
        }
        let weighted: f64 = self.blocks.iter().filter_map(|b| b.sparsity.map(|s| s * b.parameters as f64)).sum();
        Some(weighted / params as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per layer under [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for l in &self.layers {
            let kind = l.kind.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&l.name),
                csv_field(&l.block),
                kind,
                l.rows,
                l.cols,
                l.nnz,
                l.sparsity,
                l.dense_bytes,
                l.csr_bytes,
                l.deployment_bytes,
                l.deployment_format,
                l.zip_bytes,
                l.gain_bytes
            );
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
