//! SPMX (dense) and SPCR (compressed sparse row) bundle files.
//!
//! Both share one layout:
//!
//! ```text
//! magic [4]  "SPMX" | "SPCR"
//! version    u32 LE (= 1)
//! manifest   u32 LE length, then UTF-8 JSON (TensorManifest)
//! payload    entries at manifest offsets, relative to the end of the manifest
//! ```
//!
//! A DENSE entry is `rows·cols` little-endian f32 values, row-major. A CSR
//! entry is a 24-byte record header (rows u32, cols u32, nnz u32, dtype u8,
//! flags u8, 2 padding bytes, reserved u64) followed by `row_ptr`
//! (u32 × rows+1), `col_idx` (u32 × nnz) and `values` (f32 × nnz).
//!
//! SPMX files hold only DENSE entries. SPCR files may mix both, which is how a
//! bundle stores each layer in whichever format is smaller.

use std::fs;
use std::path::Path;

use crate::error::{format_err, invalid, Result, SpaceError};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::storage::manifest::{
    check_names_and_blocks, default_blocks, DType, LayerInfo, ManifestEntry, StorageFormat, TensorManifest,
};
use crate::storage::report::csr_size_bytes;

pub const SPMX_MAGIC: [u8; 4] = *b"SPMX";
pub const SPCR_MAGIC: [u8; 4] = *b"SPCR";
pub const FORMAT_VERSION: u32 = 1;
/// Magic, version and manifest length.
pub const PREAMBLE_BYTES: usize = 12;
pub const CSR_RECORD_HEADER_BYTES: usize = 24;
const DTYPE_F32_CODE: u8 = 0;

/// A matrix as it is stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredMatrix {
    Dense(DenseMatrix<f32>),
    Csr(CsrMatrix<f32>),
}

impl StoredMatrix {
    pub fn format(&self) -> StorageFormat {
        match self {
            StoredMatrix::Dense(_) => StorageFormat::Dense,
            StoredMatrix::Csr(_) => StorageFormat::Csr,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            StoredMatrix::Dense(m) => m.shape(),
            StoredMatrix::Csr(m) => (m.rows(), m.cols()),
        }
    }

    pub fn to_dense(&self) -> Result<DenseMatrix<f32>> {
        match self {
            StoredMatrix::Dense(m) => Ok(m.clone()),
            StoredMatrix::Csr(m) => m.to_dense(),
        }
    }

    /// Bytes this entry occupies in the payload section.
    pub fn encoded_len(&self) -> u64 {
        match self {
            StoredMatrix::Dense(m) => 4 * m.len() as u64,
            StoredMatrix::Csr(m) => csr_size_bytes(m.rows() as u64, m.nnz() as u64),
        }
    }

    /// The entry's payload bytes.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.encoded_len() as usize);
        match self {
            StoredMatrix::Dense(m) => encode_dense(m, &mut out),
            StoredMatrix::Csr(m) => encode_csr(m, &mut out)?,
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<M> {
    pub info: LayerInfo,
    pub matrix: M,
}

/// Named matrices grouped under declared block labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle<M> {
    pub blocks: Vec<String>,
    pub layers: Vec<Layer<M>>,
}

pub type WeightBundle = Bundle<DenseMatrix<f32>>;
pub type CsrBundle = Bundle<CsrMatrix<f32>>;
pub type StoredBundle = Bundle<StoredMatrix>;

impl<M> Bundle<M> {
    pub fn new(blocks: Vec<String>) -> Self {
        Self { blocks, layers: Vec::new() }
    }

    /// An empty bundle over the default `down`/`mid`/`up` blocks.
    pub fn with_default_blocks() -> Self {
        Self::new(default_blocks())
    }

    pub fn push(&mut self, info: LayerInfo, matrix: M) -> Result<()> {
        if !self.blocks.contains(&info.block) {
            return invalid(format!("layer {:?} uses undeclared block {:?}", info.name, info.block));
        }
        if self.layers.iter().any(|l| l.info.name == info.name) {
            return invalid(format!("duplicate layer name {:?}", info.name));
        }
        self.layers.push(Layer { info, matrix });
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_names_and_blocks(&self.blocks, self.layers.iter().map(|l| &l.info))
    }

    pub fn get(&self, name: &str) -> Option<&M> {
        self.layers.iter().find(|l| l.info.name == name).map(|l| &l.matrix)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn map<N>(&self, mut f: impl FnMut(&LayerInfo, &M) -> Result<N>) -> Result<Bundle<N>> {
        let layers = self
            .layers
            .iter()
            .map(|l| Ok(Layer { info: l.info.clone(), matrix: f(&l.info, &l.matrix)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Bundle { blocks: self.blocks.clone(), layers })
    }
}

impl StoredBundle {
    pub fn to_dense(&self) -> Result<WeightBundle> {
        self.map(|_, m| m.to_dense())
    }

    fn magic(&self) -> [u8; 4] {
        if self.layers.iter().any(|l| matches!(l.matrix, StoredMatrix::Csr(_))) {
            SPCR_MAGIC
        } else {
            SPMX_MAGIC
        }
    }
}

fn encode_dense(m: &DenseMatrix<f32>, out: &mut Vec<u8>) {
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_csr(m: &CsrMatrix<f32>, out: &mut Vec<u8>) -> Result<()> {
    let narrow =
        |x: usize, what: &str| u32::try_from(x).map_err(|_| SpaceError::Capacity(format!("{what} {x} exceeds u32")));
    out.extend_from_slice(&narrow(m.rows(), "rows")?.to_le_bytes());
    out.extend_from_slice(&narrow(m.cols(), "cols")?.to_le_bytes());
    out.extend_from_slice(&narrow(m.nnz(), "nnz")?.to_le_bytes());
    out.push(DTYPE_F32_CODE);
    out.push(0); // flags
    out.extend_from_slice(&[0, 0]); // padding
    out.extend_from_slice(&0u64.to_le_bytes()); // reserved
    for p in m.row_ptr() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for c in m.col_idx() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn encode(magic: [u8; 4], bundle: &StoredBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let mut entries = Vec::with_capacity(bundle.len());
    let mut offset = 0u64;
    for layer in &bundle.layers {
        let (rows, cols) = layer.matrix.shape();
        let len = layer.matrix.encoded_len();
        entries.push(ManifestEntry {
            info: layer.info.clone(),
            rows: rows as u64,
            cols: cols as u64,
            dtype: DType::F32,
            format: layer.matrix.format(),
            byte_offset: offset,
            byte_length: len,
        });
        offset += len;
    }
    let manifest = serde_json::to_vec(&TensorManifest { blocks: bundle.blocks.clone(), entries })?;
    let manifest_len =
        u32::try_from(manifest.len()).map_err(|_| SpaceError::Capacity("manifest exceeds 4 GiB".into()))?;

    let mut out = Vec::with_capacity(PREAMBLE_BYTES + manifest.len() + offset as usize);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&manifest_len.to_le_bytes());
    out.extend_from_slice(&manifest);
    for layer in &bundle.layers {
        match &layer.matrix {
            StoredMatrix::Dense(m) => encode_dense(m, &mut out),
            StoredMatrix::Csr(m) => encode_csr(m, &mut out)?,
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return format_err(format!("truncated {}: need {n} bytes at offset {}", self.what, self.pos));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| SpaceError::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| SpaceError::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn decode(bytes: &[u8]) -> Result<([u8; 4], StoredBundle)> {
    let mut r = Reader { bytes, pos: 0, what: "header" };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != SPMX_MAGIC && magic != SPCR_MAGIC {
        return format_err(format!("bad magic {magic:?}"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return format_err(format!("unsupported version {version}"));
    }
    let manifest_len = r.u32()? as usize;
    r.what = "manifest";
    let manifest: TensorManifest =
        serde_json::from_slice(r.take(manifest_len)?).map_err(|e| SpaceError::Format(format!("manifest: {e}")))?;
    let data = &bytes[r.pos..];
    manifest.validate(data.len() as u64)?;

    let mut bundle = Bundle::new(manifest.blocks.clone());
    for e in &manifest.entries {
        let start = e.byte_offset as usize;
        let payload = &data[start..start + e.byte_length as usize];
        let rows = usize::try_from(e.rows).map_err(|_| SpaceError::Format("rows overflow".into()))?;
        let cols = usize::try_from(e.cols).map_err(|_| SpaceError::Format("cols overflow".into()))?;
        let matrix = match e.format {
            StorageFormat::Dense => {
                let expect = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
                if expect != Some(payload.len()) {
                    return format_err(format!(
                        "entry {:?}: {} payload bytes for a {rows}x{cols} f32 matrix",
                        e.info.name,
                        payload.len()
                    ));
                }
                let mut pr = Reader { bytes: payload, pos: 0, what: "dense payload" };
                let values = pr.f32s(rows * cols)?;
                StoredMatrix::Dense(
                    DenseMatrix::new(rows, cols, values)
                        .map_err(|err| SpaceError::Format(format!("entry {:?}: {err}", e.info.name)))?,
                )
            }
            StorageFormat::Csr => {
                if magic == SPMX_MAGIC {
                    return format_err(format!("SPMX file holds CSR entry {:?}", e.info.name));
                }
                StoredMatrix::Csr(decode_csr_record(payload, rows, cols, &e.info.name)?)
            }
        };
        bundle.layers.push(Layer { info: e.info.clone(), matrix });
    }
    Ok((magic, bundle))
}

fn decode_csr_record(payload: &[u8], rows: usize, cols: usize, name: &str) -> Result<CsrMatrix<f32>> {
    let mut r = Reader { bytes: payload, pos: 0, what: "CSR record" };
    let h_rows = r.u32()? as usize;
    let h_cols = r.u32()? as usize;
    let nnz = r.u32()? as usize;
    let dtype = r.take(1)?[0];
    let _flags = r.take(1)?[0];
    let _padding = r.take(2)?;
    let _reserved = r.u64()?;
    if (h_rows, h_cols) != (rows, cols) {
        return format_err(format!("entry {name:?}: record header says {h_rows}x{h_cols}, manifest {rows}x{cols}"));
    }
    if dtype != DTYPE_F32_CODE {
        return format_err(format!("entry {name:?}: unknown dtype code {dtype}"));
    }
    if csr_size_bytes(rows as u64, nnz as u64) != payload.len() as u64 {
        return format_err(format!(
            "entry {name:?}: {} bytes do not match a CSR record with {rows} rows and {nnz} nonzeros",
            payload.len()
        ));
    }
    let row_ptr = r.u32s(rows + 1)?;
    let col_idx = r.u32s(nnz)?;
    let values = r.f32s(nnz)?;
    CsrMatrix::from_parts(rows, cols, row_ptr, col_idx, values)
        .map_err(|e| SpaceError::Format(format!("entry {name:?}: {e}")))
}

/// Serializes a dense bundle as SPMX bytes.
pub fn encode_dense_bundle(bundle: &WeightBundle) -> Result<Vec<u8>> {
    let stored = bundle.map(|_, m| Ok(StoredMatrix::Dense(m.clone())))?;
    encode(SPMX_MAGIC, &stored)
}

/// Serializes a CSR bundle as SPCR bytes.
pub fn encode_csr_bundle(bundle: &CsrBundle) -> Result<Vec<u8>> {
    let stored = bundle.map(|_, m| Ok(StoredMatrix::Csr(m.clone())))?;
    encode(SPCR_MAGIC, &stored)
}

/// Serializes a mixed bundle. The magic is SPCR when any entry is CSR.
pub fn encode_stored_bundle(bundle: &StoredBundle) -> Result<Vec<u8>> {
    encode(bundle.magic(), bundle)
}

pub fn decode_dense_bundle(bytes: &[u8]) -> Result<WeightBundle> {
    let (magic, stored) = decode(bytes)?;
    if magic != SPMX_MAGIC {
        return format_err("expected an SPMX file");
    }
    stored.to_dense()
}

pub fn decode_csr_bundle(bytes: &[u8]) -> Result<CsrBundle> {
    let (magic, stored) = decode(bytes)?;
    if magic != SPCR_MAGIC {
        return format_err("expected an SPCR file");
    }
    stored.map(|info, m| match m {
        StoredMatrix::Csr(c) => Ok(c.clone()),
        StoredMatrix::Dense(_) => format_err(format!("entry {:?} is stored dense", info.name)),
    })
}

/// Decodes either container.
pub fn decode_stored_bundle(bytes: &[u8]) -> Result<StoredBundle> {
    Ok(decode(bytes)?.1)
}

pub fn write_dense(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<u64> {
    write_bytes(path, &encode_dense_bundle(bundle)?)
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<WeightBundle> {
    decode_dense_bundle(&fs::read(path)?)
}

pub fn write_csr(bundle: &CsrBundle, path: impl AsRef<Path>) -> Result<u64> {
    write_bytes(path, &encode_csr_bundle(bundle)?)
}

pub fn read_csr(path: impl AsRef<Path>) -> Result<CsrBundle> {
    decode_csr_bundle(&fs::read(path)?)
}

pub fn write_stored(bundle: &StoredBundle, path: impl AsRef<Path>) -> Result<u64> {
    write_bytes(path, &encode_stored_bundle(bundle)?)
}

/// Reads an SPMX or SPCR file, keeping each entry's on-disk format.
pub fn read_stored(path: impl AsRef<Path>) -> Result<StoredBundle> {
    decode_stored_bundle(&fs::read(path)?)
}

fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<u64> {
    fs::write(path, bytes)?;
    Ok(bytes.len() as u64)
}
