use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, invalid, Result};

/// Block labels used when none are given, mirroring a U-Net.
pub const DEFAULT_BLOCKS: [&str; 3] = ["down", "mid", "up"];

pub fn default_blocks() -> Vec<String> {
    DEFAULT_BLOCKS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectionKind {
    K,
    V,
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionKind::K => "K",
            ProjectionKind::V => "V",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    #[default]
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StorageFormat {
    Dense,
    Csr,
}

impl fmt::Display for StorageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StorageFormat::Dense => "DENSE",
            StorageFormat::Csr => "CSR",
        })
    }
}

/// Identity of one matrix inside a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub block: String,
    /// Absent for matrices that are not K/V projections, such as embeddings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProjectionKind>,
}

impl LayerInfo {
    pub fn new(name: impl Into<String>, block: impl Into<String>, kind: Option<ProjectionKind>) -> Self {
        Self { name: name.into(), block: block.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub info: LayerInfo,
    pub rows: u64,
    pub cols: u64,
    pub dtype: DType,
    pub format: StorageFormat,
    /// Relative to the first byte after the manifest.
    pub byte_offset: u64,
    pub byte_length: u64,
}

/// JSON header shared by both containers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub blocks: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl TensorManifest {
    /// Checks unique names, declared blocks, and that every payload lies in
    /// `data_len` bytes without overlapping another. Bytes past the last
    /// payload are rejected.
    pub fn validate(&self, data_len: u64) -> Result<()> {
        check_names_and_blocks(&self.blocks, self.entries.iter().map(|e| &e.info))
            .or_else(|e| format_err(e.to_string()))?;
        let mut spans: Vec<(u64, u64, &str)> = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let end = e.byte_offset.checked_add(e.byte_length).filter(|&end| end <= data_len);
            let Some(end) = end else {
                return format_err(format!(
                    "entry {:?} spans [{}, +{}) beyond the {data_len}-byte payload",
                    e.info.name, e.byte_offset, e.byte_length
                ));
            };
            spans.push((e.byte_offset, end, &e.info.name));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return format_err(format!("entries {:?} and {:?} overlap", w[0].2, w[1].2));
            }
        }
        let used = spans.iter().map(|s| s.1).max().unwrap_or(0);
        if used != data_len {
            return format_err(format!("{} trailing bytes after the last payload", data_len - used));
        }
        Ok(())
    }
}

pub(crate) fn check_names_and_blocks<'a>(
    blocks: &[String],
    infos: impl IntoIterator<Item = &'a LayerInfo>,
) -> Result<()> {
    let declared: HashSet<&str> = blocks.iter().map(String::as_str).collect();
    if declared.len() != blocks.len() {
        return invalid("block labels must be unique");
    }
    let mut seen = HashSet::new();
    for info in infos {
        if !seen.insert(info.name.as_str()) {
            return invalid(format!("duplicate layer name {:?}", info.name));
        }
        if !declared.contains(info.block.as_str()) {
            return invalid(format!("layer {:?} uses undeclared block {:?}", info.name, info.block));
        }
    }
    Ok(())
}
