//! Size of a single-file DEFLATE ZIP archive at the default level.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipWriter};

use crate::error::Result;

/// Archive size in bytes for `bytes` stored under `name`.
pub fn zip_bytes_len(name: &str, bytes: &[u8]) -> Result<u64> {
    let mut zw = ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(CompressionMethod::Deflated);
    zw.start_file(name, opts)?;
    zw.write_all(bytes)?;
    Ok(zw.finish()?.into_inner().len() as u64)
}

/// Archive size in bytes for the file at `path`.
pub fn zip_compressed_size(path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("data");
    zip_bytes_len(name, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn zeros_compress_well() {
        let n = 1 << 20;
        let size = zip_bytes_len("zeros.bin", &vec![0u8; n]).unwrap();
        assert!((size as f64) < 0.02 * n as f64, "{size}");
    }

    #[test]
    fn random_bytes_do_not_compress() {
        let n = 1 << 20;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        let size = zip_bytes_len("random.bin", &bytes).unwrap();
        assert!(size as f64 >= 0.99 * n as f64, "{size}");
    }

    #[test]
    fn file_and_memory_sizes_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        let bytes: Vec<u8> = (0..5000u32).flat_map(|i| (i % 251).to_le_bytes()).collect();
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(zip_compressed_size(&path).unwrap(), zip_bytes_len("data.bin", &bytes).unwrap());
        assert!(zip_compressed_size(dir.path().join("missing")).is_err());
    }
}
