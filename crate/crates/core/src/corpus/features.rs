//! Frame-feature files.
//!
//! ```text
//! "MFTF" | version: u32 | T: u32 | D: u32 | T*D × f32   (little-endian, row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{MftError, Result};
use crate::numcore::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"MFTF";
pub const FEATURE_VERSION: u32 = 1;

pub fn encode_features(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    let err = |m: &str| MftError::parse("feature file", m.to_string());
    if bytes.len() < 16 {
        return Err(err("truncated header"));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(err("bad magic, expected MFTF"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != FEATURE_VERSION {
        return Err(err(&format!("unsupported version {}", word(1))));
    }
    let (rows, cols) = (word(2) as usize, word(3) as usize);
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(err(&format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            rows * cols * 4,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(rows, cols, values)
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_features(m)).map_err(|e| MftError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| MftError::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_assembled_two_by_two() {
        let mut bytes = b"MFTF".to_vec();
        for w in [1u32, 2, 2] {
            bytes.extend(w.to_le_bytes());
        }
        for v in [1.5f32, -2.0, 0.25, 8.0] {
            bytes.extend(v.to_le_bytes());
        }
        let m = decode_features(&bytes).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.as_slice(), &[1.5, -2.0, 0.25, 8.0]);
        assert_eq!(encode_features(&m), bytes);
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let m = Matrix::zeros(0, 16);
        let bytes = encode_features(&m);
        assert_eq!(bytes.len(), 16);
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.shape(), (0, 16));
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = encode_features(&Matrix::zeros(2, 3));
        assert!(decode_features(&bytes[..bytes.len() - 2]).is_err());
        assert!(decode_features(&bytes[..10]).is_err());
        let mut bad = bytes;
        bad[3] = b'W';
        assert!(decode_features(&bad).is_err());
    }
}
