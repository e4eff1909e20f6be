//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MFTW" | version: u32 | count: u32 |
//!   count × ( name_len: u32 | name: utf-8 | rows: u32 | cols: u32 | rows*cols × f64 )
//! ```

use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{MftError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MFTW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + store.num_values() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        for v in p.value.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(MftError::parse(
                "checkpoint",
                format!("truncated at byte {} (needed {n} more)", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(MftError::parse("checkpoint", "bad magic, expected MFTW"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(MftError::parse(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| MftError::parse("checkpoint", format!("parameter name: {e}")))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let values = (0..rows * cols)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        let m = Matrix::from_vec(rows, cols, values)
            .map_err(|e| MftError::parse("checkpoint", format!("{name}: {e}")))?;
        if store.id(&name).is_some() {
            return Err(MftError::parse("checkpoint", format!("duplicate parameter {name}")));
        }
        store.add(name, m);
    }
    if r.pos != bytes.len() {
        return Err(MftError::parse("checkpoint", "trailing bytes after last parameter"));
    }
    Ok(store)
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode_params(store)).map_err(|e| MftError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| MftError::io(path, e))?;
    decode_params(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_byte_layout() {
        let mut store = ParamStore::new();
        store.add("ab", Matrix::from_vec(1, 2, vec![1.0, -0.5]).unwrap());
        let bytes = encode_params(&store);
        let mut expected = b"MFTW".to_vec();
        expected.extend([1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, b'a', b'b', 1, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend(1.0f64.to_le_bytes());
        expected.extend((-0.5f64).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(decode_params(&bytes).unwrap(), store);
    }

    #[test]
    fn rejects_corruption() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::zeros(2, 3));
        let bytes = encode_params(&store);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_params(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_params(&extra).is_err());
    }
}
