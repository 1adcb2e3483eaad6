//! Binary matrix files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `EMNT`                  |
//! | 4      | 4    | format version (u32)          |
//! | 8      | 8    | rows (u64)                    |
//! | 16     | 8    | cols (u64)                    |
//! | 24     | 1    | symmetric flag (0 or 1)       |
//! | 25     | 32   | provenance hash (SHA-256)     |
//! | 57     | 8·rows·cols | row-major f64 payload  |

use std::io::Write;
use std::path::Path;

use elastomono::ntd::relative_asymmetry;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"EMNT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 57;
/// Largest relative asymmetry accepted for a file flagged symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-8;

pub type Hash = [u8; 32];

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub symmetric: bool,
    pub provenance: Hash,
    pub matrix: DMatrix<f64>,
}

/// SHA-256 over the scenario key and an artifact tag.
pub fn provenance_hash(key: &str, tag: &str) -> Hash {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    h.update([0u8]);
    h.update(tag.as_bytes());
    h.finalize().into()
}

pub fn hex(hash: &Hash) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

impl MatrixFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (r, c) = self.matrix.shape();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * r * c);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(r as u64).to_le_bytes());
        out.extend_from_slice(&(c as u64).to_le_bytes());
        out.push(self.symmetric as u8);
        out.extend_from_slice(&self.provenance);
        for i in 0..r {
            for j in 0..c {
                out.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("file has {} bytes, shorter than the header", bytes.len()));
        }
        if bytes[0..4] != MAGIC {
            return Err("bad magic".into());
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let (rows, cols) = (u64_at(8), u64_at(16));
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN as u64));
        if expected != Some(bytes.len() as u64) {
            return Err(format!(
                "payload length {} does not match {rows}x{cols}",
                bytes.len() - HEADER_LEN
            ));
        }
        let symmetric = match bytes[24] {
            0 => false,
            1 => true,
            f => return Err(format!("bad symmetry flag {f}")),
        };
        let provenance: Hash = bytes[25..57].try_into().unwrap();
        let (r, c) = (rows as usize, cols as usize);
        let payload = &bytes[HEADER_LEN..];
        let matrix = DMatrix::from_fn(r, c, |i, j| {
            let o = 8 * (i * c + j);
            f64::from_le_bytes(payload[o..o + 8].try_into().unwrap())
        });
        if symmetric {
            if r != c {
                return Err(format!("flagged symmetric but {r}x{c}"));
            }
            let asym = relative_asymmetry(&matrix);
            if !(asym <= SYMMETRY_RTOL) {
                return Err(format!("flagged symmetric but relative asymmetry is {asym:e}"));
            }
        }
        Ok(Self {
            symmetric,
            provenance,
            matrix,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| CliError::Integrity {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Reads and checks that the file was produced for `expected`.
    pub fn read_checked(path: &Path, expected: &Hash) -> CliResult<Self> {
        let f = Self::read(path)?;
        if &f.provenance != expected {
            return Err(CliError::Stale { path: path.to_path_buf() });
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MatrixFile {
        MatrixFile {
            symmetric: false,
            provenance: provenance_hash("key", "tag"),
            matrix: DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0)),
        }
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[0..4], b"EMNT");
        assert_eq!(b.len(), HEADER_LEN + 6 * 8);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        // row-major: second value is entry (0, 1)
        assert_eq!(f64::from_le_bytes(b[65..73].try_into().unwrap()), 1.0 / 4.0);
    }

    #[test]
    fn round_trip_and_tamper() {
        let f = sample();
        let b = f.to_bytes();
        assert_eq!(MatrixFile::from_bytes(&b).unwrap(), f);
        assert!(MatrixFile::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(MatrixFile::from_bytes(&bad).is_err());
    }

    #[test]
    fn symmetric_flag_is_enforced() {
        let mut f = sample();
        f.matrix = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        f.symmetric = true;
        assert!(MatrixFile::from_bytes(&f.to_bytes()).is_err());
        f.matrix[(1, 0)] = 2.0;
        assert!(MatrixFile::from_bytes(&f.to_bytes()).is_ok());
    }
}
