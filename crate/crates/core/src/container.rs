//! Self-describing binary container and CSV helpers.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"LPVC" | u32 version | u64 header length | header JSON | payload
//! ```
//!
//! The header names every array (`name`, `rows`, `cols`); the payload holds
//! the arrays back to back as row-major little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LpvError, Result};

const MAGIC: &[u8; 4] = b"LPVC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// row-major
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "array shape does not match data length");
        Self {
            name: name.into(),
            rows,
            cols,
            data,
        }
    }

    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let data = m.transpose().as_slice().to_vec();
        Self::new(name, m.nrows(), m.ncols(), data)
    }

    pub fn row_vector(name: impl Into<String>, v: &[f64]) -> Self {
        Self::new(name, 1, v.len(), v.to_vec())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, array: NamedArray) -> &mut Self {
        self.arrays.push(array);
        self
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &DMatrix<f64>) -> &mut Self {
        self.push(NamedArray::from_matrix(name, m))
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| LpvError::Format(format!("{} container has no array '{name}'", self.kind)))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        Ok(self.array(name)?.to_matrix())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(LpvError::Format(format!(
                "expected a '{kind}' container, found '{}'",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    rows: a.rows,
                    cols: a.cols,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload: usize = self.arrays.iter().map(|a| a.data.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| LpvError::Format(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing LPVC magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(LpvError::Format(format!("unsupported container version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        let mut offset = header_end;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for a in header.arrays {
            let n = a.rows.checked_mul(a.cols).ok_or_else(|| bad("array size overflow"))?;
            let end = offset
                .checked_add(n * 8)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| LpvError::Format(format!("truncated payload for array '{}'", a.name)))?;
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            arrays.push(NamedArray {
                name: a.name,
                rows: a.rows,
                cols: a.cols,
                data,
            });
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Writes a CSV file with a header row.
pub fn write_csv<R, I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV file into its header and string records.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Formats a float so that it parses back to the identical value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    proptest! {
        #[test]
        fn container_round_trip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| (seed.wrapping_mul(i as u64 + 1) as f64).sin() * 1e3)
                .collect();
            let mut c = Container::new("test", json!({"seed": seed}));
            c.push(NamedArray::new("a", rows, cols, data));
            c.push(NamedArray::row_vector("b", &[1.5, -0.0, f64::MAX]));
            let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }

    #[test]
    fn matrix_is_stored_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = NamedArray::from_matrix("m", &m);
        assert_eq!(a.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.to_matrix(), m);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Container::from_bytes(b"nope").is_err());
        let mut c = Container::new("x", json!(null));
        c.push(NamedArray::row_vector("v", &[1.0, 2.0]));
        let bytes = c.to_bytes().unwrap();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Container::from_bytes(&extra).is_err());
        assert!(c.expect_kind("y").is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1e-300, 12345.678, std::f64::consts::PI] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
