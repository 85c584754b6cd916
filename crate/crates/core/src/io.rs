//! Matrix and vector files.
//!
//! Binary layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `FDBM`                            |
//! | 4      | 1    | format version (currently 1)            |
//! | 5      | 1    | element width in bytes (4 = f32, 8 = f64) |
//! | 6      | 2    | reserved, zero                          |
//! | 8      | 8    | rows (u64)                              |
//! | 16     | 8    | cols (u64)                              |
//! | 24     | ...  | rows·cols IEEE-754 values, column-major |
//!
//! Vectors are stored as single-column matrices. The CSV form has one matrix
//! row per line, comma separated, no header; a vector is one value per line.
//! Files ending in `.csv` use the CSV form, everything else the binary form.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::DesignMatrix;
use crate::Scalar;

pub const MAGIC: &[u8; 4] = b"FDBM";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 24;

/// Dense column-major table read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Column-major values.
    pub data: Vec<f64>,
}

impl RawMatrix {
    pub fn from_vector(v: &[f64]) -> Self {
        RawMatrix { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn into_vector(self) -> Result<Vec<f64>> {
        if self.cols == 1 || self.rows == 1 {
            Ok(self.data)
        } else {
            Err(Error::Format(format!("expected a vector, found a {}x{} matrix", self.rows, self.cols)))
        }
    }
}

pub fn encode_binary(m: &RawMatrix, width: u8) -> Result<Vec<u8>> {
    if width != 4 && width != 8 {
        return Err(Error::invalid(format!("element width must be 4 or 8, got {width}")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * width as usize);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(width);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols as u64).to_le_bytes());
    for &x in &m.data {
        if width == 8 {
            out.extend_from_slice(&x.to_le_bytes());
        } else {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<RawMatrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing FDBM header".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", bytes[4])));
    }
    let width = bytes[5] as usize;
    if width != 4 && width != 8 {
        return Err(Error::Format(format!("unsupported element width {width}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Format(format!("expected {expected} data bytes, found {}", body.len())));
    }
    let data = body
        .chunks_exact(width)
        .map(|c| match width {
            8 => f64::from_le_bytes(c.try_into().unwrap()),
            _ => f32::from_le_bytes(c.try_into().unwrap()) as f64,
        })
        .collect();
    Ok(RawMatrix { rows, cols, data })
}

pub fn encode_csv(m: &RawMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows {
        let line: Vec<String> = (0..m.cols).map(|j| format!("{}", m.get(i, j))).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> Result<RawMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    Error::Format(format!("line {}: `{}`: {e}", lineno + 1, f.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    let mut data = vec![0.0; nrows * ncols];
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            data[j * nrows + i] = x;
        }
    }
    Ok(RawMatrix { rows: nrows, cols: ncols, data })
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn read_raw(path: &Path) -> Result<RawMatrix> {
    if is_csv(path) {
        decode_csv(&fs::read_to_string(path)?)
    } else {
        decode_binary(&fs::read(path)?)
    }
}

pub fn write_raw(path: &Path, m: &RawMatrix) -> Result<()> {
    let bytes = if is_csv(path) { encode_csv(m).into_bytes() } else { encode_binary(m, 8)? };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

impl<F: Scalar> From<&DesignMatrix<F>> for RawMatrix {
    fn from(a: &DesignMatrix<F>) -> Self {
        RawMatrix {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.column_major_data().into_iter().map(F::as_f64).collect(),
        }
    }
}

impl RawMatrix {
    pub fn to_design<F: Scalar>(&self) -> Result<DesignMatrix<F>> {
        DesignMatrix::from_column_major(self.rows, self.cols, self.data.iter().map(|&x| F::of(x)).collect())
    }

    pub fn to_array2<F: Scalar>(&self) -> Array2<F> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| F::of(self.get(i, j)))
    }

    pub fn from_array2<F: Scalar>(m: &Array2<F>) -> Self {
        let (rows, cols) = m.dim();
        RawMatrix { rows, cols, data: m.t().iter().map(|x| x.as_f64()).collect() }
    }
}

pub fn read_design<F: Scalar>(path: &Path) -> Result<DesignMatrix<F>> {
    read_raw(path)?.to_design()
}

pub fn write_design<F: Scalar>(path: &Path, a: &DesignMatrix<F>) -> Result<()> {
    write_raw(path, &RawMatrix::from(a))
}

pub fn read_vector<F: Scalar>(path: &Path) -> Result<Array1<F>> {
    Ok(read_raw(path)?.into_vector()?.into_iter().map(F::of).collect())
}

pub fn write_vector<F: Scalar>(path: &Path, v: &Array1<F>) -> Result<()> {
    let data: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
    write_raw(path, &RawMatrix::from_vector(&data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = RawMatrix { rows: 2, cols: 1, data: vec![1.0, -2.5] };
        let bytes = encode_binary(&m, 8).unwrap();
        assert_eq!(&bytes[..4], b"FDBM");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 8);
        assert_eq!(bytes.len(), 24 + 16);
        assert_eq!(&bytes[24..32], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_headers() {
        let m = RawMatrix { rows: 1, cols: 1, data: vec![1.0] };
        let mut bytes = encode_binary(&m, 8).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_binary(&bytes), Err(Error::Format(_))));
        assert!(decode_binary(b"nope").is_err());
        let mut short = encode_binary(&m, 8).unwrap();
        short.pop();
        assert!(decode_binary(&short).is_err());
    }

    #[test]
    fn csv_layout_is_row_major_text() {
        let m = RawMatrix { rows: 2, cols: 2, data: vec![1.0, 3.0, 2.0, 4.0] };
        assert_eq!(encode_csv(&m), "1,2\n3,4\n");
        assert!(decode_csv("1,2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|k| f64::from_bits(crate::rng::mix64(seed ^ k as u64) >> 12 | 0x3ff0_0000_0000_0000) - 1.5)
                .collect();
            let m = RawMatrix { rows, cols, data };
            prop_assert_eq!(decode_binary(&encode_binary(&m, 8).unwrap()).unwrap(), m.clone());
            prop_assert_eq!(decode_csv(&encode_csv(&m)).unwrap(), m);
        }
    }
}
