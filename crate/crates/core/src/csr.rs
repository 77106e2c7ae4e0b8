//! Compressed sparse row storage and its binary on-disk format.
//!
//! File layout, all little-endian: `nrows: u64`, `ncols: u64`, then
//! `indptr: [u64; nrows + 1]`, `indices: [u64; nnz]`, `values: [f64; nnz]`
//! where `nnz = indptr[nrows]`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(column, value)` lists. Columns within a row are
    /// sorted; explicit zeros are dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidInput(format!("duplicate column {}", w[0].0)));
                }
            }
            for (c, v) in row {
                if c >= ncols {
                    return Err(Error::Dimension(format!("column {c} >= {ncols}")));
                }
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(p) => self.values[a + p],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Keep the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let picked = rows.iter().map(|&i| self.row(i).collect()).collect();
        Self::from_rows(self.ncols, picked).expect("rows of a valid matrix")
    }

    /// `self * dense` (sparse times dense).
    pub fn mul_dense(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.ncols, d.nrows());
        let mut out = DMatrix::zeros(self.nrows, d.ncols());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                for c in 0..d.ncols() {
                    out[(i, c)] += v * d[(j, c)];
                }
            }
        }
        out
    }

    /// `dense^T * self`, i.e. `(self^T * dense)^T`, shape `d.ncols() x self.ncols`.
    pub fn tmul_dense(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.nrows, d.nrows());
        let mut out = DMatrix::zeros(d.ncols(), self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                for c in 0..d.ncols() {
                    out[(c, j)] += v * d[(i, c)];
                }
            }
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&(self.nrows as u64).to_le_bytes())?;
        w.write_all(&(self.ncols as u64).to_le_bytes())?;
        for &p in &self.indptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.indices {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * (self.nrows + 1 + 2 * self.nnz()));
        self.write_to(&mut buf).expect("writing to a Vec");
        buf
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<csr stream>", e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next = |what: &str| -> Result<[u8; 8]> {
            let chunk = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| Error::InvalidInput(format!("truncated csr file reading {what}")))?;
            pos += 8;
            Ok(chunk.try_into().unwrap())
        };
        let nrows = u64::from_le_bytes(next("nrows")?) as usize;
        let ncols = u64::from_le_bytes(next("ncols")?) as usize;
        let mut indptr = Vec::with_capacity(nrows + 1);
        for _ in 0..=nrows {
            indptr.push(u64::from_le_bytes(next("indptr")?) as usize);
        }
        let nnz = *indptr.last().unwrap();
        if indptr.first() != Some(&0) || indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("csr row pointers not monotone".into()));
        }
        let mut indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let c = u64::from_le_bytes(next("indices")?) as usize;
            if c >= ncols {
                return Err(Error::InvalidInput(format!("csr column {c} out of range")));
            }
            indices.push(c);
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            values.push(f64::from_le_bytes(next("values")?));
        }
        if pos != bytes.len() {
            return Err(Error::InvalidInput("trailing bytes after csr payload".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_is_fixed() {
        let m = CsrMatrix::from_rows(3, vec![vec![(2, 0.5)], vec![]]).unwrap();
        let b = m.to_bytes();
        // dims(16) + indptr 3*8 + 1 index + 1 value
        assert_eq!(b.len(), 16 + 24 + 8 + 8);
        assert_eq!(&b[0..8], &2u64.to_le_bytes());
        assert_eq!(&b[8..16], &3u64.to_le_bytes());
        assert_eq!(&b[16..24], &0u64.to_le_bytes());
        assert_eq!(&b[24..32], &1u64.to_le_bytes());
        assert_eq!(&b[32..40], &1u64.to_le_bytes());
        assert_eq!(&b[40..48], &2u64.to_le_bytes());
        assert_eq!(&b[48..56], &0.5f64.to_le_bytes());
    }

    #[test]
    fn truncated_input_is_rejected() {
        let m = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 2.0)]]).unwrap();
        let b = m.to_bytes();
        assert!(CsrMatrix::from_bytes(&b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(rows in proptest::collection::vec(
            proptest::collection::btree_map(0usize..12, -5.0f64..5.0, 0..6), 0..8)) {
            let rows: Vec<Vec<(usize, f64)>> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
            let m = CsrMatrix::from_rows(12, rows).unwrap();
            let back = CsrMatrix::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
