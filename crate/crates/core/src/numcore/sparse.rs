use rayon::prelude::*;

use crate::numcore::{NumError, Tensor};
use crate::scalar::Real;

/// Compressed sparse row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T: Real = f64> {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds a CSR matrix from raw parts, validating ordering and bounds.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, NumError> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(NumError::Shape(format!(
                "offsets must have {} entries starting at 0",
                rows + 1
            )));
        }
        if indices.len() != values.len() || *offsets.last().unwrap() != indices.len() {
            return Err(NumError::Shape("offsets, indices and values disagree".into()));
        }
        for r in 0..rows {
            let (lo, hi) = (offsets[r], offsets[r + 1]);
            if lo > hi {
                return Err(NumError::Shape(format!("offsets decrease at row {r}")));
            }
            let row = &indices[lo..hi];
            if row.iter().any(|&c| c >= cols) {
                return Err(NumError::Shape(format!("column index out of bounds in row {r}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(NumError::Shape(format!("row {r} indices not strictly sorted")));
            }
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self, NumError> {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(NumError::Shape(format!("triplet ({r},{c}) out of bounds")));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        // rows are visited in order, so each transposed row comes out sorted
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                let slot = cursor[c];
                indices[slot] = r;
                values[slot] = v;
                cursor[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            offsets,
            indices,
            values,
        }
    }

    /// `self · x` for dense `x`.
    pub fn matmul_dense(&self, x: &Tensor<T>) -> Result<Tensor<T>, NumError> {
        if self.cols != x.rows() {
            return Err(NumError::Shape(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        let width = x.cols();
        let mut out = Tensor::zeros(self.rows, width);
        if width == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(r, out_row)| {
                let (idx, val) = self.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                        *o += v * xv;
                    }
                }
            });
        Ok(out)
    }
}
