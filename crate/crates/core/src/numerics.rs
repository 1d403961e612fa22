//! Dense numeric kernels shared by all pipeline stages.
//!
//! Everything operates on row-major `f64` matrices. Kernels are plain loops:
//! at the scales this pipeline runs (hundreds of tokens, dims below a few
//! hundred) that is faster to verify than to optimize, and every operation is
//! bit-deterministic for identical inputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};

#[cfg(test)]
use crate::error::CoreError;

/// Dense row-major matrix of 64-bit floats.
///
/// Construction validates that the buffer length matches `rows * cols` and
/// that every value is finite, so downstream kernels never see NaN/Inf.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from a row-major buffer, validating shape and
    /// finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract(format_args!(
                "matrix data length {} does not equal {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(contract(format_args!(
                "matrix contains non-finite value {bad}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Matrix with entries drawn i.i.d. from `N(0, std^2)`.
    pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut crate::rng::Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.next_normal() * std).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Borrows row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// New matrix holding the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(contract(format_args!(
                    "row index {i} out of bounds for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts
            .first()
            .ok_or_else(|| contract("vstack of zero matrices"))?
            .cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(contract(format_args!(
                    "vstack column mismatch: {} vs {cols}",
                    p.cols
                )));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Column-wise mean, one value per column.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.get(r, c);
            }
        }
        let n = self.rows.max(1) as f64;
        for o in &mut out {
            *o /= n;
        }
        out
    }
}

/// Standard matrix product.
///
/// Errors with a contract violation when inner dimensions disagree.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(contract(format_args!(
            "matmul dimension mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(contract("matmul produced non-finite values"));
    }
    Ok(out)
}

/// Row-wise softmax of `m * scale`, computed with max-subtraction so large
/// magnitudes (including the negated scores used by reverse attention) never
/// overflow.
pub fn row_softmax(m: &Matrix, scale: f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        let max = row
            .iter()
            .map(|v| v * scale)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let e = libm::exp(v * scale - max);
            out.set(r, c, e);
            sum += e;
        }
        for c in 0..m.cols {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
///
/// `out[i][j] = || a_i - b_j ||^2`, clamped to be nonnegative.
pub fn pairwise_sq_dist(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(contract(format_args!(
            "pairwise distance dimension mismatch: {} vs {}",
            a.cols, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ra = a.row(i);
        for j in 0..b.rows {
            let rb = b.row(j);
            let mut acc = 0.0;
            for (x, y) in ra.iter().zip(rb) {
                let d = x - y;
                acc += d * d;
            }
            out.set(i, j, acc.max(0.0));
        }
    }
    Ok(out)
}

/// Indices of the `k` largest values, sorted by value descending with ties
/// broken toward the lower index.
pub fn top_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return Err(contract(format_args!(
            "top_k asked for {k} of {} values",
            values.len()
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&i, &j| values[j].total_cmp(&values[i]).then_with(|| i.cmp(&j)));
    order.truncate(k);
    Ok(order)
}

/// Scaled dot-product cross-attention:
/// `row_softmax(q * k^T * scale) * v`.
pub fn cross_attention(q: &Matrix, kmat: &Matrix, vmat: &Matrix, scale: f64) -> Result<Matrix> {
    if q.cols != kmat.cols {
        return Err(contract(format_args!(
            "attention query dim {} does not match key dim {}",
            q.cols, kmat.cols
        )));
    }
    if kmat.rows != vmat.rows {
        return Err(contract(format_args!(
            "attention key count {} does not match value count {}",
            kmat.rows, vmat.rows
        )));
    }
    let scores = matmul(q, &kmat.transpose())?;
    let weights = row_softmax(&scores, scale);
    matmul(&weights, vmat)
}
