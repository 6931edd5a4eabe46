//! Compressed-sparse-row complex matrices.

use std::io::Write;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::vector::{C64, ZERO};

/// Column-major copy of a CSR matrix, used for column access in Kaczmarz
/// sweeps.
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    pub col_offsets: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub values: Vec<C64>,
}

impl ColumnIndex {
    #[inline]
    pub fn column(&self, j: usize) -> (&[usize], &[C64]) {
        let r = self.col_offsets[j]..self.col_offsets[j + 1];
        (&self.row_indices[r.clone()], &self.values[r])
    }
}

#[derive(Debug)]
pub struct SparseComplexOperator {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<C64>,
    columns: OnceLock<ColumnIndex>,
}

impl Clone for SparseComplexOperator {
    fn clone(&self) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.clone(),
            columns: OnceLock::new(),
        }
    }
}

impl PartialEq for SparseComplexOperator {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
            && self.values == other.values
    }
}

impl SparseComplexOperator {
    /// Builds a matrix from raw CSR arrays, validating that every row has
    /// strictly increasing column indices.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<C64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::DimensionMismatch {
                expected: nrows + 1,
                actual: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return Err(Error::InvalidArgument("inconsistent CSR arrays".into()));
        }
        for i in 0..nrows {
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has unsorted, duplicate or out-of-range columns"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            columns: OnceLock::new(),
        })
    }

    /// Assembles from `(row, col, value)` triplets. Duplicates are summed;
    /// entries that sum to exactly zero are kept as structural entries.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            columns: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
            columns: OnceLock::new(),
        }
    }

    pub fn from_diagonal(d: &[C64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.nrows)
            .map(|i| self.row_offsets[i + 1] - self.row_offsets[i])
            .max()
            .unwrap_or(0)
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => ZERO,
        }
    }

    /// Column-access index, built on first use.
    pub fn columns(&self) -> &ColumnIndex {
        self.columns.get_or_init(|| {
            let t = self.adjoint_pattern(false);
            ColumnIndex {
                col_offsets: t.row_offsets,
                row_indices: t.col_indices,
                values: t.values,
            }
        })
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols, "matvec: input length");
        assert_eq!(y.len(), self.nrows, "matvec: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_offsets[i]..self.row_offsets[i + 1];
            let mut acc = ZERO;
            for (c, v) in self.col_indices[r.clone()].iter().zip(&self.values[r]) {
                acc += v * x[*c];
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A^H x`.
    pub fn matvec_adjoint(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.nrows, "adjoint matvec: input length");
        let mut y = vec![ZERO; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v.conj() * xi;
            }
        }
        y
    }

    fn adjoint_pattern(&self, conjugate: bool) -> SparseComplexOperator {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let k = next[*c];
                col_indices[k] = i;
                values[k] = if conjugate { v.conj() } else { *v };
                next[*c] += 1;
            }
        }
        SparseComplexOperator {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices,
            values,
            columns: OnceLock::new(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> SparseComplexOperator {
        self.adjoint_pattern(true)
    }

    /// Sparse product `self * rhs` (row-wise Gustavson accumulation).
    pub fn matmul(&self, rhs: &SparseComplexOperator) -> SparseComplexOperator {
        assert_eq!(self.ncols, rhs.nrows, "matmul: inner dimension");
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![ZERO; rhs.ncols];
        let mut marker = vec![usize::MAX; rhs.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (k, a) in cols.iter().zip(vals) {
                let (rc, rv) = rhs.row(*k);
                for (j, b) in rc.iter().zip(rv) {
                    if marker[*j] != i {
                        marker[*j] = i;
                        acc[*j] = ZERO;
                        touched.push(*j);
                    }
                    acc[*j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        SparseComplexOperator {
            nrows: self.nrows,
            ncols: rhs.ncols,
            row_offsets,
            col_indices,
            values,
            columns: OnceLock::new(),
        }
    }

    /// `A + alpha * B` over the union pattern.
    pub fn add_scaled(&self, alpha: C64, other: &SparseComplexOperator) -> SparseComplexOperator {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, x)));
            let (c, v) = other.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, alpha * x)));
        }
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// Multiplies row `i` by `signs[i]`.
    pub fn scale_rows(&self, signs: &[f64]) -> SparseComplexOperator {
        assert_eq!(signs.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for v in &mut out.values[self.row_offsets[i]..self.row_offsets[i + 1]] {
                *v *= signs[i];
            }
        }
        out
    }

    pub fn scale(&self, alpha: C64) -> SparseComplexOperator {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// Replaces the matrix with `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> SparseComplexOperator {
        self.add_scaled(C64::new(1.0, 0.0), &self.adjoint())
            .scale(C64::new(0.5, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let h = self.adjoint();
        self.add_scaled(C64::new(-1.0, 0.0), &h)
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Extracts the sub-matrix with the given rows and columns (in the
    /// given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseComplexOperator {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut trip = Vec::new();
        for (r_new, &r) in rows.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&j, &x) in c.iter().zip(v) {
                if col_map[j] != usize::MAX {
                    trip.push((r_new, col_map[j], x));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), trip)
    }

    /// Symmetric permutation on both sides: `B[i, j] = A[perm[i], perm[j]]`.
    pub fn permute(&self, perm: &[usize]) -> SparseComplexOperator {
        assert_eq!(self.nrows, self.ncols);
        self.submatrix(perm, perm)
    }

    /// Dense row-major copy. Test and diagnostic helper.
    pub fn to_dense_rows(&self) -> Vec<Vec<C64>> {
        let mut out = vec![vec![ZERO; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                row[j] = x;
            }
        }
        out
    }

    /// Matrix-Market coordinate format, complex general, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, x) in c.iter().zip(v) {
                writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, x.re, x.im)?;
            }
        }
        Ok(())
    }
}
