//! Compressed sparse row matrices with deterministic assembly.
//!
//! All global operators in this crate are assembled by accumulating
//! `(row, col, value)` triplets in a canonical loop order and then
//! compressing.  Compression sums duplicate coordinates in their insertion
//! order (so the floating-point result is reproducible across runs and
//! thread counts) and drops entries whose accumulated value is exactly zero,
//! leaving sorted, duplicate-free column indices within each row.

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse row form.
///
/// Invariants maintained by every constructor:
/// * `row_ptr` has length `nrows + 1`, is non-decreasing, and brackets
///   `col_idx`/`values` (both of length `row_ptr[nrows]`).
/// * Within each row, column indices are strictly increasing.
/// * No stored value is exactly `0.0` (structural zeros are dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from coordinate triplets.
    ///
    /// Duplicate coordinates are summed in insertion order; exact-zero sums
    /// are dropped.  Coordinates outside `nrows x ncols` are an error.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::data(format!(
                    "triplet ({r}, {c}) outside {nrows} x {ncols} matrix"
                )));
            }
        }
        // Counting sort by row keeps the per-row insertion order stable, so
        // duplicate summation is reproducible.
        let mut row_counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            row_counts[r + 1] += 1;
        }
        for r in 0..nrows {
            row_counts[r + 1] += row_counts[r];
        }
        let mut order = vec![0usize; triplets.len()];
        {
            let mut next = row_counts.clone();
            for (pos, &(r, _, _)) in triplets.iter().enumerate() {
                order[next[r]] = pos;
                next[r] += 1;
            }
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut scratch_cols: Vec<usize> = Vec::new();
        let mut scratch_vals: Vec<f64> = Vec::new();
        let mut col_slot = vec![usize::MAX; ncols];
        for r in 0..nrows {
            scratch_cols.clear();
            scratch_vals.clear();
            for &pos in &order[row_counts[r]..row_counts[r + 1]] {
                let (_, c, v) = triplets[pos];
                if col_slot[c] == usize::MAX {
                    col_slot[c] = scratch_cols.len();
                    scratch_cols.push(c);
                    scratch_vals.push(v);
                } else {
                    scratch_vals[col_slot[c]] += v;
                }
            }
            let mut row: Vec<(usize, f64)> = scratch_cols
                .iter()
                .zip(scratch_vals.iter())
                .map(|(&c, &v)| (c, v))
                .collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                col_slot[c] = usize::MAX;
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Number of rows.
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Number of columns.
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row pointer array (`nrows + 1` entries).
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Column indices, sorted within each row.
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Stored values, aligned with [`Self::col_idx`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sorted `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(self.values[span].iter())
            .map(|(&c, &v)| (c, v))
    }

    /// Entry lookup; `0.0` for coordinates without a stored value.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Matrix-vector product `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// Maximum absolute row sum (operator infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.row_ptr[r]..self.row_ptr[r + 1]
            })
            .map(|span| self.values[span].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute signed row sum, `max_r |sum_c A_rc|`.
    ///
    /// Operators that annihilate constants report this as a consistency
    /// check; it should vanish to rounding.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.values[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Dense copy in row-major order; intended for small matrices in tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[r][self.col_idx[k]] = self.values[k];
            }
        }
        out
    }

    /// Largest absolute asymmetry `max |A_ij - A_ji|`; the matrix must be
    /// square.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols, "asymmetry needs a square matrix");
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_sums_duplicates_and_sorts_columns() {
        let trips = vec![
            (1, 2, 1.0),
            (0, 1, 2.0),
            (1, 0, 3.0),
            (1, 2, 0.5),
            (0, 1, -1.0),
        ];
        let m = SparseMatrix::from_triplets(2, 3, &trips).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 2), 1.5);
        // Columns sorted within each row.
        for r in 0..m.nrows() {
            let cols: Vec<usize> = m.row(r).map(|(c, _)| c).collect();
            let mut sorted = cols.clone();
            sorted.sort_unstable();
            assert_eq!(cols, sorted);
        }
    }

    #[test]
    fn exact_zero_sums_are_dropped() {
        let trips = vec![(0, 0, 1.0), (0, 0, -1.0), (1, 1, 2.0)];
        let m = SparseMatrix::from_triplets(2, 2, &trips).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 2.0);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        let err = SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let trips = vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 4.0), (2, 0, 1.0)];
        let m = SparseMatrix::from_triplets(3, 3, &trips).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = m.matvec(&x);
        assert_eq!(y, vec![2.0 * 1.0 - 3.0, 8.0, 1.0]);
    }
}
