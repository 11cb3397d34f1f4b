//! Row-major dense matrix of `f64` values.

use serde::{Deserialize, Serialize};

/// Row-major matrix. Rows are samples, columns are features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from flat row-major data.
    pub fn from_flat(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            n_rows * n_cols,
            "flat data must be n_rows * n_cols long"
        );
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "all rows must have the same length");
            data.extend_from_slice(row);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |r| self.row(r))
    }

    /// Copies one column out.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix::from_flat(rows.len(), self.n_cols, data)
    }

    /// New matrix with `cols` appended on the right; every column must have
    /// `n_rows` entries.
    pub fn with_appended_columns(&self, cols: &[Vec<f64>]) -> Matrix {
        for col in cols {
            assert_eq!(
                col.len(),
                self.n_rows,
                "appended column length must match row count"
            );
        }
        let new_cols = self.n_cols + cols.len();
        let mut data = Vec::with_capacity(self.n_rows * new_cols);
        for r in 0..self.n_rows {
            data.extend_from_slice(self.row(r));
            for col in cols {
                data.push(col[r]);
            }
        }
        Matrix::from_flat(self.n_rows, new_cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_columns_preserves_left_block() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = m.with_appended_columns(&[vec![9.0, 8.0]]);
        assert_eq!(out.n_cols(), 3);
        assert_eq!(out.row(0), &[1.0, 2.0, 9.0]);
        assert_eq!(out.row(1), &[3.0, 4.0, 8.0]);
    }

    #[test]
    fn select_rows_reorders() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = m.select_rows(&[2, 0]);
        assert_eq!(out.row(0), &[3.0]);
        assert_eq!(out.row(1), &[1.0]);
    }
}
