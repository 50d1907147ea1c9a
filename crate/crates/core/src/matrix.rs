//! Dense row-major f64 matrix used by the numeric stages.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { data: vec![0.0; rows * cols], rows, cols }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Matrix { data, rows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { data, rows: rows.len(), cols }
    }

    pub fn with_capacity(rows: usize, cols: usize) -> Self {
        Matrix { data: Vec::with_capacity(rows * cols), rows: 0, cols }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New matrix containing the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (k, &c) in cols.iter().enumerate() {
                dst[k] = src[c];
            }
        }
        out
    }

    /// New matrix containing the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut out = Matrix::with_capacity(rows.len(), self.cols);
        for &r in rows {
            out.push_row(self.row(r));
        }
        out
    }

    /// Stacks `self` on top of `other`. Column counts must match.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "column count mismatch");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Matrix { data, rows: self.rows + other.rows, cols: self.cols }
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..self.rows {
            s += self.get(i, j);
        }
        s / self.rows as f64
    }

    /// Population variance of column `j`.
    pub fn column_var(&self, j: usize) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        let m = self.column_mean(j);
        let mut s = 0.0;
        for i in 0..self.rows {
            let d = self.get(i, j) - m;
            s += d * d;
        }
        s / self.rows as f64
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }
}

/// Per-column mean/std pair frozen from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on the rows of `x`. Columns with zero spread get std 1 so they
    /// standardize to 0 instead of NaN.
    pub fn fit(x: &Matrix) -> Standardizer {
        let d = x.cols();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            mean[j] = x.column_mean(j);
            let v = x.column_var(j);
            std[j] = if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let mut buf = vec![0.0; x.cols()];
            self.apply_row(x.row(i), &mut buf);
            out.row_mut(i).copy_from_slice(&buf);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_stack() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let c = m.select_columns(&[2, 0]);
        assert_eq!(c.row(0), &[3.0, 1.0]);
        assert_eq!(c.row(1), &[6.0, 4.0]);
        let s = m.vstack(&m);
        assert_eq!(s.rows(), 4);
        assert_eq!(s.row(3), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn standardizer_zero_spread_column() {
        let m = Matrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0]]);
        let s = Standardizer::fit(&m);
        let z = s.apply(&m);
        assert_eq!(z.get(0, 0), 0.0);
        assert_eq!(z.get(1, 0), 0.0);
        assert!((z.get(0, 1) + 1.0).abs() < 1e-12);
        assert!((z.get(1, 1) - 1.0).abs() < 1e-12);
    }
}
