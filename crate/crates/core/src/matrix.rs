use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("sample matrix needs at least one row and one column")]
    Empty,
    #[error("row {row} has {got} columns, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Mismatch(String),
}

/// Dense row-major `n × d` matrix of finite samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ShapeError> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.is_empty() || d == 0 {
            return Err(ShapeError::Empty);
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(ShapeError::Ragged {
                    row: i,
                    got: row.len(),
                    expected: d,
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), d, data)
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if n == 0 || d == 0 {
            return Err(ShapeError::Empty);
        }
        if data.len() != n * d {
            return Err(ShapeError::Mismatch(format!(
                "{} values for a {n}x{d} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(ShapeError::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self { n, d, data })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Result<Self, ShapeError> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col_values(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.d];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n as f64);
        means
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            d: self.d,
            data,
        }
    }

    /// Element-wise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, ShapeError> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<(), ShapeError> {
        if self.n != other.n || self.d != other.d {
            return Err(ShapeError::Mismatch(format!(
                "{}x{} vs {}x{}",
                self.n, self.d, other.n, other.d
            )));
        }
        Ok(())
    }

    /// Appends `extra` as a trailing column.
    pub fn with_column(&self, extra: &[f64]) -> Result<Self, ShapeError> {
        if extra.len() != self.n {
            return Err(ShapeError::Mismatch(format!(
                "column of length {} for {} rows",
                extra.len(),
                self.n
            )));
        }
        let d = self.d + 1;
        let mut data = Vec::with_capacity(self.n * d);
        for (row, &e) in self.rows().zip(extra) {
            data.extend_from_slice(row);
            data.push(e);
        }
        Self::from_vec(self.n, d, data)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self, ShapeError> {
        let data = m.transpose().as_slice().to_vec();
        Self::from_vec(m.nrows(), m.ncols(), data)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}
