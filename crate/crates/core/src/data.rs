use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// A T×D observation matrix. Stored column-per-time so each `y_t` is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cols: DMatrix<f64>,
}

impl Dataset {
    /// Builds from `T` rows of length `D`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(Error::DimensionMismatch("dataset has no rows".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::DimensionMismatch("dataset has no columns".into()));
        }
        let mut cols = DMatrix::zeros(d, t);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            if let Some(bad) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::DimensionMismatch(format!(
                    "row {i}, column {bad} is not finite"
                )));
            }
            cols.column_mut(i).copy_from_slice(r);
        }
        Ok(Self { cols })
    }

    /// Builds from a T×D matrix.
    pub fn from_matrix(y: &DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty observation matrix".into()));
        }
        Ok(Self { cols: y.transpose() })
    }

    pub fn len(&self) -> usize {
        self.cols.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn obs(&self, t: usize) -> DVectorView<'_, f64> {
        self.cols.column(t)
    }

    pub fn obs_owned(&self, t: usize) -> DVector<f64> {
        self.cols.column(t).into_owned()
    }

    /// T×D copy.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        self.cols.transpose()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|t| self.cols.column(t).iter().copied().collect()).collect()
    }
}
