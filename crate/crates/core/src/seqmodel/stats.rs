use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg::{ridge_inverse, Mat};

/// Running `XᵀX`, `XᵀY` and observation count for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    xtx: Mat,
    xty: Vec<f64>,
    count: usize,
}

impl SummaryStats {
    pub fn new(d_x: usize) -> Self {
        Self {
            xtx: Mat::zeros(d_x),
            xty: vec![0.0; d_x],
            count: 0,
        }
    }

    /// Statistics of a whole design matrix, accumulated row by row.
    pub fn from_rows(d_x: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut xtx = Mat::zeros(d_x);
        let mut xty = vec![0.0; d_x];
        for (x, y) in rows {
            check_dim(d_x, x.len())?;
            for i in 0..d_x {
                for j in 0..d_x {
                    xtx.set(i, j, xtx.get(i, j) + x[i] * x[j]);
                }
                xty[i] += x[i] * y;
            }
        }
        Ok(Self {
            xtx,
            xty,
            count: rows.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.xtx.add_outer(x, 1.0);
        for (b, xi) in self.xty.iter_mut().zip(x) {
            *b += xi * y;
        }
        self.count += 1;
        Ok(())
    }

    pub fn xtx(&self) -> &Mat {
        &self.xtx
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(XᵀX + εI)^{-1}`
    pub fn ridge_inverse(&self, eps: f64) -> Result<Mat> {
        ridge_inverse(&self.xtx, eps)
    }
}
