//! Kernel-expansion models on disk: one JSON schema shared by the posterior
//! regressor (with bias) and the deformed-Laplacian inductive model
//! (bias-free). Floats round-trip exactly through serde_json's
//! shortest-representation formatting.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk form of a kernel expansion `f_c(x) = sum_i A[i][c] k(x_i, x) (+ b_c)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelModelRecord {
    /// m support points, row-major.
    pub support_points: Vec<Vec<f64>>,
    /// m x c coefficient rows.
    pub coefficients: Vec<Vec<f64>>,
    /// Per-class bias, or `None` for a bias-free expansion.
    pub bias: Option<Vec<f64>>,
    /// Gaussian kernel bandwidth.
    pub sigma: f64,
    /// Fit regularization weight, when the model has one.
    pub gamma: Option<f64>,
}

impl KernelModelRecord {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path)?;
        let record: Self = serde_json::from_reader(BufReader::new(file))?;
        record.validate()?;
        Ok(record)
    }

    fn validate(&self) -> Result<()> {
        let m = self.support_points.len();
        if m == 0 || self.coefficients.len() != m {
            return Err(Error::InvalidParameter(format!(
                "model has {m} support points but {} coefficient rows",
                self.coefficients.len()
            )));
        }
        let d = self.support_points[0].len();
        if self.support_points.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidParameter(
                "ragged support-point rows in model file".into(),
            ));
        }
        let c = self.coefficients[0].len();
        if self.coefficients.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidParameter(
                "ragged coefficient rows in model file".into(),
            ));
        }
        if let Some(bias) = &self.bias {
            if bias.len() != c {
                return Err(Error::InvalidParameter(format!(
                    "bias has {} entries for {c} classes",
                    bias.len()
                )));
            }
        }
        if self.sigma <= 0.0 || self.sigma.is_nan() {
            return Err(Error::InvalidParameter("model sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn support_matrix(&self) -> DMatrix<f64> {
        let m = self.support_points.len();
        let d = self.support_points[0].len();
        DMatrix::from_fn(m, d, |i, j| self.support_points[i][j])
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let m = self.coefficients.len();
        let c = self.coefficients[0].len();
        DMatrix::from_fn(m, c, |i, j| self.coefficients[i][j])
    }

    pub fn bias_vector(&self) -> Option<DVector<f64>> {
        self.bias.as_ref().map(|b| DVector::from_vec(b.clone()))
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bitwise() {
        let record = KernelModelRecord {
            support_points: vec![vec![0.1 + 0.2, 1.0 / 3.0]],
            coefficients: vec![vec![f64::MIN_POSITIVE, 2.0_f64.powi(-40)]],
            bias: Some(vec![std::f64::consts::PI, -0.0]),
            sigma: 0.123456789012345678,
            gamma: Some(1e300),
        };
        let text = serde_json::to_string(&record).unwrap();
        let back: KernelModelRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(record.support_points, back.support_points);
        assert_eq!(record.coefficients, back.coefficients);
        assert_eq!(record.bias, back.bias);
        assert!(record.sigma.to_bits() == back.sigma.to_bits());
        assert_eq!(record.gamma, back.gamma);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let record = KernelModelRecord {
            support_points: vec![vec![0.0, 1.0], vec![2.0]],
            coefficients: vec![vec![1.0], vec![1.0]],
            bias: None,
            sigma: 1.0,
            gamma: None,
        };
        assert!(record.validate().is_err());
    }
}
