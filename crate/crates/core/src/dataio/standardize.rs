use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Per-column z-score parameters. Columns whose sample standard deviation
/// is zero are flagged and map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StandardizationStats<T> {
    pub means: Vec<T>,
    pub sds: Vec<T>,
    pub zero_variance: Vec<bool>,
}

impl<T: Scalar> StandardizationStats<T> {
    pub fn fit(x: &Matrix<T>) -> Self {
        let means = x.column_means();
        let n = x.rows();
        let mut ss = vec![T::zero(); x.cols()];
        for i in 0..n {
            for ((s, &v), &m) in ss.iter_mut().zip(x.row(i)).zip(&means) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let denom = T::from_usize_lossy(n.saturating_sub(1).max(1));
        let sds: Vec<T> = ss.into_iter().map(|s| (s / denom).sqrt()).collect();
        let zero_variance = sds
            .iter()
            .zip(&means)
            .map(|(&sd, &m)| !(sd > T::epsilon() * T::lit(16.0) * T::one().max(m.abs())))
            .collect();
        StandardizationStats {
            means,
            sds,
            zero_variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Indices of columns with non-zero variance.
    pub fn kept_columns(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| !self.zero_variance[j])
            .collect()
    }

    pub fn apply_row(&self, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.dim() {
            return Err(Error::dims("standardization input", self.dim(), row.len()));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.zero_variance[j] {
                    T::zero()
                } else {
                    (v - self.means[j]) / self.sds[j]
                }
            })
            .collect())
    }

    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.dim() {
            return Err(Error::dims("standardization input", self.dim(), x.cols()));
        }
        let mut out = Vec::with_capacity(x.rows() * x.cols());
        for i in 0..x.rows() {
            out.extend(self.apply_row(x.row(i))?);
        }
        Matrix::new(x.rows(), x.cols(), out)
    }
}

/// Z-scores the columns of `x`. When `stats` is given (e.g. training
/// statistics applied to test data) they are reused; otherwise they are
/// estimated from `x`.
pub fn standardize<T: Scalar>(
    x: &Matrix<T>,
    stats: Option<&StandardizationStats<T>>,
) -> Result<(Matrix<T>, StandardizationStats<T>)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => StandardizationStats::fit(x),
    };
    Ok((stats.apply(x)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_flagged() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![4.0, 5.0]]).unwrap();
        let (z, stats) = standardize(&x, None).unwrap();
        assert_eq!(stats.zero_variance, vec![false, true]);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(stats.kept_columns(), vec![0]);
    }

    #[test]
    fn training_columns_unit_scaled() {
        let x = Matrix::from_fn(40, 3, |i, j| {
            ((i * 7 + j * 13) % 11) as f64 * (j as f64 + 1.0) + 100.0
        });
        let (z, _) = standardize(&x, None).unwrap();
        let means = z.column_means();
        let cov = z.sample_covariance().unwrap();
        for j in 0..3 {
            assert!(means[j].abs() < 1e-10);
            assert!((cov[(j, j)].sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn test_data_reuses_training_stats() {
        let train = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let test = Matrix::from_rows(&[vec![10.0], vec![12.0]]).unwrap();
        let (_, stats) = standardize(&train, None).unwrap();
        let (z, same) = standardize(&test, Some(&stats)).unwrap();
        assert_eq!(same, stats);
        assert!(z.column_means()[0] > 1.0);
        assert!(stats.apply_row(&[1.0, 2.0]).is_err());
    }
}
