//! Non-negativity corrections for Gaussian predictions.
//!
//! The point estimate is the mode of the predictive Gaussian restricted to
//! the non-negative orthant, found with an active-set method over the
//! bound constraints. Each marginal interval whose lower end is negative is
//! replaced by `[0, b̂]`, where `b̂` holds 95% of the zero-truncated marginal
//! mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::PredictiveDistribution;
use crate::linalg::{cholesky_with_jitter, JitterSchedule, Matrix};
use crate::scalar::Scalar;

/// 97.5% quantile of the standard normal.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail, `1 − Φ(z)`, accurate far into the tail.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Two-sided z value of an equal-tail interval at `level`.
pub fn two_sided_z(level: f64) -> f64 {
    if (level - 0.95).abs() < 1e-15 {
        Z_975
    } else {
        std_normal_quantile(0.5 + 0.5 * level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

/// Non-negative point estimate with marginal intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrectedPrediction<T> {
    pub point: Vec<T>,
    pub intervals: Vec<Interval<T>>,
    /// Attributes whose interval was truncated at zero.
    pub corrected_flags: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Outcome of [`map_nonneg`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate<T> {
    pub point: Vec<T>,
    /// Set when the covariance could not be factored and the estimate fell
    /// back to `max(μ, 0)`.
    pub warning: Option<String>,
}

/// `argmin (ŷ − μ)ᵀ Γ⁻¹ (ŷ − μ)` subject to `ŷ ≥ 0`.
pub fn map_nonneg<T: Scalar>(mean: &[T], covariance: &Matrix<T>) -> Result<MapEstimate<T>> {
    let n = mean.len();
    if covariance.shape() != (n, n) {
        return Err(Error::dims("map covariance", n, covariance.rows()));
    }
    if mean.iter().all(|&m| m >= T::zero()) {
        return Ok(MapEstimate {
            point: mean.to_vec(),
            warning: None,
        });
    }
    let clamp = || mean.iter().map(|&m| m.max(T::zero())).collect::<Vec<_>>();
    let jittered = match cholesky_with_jitter(covariance, JitterSchedule::default()) {
        Ok(j) => j,
        Err(e) => {
            return Ok(MapEstimate {
                point: clamp(),
                warning: Some(format!(
                    "covariance not factorizable ({e}); clamped mean at zero"
                )),
            })
        }
    };
    let precision = jittered.factor.inverse()?;
    match nonneg_quadratic(&precision, mean) {
        Ok(point) => Ok(MapEstimate {
            point,
            warning: None,
        }),
        Err(e) => Ok(MapEstimate {
            point: clamp(),
            warning: Some(format!(
                "active-set solve failed ({e}); clamped mean at zero"
            )),
        }),
    }
}

/// Lawson–Hanson active set for `min (y − μ)ᵀ Q (y − μ)`, `y ≥ 0`, with
/// `Q` symmetric positive definite.
fn nonneg_quadratic<T: Scalar>(q: &Matrix<T>, mu: &[T]) -> Result<Vec<T>> {
    let n = mu.len();
    let q_mu = q.matvec(mu)?;
    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    let tol = T::epsilon()
        * T::lit(1e3)
        * (T::one() + q_mu.iter().fold(T::zero(), |m, v| m.max(v.abs())));
    let max_outer = 3 * n + 10;

    // Solves the unconstrained subproblem on the passive set.
    let solve_passive = |passive: &[bool]| -> Result<Vec<T>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = Matrix::from_fn(idx.len(), idx.len(), |a, b| q[(idx[a], idx[b])]);
        let rhs: Vec<T> = idx.iter().map(|&i| q_mu[i]).collect();
        let z_sub = crate::linalg::Cholesky::factor(&sub)?.solve(&rhs)?;
        let mut z = vec![T::zero(); n];
        for (k, &i) in idx.iter().enumerate() {
            z[i] = z_sub[k];
        }
        Ok(z)
    };

    for _ in 0..max_outer {
        // w = Q(μ − x): negative half-gradient
        let qx = q.matvec(&x)?;
        let w: Vec<T> = q_mu.iter().zip(&qx).map(|(&a, &b)| a - b).collect();
        let candidate = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(j) = candidate else {
            return Ok(x);
        };
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            if inner > 3 * n + 10 {
                return Err(Error::Numerical(
                    "active-set inner loop did not terminate".into(),
                ));
            }
            let z = solve_passive(&passive)?;
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > T::zero()) {
                x = z;
                break;
            }
            // step back towards x until the first passive variable hits zero
            let mut alpha = T::one();
            for i in (0..n).filter(|&i| passive[i] && z[i] <= T::zero()) {
                let a = x[i] / (x[i] - z[i]);
                if a < alpha {
                    alpha = a;
                }
            }
            for i in 0..n {
                x[i] = x[i] + alpha * (z[i] - x[i]);
                if passive[i] && x[i] <= tol.min(T::lit(1e-12)) {
                    passive[i] = false;
                    x[i] = T::zero();
                }
            }
        }
    }
    Err(Error::Numerical(
        "active-set method did not converge".into(),
    ))
}

/// Equal-tail `level` interval `[μ − zσ, μ + zσ]`; when its lower end is
/// negative, returns `[0, b̂]` with `Φ(b̂; μ, σ) = level + (1 − level) Φ(0; μ, σ)`.
pub fn correct_interval<T: Scalar>(mu: T, sigma: T, level: f64) -> Result<Interval<T>> {
    let (m, s) = (mu.as_f64(), sigma.as_f64());
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::input(format!("sigma must be positive, got {sigma}")));
    }
    if !m.is_finite() {
        return Err(Error::input("mean must be finite"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let z = two_sided_z(level);
    let a = m - z * s;
    let b = m + z * s;
    if a >= 0.0 {
        return Ok(Interval {
            lower: T::lit(a),
            upper: T::lit(b),
        });
    }
    let upper = truncated_upper_bound(m, s, level)?;
    Ok(Interval {
        lower: T::zero(),
        upper: T::lit(upper),
    })
}

/// `ln(1 − Φ(z))`, finite for every finite `z`; beyond `z = 8` it uses the
/// continued fraction of the Mills ratio instead of the underflowing tail.
pub fn std_normal_log_sf(z: f64) -> f64 {
    if z < 8.0 {
        return std_normal_sf(z).ln();
    }
    let mut r = 0.0;
    for k in (1..=60).rev() {
        r = k as f64 / (z + r);
    }
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - (z + r).ln()
}

/// Solves `1 − Φ(b) = (1 − level)(1 − Φ(0))` by bisection on the log upper
/// tail, so means many standard deviations below zero stay solvable.
fn truncated_upper_bound(mu: f64, sigma: f64, level: f64) -> Result<f64> {
    let log_sf = |x: f64| std_normal_log_sf((x - mu) / sigma);
    let target = (1.0 - level).ln() + log_sf(0.0);
    let mut lo = 0.0;
    // the truncated law is close to exponential with rate |μ|/σ² far out
    let mut hi = (mu + 10.0 * sigma)
        .max(sigma)
        .max(-10.0 * sigma * sigma / mu);
    let mut expansions = 0;
    while log_sf(hi) > target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 100 {
            return Err(Error::Numerical(
                "could not bracket truncated upper bound".into(),
            ));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        // run to adjacent floats: far in the tail log_sf is steep, so a
        // value tolerance would leave relative error in the bound
        if log_sf(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(
        "bisection for truncated upper bound did not converge".into(),
    ))
}

/// MAP point estimate plus corrected 95% marginal intervals.
pub fn correct_prediction<T: Scalar>(
    dist: &PredictiveDistribution<T>,
) -> Result<CorrectedPrediction<T>> {
    correct_prediction_at(dist, 0.95)
}

pub fn correct_prediction_at<T: Scalar>(
    dist: &PredictiveDistribution<T>,
    level: f64,
) -> Result<CorrectedPrediction<T>> {
    let map = map_nonneg(&dist.mean, &dist.covariance)?;
    let sd = dist.sd();
    let z = two_sided_z(level);
    let mut intervals = Vec::with_capacity(dist.dim());
    let mut flags = Vec::with_capacity(dist.dim());
    for (&m, &s) in dist.mean.iter().zip(&sd) {
        if s > T::zero() {
            intervals.push(correct_interval(m, s, level)?);
            flags.push(m.as_f64() - z * s.as_f64() < 0.0);
        } else {
            // degenerate marginal: a point mass, clipped at zero
            let v = m.max(T::zero());
            intervals.push(Interval { lower: v, upper: v });
            flags.push(m < T::zero());
        }
    }
    Ok(CorrectedPrediction {
        point: map.point,
        intervals,
        corrected_flags: flags,
        warnings: map.warning.into_iter().collect(),
    })
}
