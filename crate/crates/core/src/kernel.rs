//! Matérn 3/2 covariance, univariate Gram matrices, and the separable
//! (Kronecker) multi-output kernel.
//!
//! Every Kronecker-structured object in this crate uses attribute-major
//! ordering: index `a * n + i` addresses attribute `a` of point `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Smoothness order of the Matérn family. Only ν = 3/2 is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Smoothness {
    #[default]
    ThreeHalves,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelParams<T> {
    pub nu: Smoothness,
    pub length_scale: T,
    pub signal_sigma: T,
}

impl<T: Scalar> Default for KernelParams<T> {
    fn default() -> Self {
        KernelParams {
            nu: Smoothness::ThreeHalves,
            length_scale: T::lit(10.0),
            signal_sigma: T::one(),
        }
    }
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(length_scale: T, signal_sigma: T) -> Result<Self> {
        let p = KernelParams {
            nu: Smoothness::ThreeHalves,
            length_scale,
            signal_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > T::zero()) || !self.length_scale.is_finite() {
            return Err(Error::input(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !(self.signal_sigma > T::zero()) || !self.signal_sigma.is_finite() {
            return Err(Error::input(format!(
                "signal sigma must be positive, got {}",
                self.signal_sigma
            )));
        }
        Ok(())
    }

    /// Kernel value at zero distance, σ².
    #[inline]
    pub fn variance(&self) -> T {
        self.signal_sigma * self.signal_sigma
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, d: T) -> T {
        let r = T::lit(3.0).sqrt() * d / self.length_scale;
        self.variance() * (T::one() + r) * (-r).exp()
    }
}

/// `σ² (1 + √3 d / l) exp(−√3 d / l)`.
pub fn matern32<T: Scalar>(d: T, params: &KernelParams<T>) -> Result<T> {
    if !d.is_finite() || d < T::zero() {
        return Err(Error::input(format!(
            "distance must be finite and non-negative, got {d}"
        )));
    }
    Ok(params.eval_unchecked(d))
}

pub fn euclidean_distance<T: Scalar>(x: &[T], x2: &[T]) -> Result<T> {
    if x.len() != x2.len() {
        return Err(Error::dims("euclidean distance", x.len(), x2.len()));
    }
    Ok(squared_distance(x, x2).sqrt())
}

#[inline]
pub(crate) fn squared_distance<T: Scalar>(x: &[T], x2: &[T]) -> T {
    x.iter().zip(x2).fold(T::zero(), |acc, (&a, &b)| {
        let t = a - b;
        acc + t * t
    })
}

/// Kernel matrix between two point sets (rows are points).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    pub entries: Matrix<T>,
    /// True when rows and columns were generated from the same point set.
    pub same_inputs: bool,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }
}

pub fn gram<T: Scalar>(
    xa: &Matrix<T>,
    xb: &Matrix<T>,
    params: &KernelParams<T>,
) -> Result<GramMatrix<T>> {
    params.validate()?;
    if xa.rows() == 0 || xb.rows() == 0 {
        return Err(Error::input("gram matrix needs non-empty point sets"));
    }
    if xa.cols() != xb.cols() {
        return Err(Error::dims("gram point dimension", xa.cols(), xb.cols()));
    }
    let same = std::ptr::eq(xa, xb) || xa == xb;
    let entries = if same {
        let n = xa.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = params.variance();
            for j in 0..i {
                let v = params.eval_unchecked(squared_distance(xa.row(i), xa.row(j)).sqrt());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    } else {
        Matrix::from_fn(xa.rows(), xb.rows(), |i, j| {
            params.eval_unchecked(squared_distance(xa.row(i), xb.row(j)).sqrt())
        })
    };
    Ok(GramMatrix {
        entries,
        same_inputs: same,
    })
}

/// Kernel values between one point and every row of `xb`.
pub fn cross_kernel<T: Scalar>(
    x: &[T],
    xb: &Matrix<T>,
    params: &KernelParams<T>,
) -> Result<Vec<T>> {
    if x.len() != xb.cols() {
        return Err(Error::dims(
            "cross kernel point dimension",
            xb.cols(),
            x.len(),
        ));
    }
    Ok((0..xb.rows())
        .map(|j| params.eval_unchecked(squared_distance(x, xb.row(j)).sqrt()))
        .collect())
}

/// `Γ_y ⊗ K` under attribute-major ordering: block `(a, b)` equals
/// `gamma_y[a][b] · K`.
pub fn separable_kernel<T: Scalar>(gamma_y: &Matrix<T>, k: &Matrix<T>) -> Result<Matrix<T>> {
    if !gamma_y.is_square() {
        return Err(Error::dims(
            "output covariance must be square",
            gamma_y.rows(),
            gamma_y.cols(),
        ));
    }
    if !gamma_y.is_symmetric(T::lit(1e-10)) {
        return Err(Error::input("output covariance is not symmetric"));
    }
    Ok(gamma_y.kron(k))
}
