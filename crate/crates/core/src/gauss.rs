//! Centered Gaussian measures `N(0, Q)`.
//!
//! The parameter `Q` is *half* the covariance: `N(0, Q)` has characteristic
//! function `exp(-<xi, Q xi>)` and covariance `2Q`. Every routine here keeps
//! that convention; callers that think in covariances must halve first.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    q: Matrix,
}

impl GaussianMeasure {
    /// Validates `q` (symmetric, non-negative definite up to roundoff) and
    /// clamps tiny negative eigenvalues away.
    pub fn new(q: Matrix) -> Result<Self> {
        linalg::check_symmetric(&q)?;
        let q = linalg::symmetrize(&q);
        if q.nrows() == 0 {
            return Err(Error::InvalidArgument("empty covariance".into()));
        }
        let min = linalg::min_eigenvalue(&q);
        if min < -linalg::psd_tolerance(&q) {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        let q = if min < 0.0 {
            let (vals, vecs) = linalg::eigen_clamped(&q)?;
            linalg::symmetrize(&(&vecs * DMatrix::from_diagonal(&vals) * vecs.transpose()))
        } else {
            q
        };
        Ok(Self { q })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Covariance of the measure, `2Q`.
    pub fn covariance(&self) -> Matrix {
        &self.q * 2.0
    }

    /// Lebesgue density `(4 pi)^{-d/2} det(Q)^{-1/2} exp(-<Q^{-1} x, x>/4)`.
    pub fn density_at(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        Ok(self.density()?.eval(x))
    }

    /// Precomputed density for repeated evaluation.
    pub fn density(&self) -> Result<Density> {
        let min = linalg::min_eigenvalue(&self.q);
        let singular = Error::SingularCovariance {
            min_eigenvalue: min,
        };
        if min <= 1e-10 {
            return Err(singular);
        }
        let chol = self.q.clone().cholesky().ok_or(singular)?;
        let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
        let d = self.dim();
        Ok(Density {
            inv: chol.inverse(),
            norm: 1.0 / ((4.0 * PI).powi(d as i32) * det).sqrt(),
        })
    }

    /// Characteristic function `exp(-<xi, Q xi>)`.
    pub fn char_fn(&self, xi: &[f64]) -> f64 {
        (-linalg::quad_form(&self.q, xi)).exp()
    }

    /// `N(0, Q1) * N(0, Q2) = N(0, Q1 + Q2)`.
    pub fn convolve(&self, other: &GaussianMeasure) -> Result<GaussianMeasure> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(GaussianMeasure {
            q: linalg::symmetrize(&(&self.q + &other.q)),
        })
    }

    /// Linear factor `S` with `S S^T = 2Q`; rows/columns with `q_ii == 0`
    /// are exactly zero so degenerate coordinates never move.
    pub fn sampling_factor(&self) -> Matrix {
        let mut s = linalg::sqrt_psd(&self.q).expect("validated at construction") * 2f64.sqrt();
        for i in 0..self.dim() {
            if self.q[(i, i)] == 0.0 {
                s.row_mut(i).fill(0.0);
                s.column_mut(i).fill(0.0);
            }
        }
        s
    }

    /// `n` i.i.d. draws. Draw `k` uses stream `k` of `seed`, so the output
    /// does not depend on the number of worker threads.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vector> {
        let d = self.dim();
        let factor = self.sampling_factor();
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = StreamRng::new(seed, k as u64);
                let mut z = DVector::zeros(d);
                rng.fill_normal(z.as_mut_slice());
                &factor * z
            })
            .collect()
    }
}

/// Density of a non-degenerate [`GaussianMeasure`].
#[derive(Debug, Clone)]
pub struct Density {
    inv: Matrix,
    norm: f64,
}

impl Density {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.norm * (-0.25 * linalg::quad_form(&self.inv, x)).exp()
    }
}

/// Sample covariance about the known zero mean.
pub fn sample_covariance(samples: &[Vector]) -> Matrix {
    let d = samples.first().map_or(0, |s| s.len());
    let n = samples.len().max(1) as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        cov += s * s.transpose();
    }
    cov / n
}
