//! Wiener partition sums, their Gaussian law, and a Monte-Carlo estimator of
//! the backward solution.
//!
//! Convention: the law of `sqrt(2) * int_a^b F dW` is `N(0, Gamma_ab)` in the
//! crate's Gaussian convention, i.e. covariance `2 Gamma_ab` with
//! `Gamma_ab = int_a^b F F^T ds`.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::interp::CubicSpline;
use crate::coeffs::CoefficientPath;
use crate::linalg::{self, Matrix, Vector};
use crate::rng::{pairwise_sum, StreamRng};

/// Default partition density (steps per unit time).
pub const STEPS_PER_UNIT: usize = 256;

/// Number of frequencies in the characteristic-function check.
pub const CHAR_PROBES: usize = 5;

/// Symmetric square root of a symmetric non-negative matrix.
pub fn matrix_sqrt_psd(m: &Matrix) -> Result<Matrix> {
    linalg::check_symmetric(m)?;
    linalg::sqrt_psd(m)
}

/// A matrix-valued integrand `F(t)` on `[a, b]`.
#[derive(Clone)]
pub struct MatrixPath {
    rows: usize,
    cols: usize,
    a: f64,
    b: f64,
    eval: Arc<dyn Fn(f64) -> Matrix + Send + Sync>,
}

impl std::fmt::Debug for MatrixPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatrixPath")
            .field("shape", &(self.rows, self.cols))
            .field("interval", &(self.a, self.b))
            .finish()
    }
}

impl MatrixPath {
    pub fn from_fn<F>(rows: usize, cols: usize, a: f64, b: f64, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        if b < a {
            return Err(Error::ReversedInterval { lo: a, hi: b });
        }
        let probe = eval(a);
        if probe.shape() != (rows, cols) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: probe.nrows(),
            });
        }
        let path = Self {
            rows,
            cols,
            a,
            b,
            eval: Arc::new(eval),
        };
        let norm = path.frobenius_l2();
        if !norm.is_finite() {
            return Err(Error::InvalidArgument(
                "integrand is not square integrable on its interval".into(),
            ));
        }
        Ok(path)
    }

    pub fn constant(m: Matrix, a: f64, b: f64) -> Result<Self> {
        let (r, c) = m.shape();
        Self::from_fn(r, c, a, b, move |_| m.clone())
    }

    /// `diag(1, s)` and its relatives: `F(s) = diag(d_1(s), ..., d_n(s))`.
    pub fn diagonal<F>(n: usize, a: f64, b: f64, entries: F) -> Result<Self>
    where
        F: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self::from_fn(n, n, a, b, move |s| {
            Matrix::from_diagonal(&DVector::from_fn(n, |i, _| entries(s, i)))
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn eval(&self, t: f64) -> Matrix {
        (self.eval)(t)
    }

    /// `(int_a^b |F|_F^2 ds)^(1/2)` by the trapezoid rule.
    pub fn frobenius_l2(&self) -> f64 {
        let n = partition_steps(self.a, self.b).max(1);
        let h = (self.b - self.a) / n as f64;
        let vals: Vec<f64> = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * self.eval(self.a + h * k as f64).norm_squared()
            })
            .collect();
        (pairwise_sum(&vals) * h).sqrt()
    }
}

fn partition_steps(a: f64, b: f64) -> usize {
    ((b - a) * STEPS_PER_UNIT as f64).ceil() as usize
}

/// Uniform partition of `[a, b]` with the default density.
pub fn default_partition(a: f64, b: f64) -> Vec<f64> {
    let n = partition_steps(a, b);
    if n == 0 {
        return vec![a];
    }
    crate::coeffs::linspace(a, b, n + 1)
}

fn check_partition(partition: &[f64]) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::BadPartition("empty partition".into()));
    }
    if partition.iter().any(|t| !t.is_finite()) {
        return Err(Error::BadPartition("non-finite time".into()));
    }
    if partition.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadPartition("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Wiener increments over a fixed partition, drawn from one random stream.
#[derive(Debug, Clone)]
pub struct BrownianIncrements {
    partition: Vec<f64>,
    increments: Vec<Vector>,
}

impl BrownianIncrements {
    pub fn draw(partition: &[f64], dim: usize, rng: &mut StreamRng) -> Result<Self> {
        check_partition(partition)?;
        let increments = partition
            .windows(2)
            .map(|w| {
                let mut z = DVector::zeros(dim);
                rng.fill_normal(z.as_mut_slice());
                z * (w[1] - w[0]).sqrt()
            })
            .collect();
        Ok(Self {
            partition: partition.to_vec(),
            increments,
        })
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    /// Left-endpoint sum `sum_k F(t_k) (W_{t_{k+1}} - W_{t_k})` over the
    /// partition cells `lo..hi`.
    pub fn integrate(&self, f: &MatrixPath, lo: usize, hi: usize) -> Vector {
        let mut acc = DVector::zeros(f.rows());
        for k in lo..hi.min(self.increments.len()) {
            acc += f.eval(self.partition[k]) * &self.increments[k];
        }
        acc
    }
}

/// One sample of `J = sum_k F(t_k) (W_{t_{k+1}} - W_{t_k})`.
pub fn stochastic_integral(f: &MatrixPath, partition: &[f64], seed: u64) -> Result<Vector> {
    check_partition(partition)?;
    let mut rng = StreamRng::new(seed, 0);
    let w = BrownianIncrements::draw(partition, f.cols(), &mut rng)?;
    Ok(w.integrate(f, 0, partition.len() - 1))
}

/// `Gamma_ab = int_a^b F F^T ds` by composite Simpson.
pub fn gamma_ab(f: &MatrixPath, a: f64, b: f64) -> Result<Matrix> {
    if b < a {
        return Err(Error::ReversedInterval { lo: a, hi: b });
    }
    let mut acc = Matrix::zeros(f.rows(), f.rows());
    if a == b {
        return Ok(acc);
    }
    let n = (2 * partition_steps(a, b)).max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let m = f.eval(a + h * k as f64);
        acc += &m * m.transpose() * w;
    }
    Ok(linalg::symmetrize(&(acc * (h / 3.0))))
}

/// Characteristic-function comparison at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharCheck {
    pub xi: Vec<f64>,
    pub target: f64,
    pub estimate: f64,
    pub deviation: f64,
}

/// Monte-Carlo comparison of the law of `sqrt(2) * int F dW` with its
/// Gaussian target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    /// `2 Gamma_ab`, row-major.
    pub target: Vec<Vec<f64>>,
    /// Sample covariance about zero, row-major.
    pub estimate: Vec<Vec<f64>>,
    pub z_scores: Vec<Vec<f64>>,
    pub max_z: f64,
    pub char_checks: Vec<CharCheck>,
    /// Largest characteristic-function deviation, compared to `3 / sqrt(n)`.
    pub char_max_deviation: f64,
    pub char_pass: bool,
    /// `max_z <= 3`.
    pub pass: bool,
}

/// Fixed probe frequencies, scaled to the target's spread so that the
/// characteristic function stays away from 0 and 1.
fn char_probes(gamma: &Matrix) -> Vec<Vec<f64>> {
    let d = gamma.nrows();
    let scale = 1.0 / (1.0 + linalg::max_eigenvalue(gamma).max(0.0)).sqrt();
    let base: [f64; CHAR_PROBES] = [0.25, 0.5, 0.75, 1.0, 1.25];
    base.iter()
        .enumerate()
        .map(|(m, &b)| {
            (0..d)
                .map(|i| {
                    let sign = if (i + m) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * b * scale / (1.0 + i as f64).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Draws `n` samples of `sqrt(2) * int_a^b F dW` (left-endpoint sums on the
/// default partition) and compares covariance and characteristic function
/// with the exact law.
pub fn mc_law_check(f: &MatrixPath, a: f64, b: f64, n: usize, seed: u64) -> Result<McReport> {
    let partition = default_partition(a, b);
    mc_law_check_on(f, &partition, n, seed)
}

/// [`mc_law_check`] on a caller-supplied partition.
pub fn mc_law_check_on(f: &MatrixPath, partition: &[f64], n: usize, seed: u64) -> Result<McReport> {
    check_partition(partition)?;
    let (a, b) = (partition[0], *partition.last().unwrap());
    let d = f.rows();
    let gamma = gamma_ab(f, a, b)?;
    let target = &gamma * 2.0;
    let samples: Vec<Vector> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = StreamRng::new(seed, k as u64);
            let w = BrownianIncrements::draw(partition, f.cols(), &mut rng)
                .expect("partition validated");
            w.integrate(f, 0, partition.len() - 1) * 2f64.sqrt()
        })
        .collect();
    let nf = n.max(1) as f64;

    let mut estimate = Matrix::zeros(d, d);
    let mut z = Matrix::zeros(d, d);
    let mut terms = vec![0.0; n];
    for i in 0..d {
        for j in i..d {
            for (t, s) in terms.iter_mut().zip(&samples) {
                *t = s[i] * s[j];
            }
            let e = pairwise_sum(&terms) / nf;
            estimate[(i, j)] = e;
            estimate[(j, i)] = e;
            let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / nf).sqrt();
            let diff = (e - target[(i, j)]).abs();
            let zij = if se > 0.0 {
                diff / se
            } else if diff <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            z[(i, j)] = zij;
            z[(j, i)] = zij;
        }
    }
    let max_z = z.iter().copied().fold(0.0, f64::max);

    let mut char_checks = Vec::with_capacity(CHAR_PROBES);
    for xi in char_probes(&gamma) {
        for (t, s) in terms.iter_mut().zip(&samples) {
            let phase: f64 = xi.iter().zip(s.iter()).map(|(x, y)| x * y).sum();
            *t = phase.cos();
        }
        let estimate = if n == 0 { 1.0 } else { pairwise_sum(&terms) / nf };
        let target = (-linalg::quad_form(&gamma, &xi)).exp();
        char_checks.push(CharCheck {
            deviation: (estimate - target).abs(),
            xi,
            target,
            estimate,
        });
    }
    let char_max_deviation = char_checks.iter().map(|c| c.deviation).fold(0.0, f64::max);
    Ok(McReport {
        n,
        target: linalg::to_rows(&target),
        estimate: linalg::to_rows(&estimate),
        z_scores: linalg::to_rows(&z),
        max_z,
        char_checks,
        char_max_deviation,
        char_pass: char_max_deviation <= 3.0 / nf.sqrt(),
        pass: max_z <= 3.0,
    })
}

/// Monte-Carlo estimate of `u(s, x) = -int_s^inf E f(r, x + X_r) dr` with
/// `X_r = sqrt(2) int_s^r sqrt(c(t)) dW_t`.
///
/// `s` must be a time node of `f`'s grid. The `r`-integral uses the
/// trapezoid rule on the grid nodes; between nodes the path is advanced with
/// left-endpoint Euler steps at the default partition density, and `f` is
/// evaluated off-grid with periodic cubic splines. Returns the mean and its
/// standard error.
pub fn mc_solve(
    path: &CoefficientPath,
    f: &Field,
    s: f64,
    x: &[f64],
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let grid = f.grid();
    let d = grid.dim();
    if path.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: path.dim(),
        });
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let pos = (s - grid.t_min) / grid.dt;
    let k0 = pos.round();
    if (pos - k0).abs() > 1e-9 || k0 < 0.0 || k0 as usize >= grid.nt {
        return Err(Error::InvalidArgument(format!(
            "start time {s} is not a node of the field's time grid"
        )));
    }
    let k0 = k0 as usize;
    let last = match f.time_support() {
        Some((_, hi)) if hi >= k0 => hi,
        _ => return Ok((0.0, 0.0)),
    };
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }

    let nodes = last - k0;
    let dt = grid.dt;
    let sub = ((dt * STEPS_PER_UNIT as f64).ceil() as usize).max(1);
    let h = dt / sub as f64;
    // sqrt(2 h c(t)) at every Euler step, shared by all samples
    let roots: Vec<Matrix> = (0..nodes * sub)
        .map(|m| {
            let t = grid.time(k0) + h * m as f64;
            linalg::sqrt_psd(&(path.eval(t) * (2.0 * h)))
        })
        .collect::<Result<_>>()?;
    let splines: Vec<Option<CubicSpline>> = (k0..=last)
        .map(|k| {
            let slice = f.slice(k);
            slice
                .iter()
                .any(|&v| v != 0.0)
                .then(|| CubicSpline::new(&grid.space, slice))
        })
        .collect();
    let weights: Vec<f64> = (0..=nodes)
        .map(|o| {
            let end = o == 0 || o == nodes;
            if nodes == 0 {
                0.0
            } else if end {
                0.5 * dt
            } else {
                dt
            }
        })
        .collect();

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, i as u64);
            let mut pos = DVector::from_column_slice(x);
            let mut z = DVector::zeros(d);
            let mut acc = 0.0;
            for o in 0..=nodes {
                if o > 0 {
                    for m in 0..sub {
                        rng.fill_normal(z.as_mut_slice());
                        pos += &roots[(o - 1) * sub + m] * &z;
                    }
                }
                if let Some(spline) = &splines[o] {
                    acc += weights[o] * spline.eval(pos.as_slice());
                }
            }
            -acc
        })
        .collect();
    let nf = n as f64;
    let mean = pairwise_sum(&values) / nf;
    let centered: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if n > 1 {
        pairwise_sum(&centered) / (nf - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / nf).sqrt()))
}
