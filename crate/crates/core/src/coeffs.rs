//! Time-dependent diffusion matrices `c(t)`, their accumulated covariance
//! `C_sr = int_s^r c(t) dt`, and certification of the partial parabolicity
//! condition `<c(t) xi, xi> >= lambda |I0 xi|^2`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Simpson nodes per unit time used by [`CoefficientPath::accumulate`].
pub const DEFAULT_NODES_PER_UNIT: usize = 256;

type EvalFn = dyn Fn(f64) -> Matrix + Send + Sync;

/// A map `t -> c(t)` onto symmetric `d x d` matrices.
///
/// Cloning is cheap: the evaluator is shared.
#[derive(Clone)]
pub struct CoefficientPath {
    dim: usize,
    t_lo: f64,
    t_hi: f64,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for CoefficientPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientPath")
            .field("dim", &self.dim)
            .field("t_lo", &self.t_lo)
            .field("t_hi", &self.t_hi)
            .finish_non_exhaustive()
    }
}

impl CoefficientPath {
    /// Wraps an arbitrary evaluator. `[t_lo, t_hi]` is the window where the
    /// path may vary; it is informational only.
    pub fn from_fn<F>(dim: usize, t_lo: f64, t_hi: f64, eval: F) -> Self
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        Self {
            dim,
            t_lo,
            t_hi,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(m: Matrix) -> Result<Self> {
        linalg::check_symmetric(&m)?;
        let m = linalg::symmetrize(&m);
        let dim = m.nrows();
        Ok(Self::from_fn(dim, 0.0, 0.0, move |_| m.clone()))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, 0.0, 0.0, move |_| DMatrix::identity(dim, dim))
    }

    /// Entry `(i, j)` is the polynomial `sum_k coeffs[i][j][k] t^k`.
    pub fn polynomial(coeffs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = coeffs.len();
        if dim == 0 || coeffs.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidArgument(
                "polynomial path needs a square table of coefficient lists".into(),
            ));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (&coeffs[i][j], &coeffs[j][i]);
                let n = a.len().max(b.len());
                for k in 0..n {
                    let x = a.get(k).copied().unwrap_or(0.0);
                    let y = b.get(k).copied().unwrap_or(0.0);
                    if (x - y).abs() > linalg::SYMMETRY_TOL {
                        return Err(Error::NotSymmetric {
                            asymmetry: (x - y).abs(),
                        });
                    }
                }
            }
        }
        Ok(Self::from_fn(dim, f64::NEG_INFINITY, f64::INFINITY, move |t| {
            DMatrix::from_fn(dim, dim, |i, j| {
                coeffs[i][j].iter().rev().fold(0.0, |acc, c| acc * t + c)
            })
        }))
    }

    /// Piecewise-linear interpolation of tabulated matrices, held constant
    /// outside the table.
    pub fn table(times: Vec<f64>, mats: Vec<Matrix>) -> Result<Self> {
        if times.is_empty() || times.len() != mats.len() {
            return Err(Error::InvalidArgument("table needs matching, non-empty rows".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("table times must increase strictly".into()));
        }
        let dim = mats[0].nrows();
        for m in &mats {
            if m.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            linalg::check_symmetric(m)?;
        }
        let (lo, hi) = (times[0], *times.last().unwrap());
        Ok(Self::from_fn(dim, lo, hi, move |t| {
            if t <= times[0] {
                return mats[0].clone();
            }
            let last = times.len() - 1;
            if t >= times[last] {
                return mats[last].clone();
            }
            let k = times.partition_point(|&x| x <= t) - 1;
            let w = (t - times[k]) / (times[k + 1] - times[k]);
            &mats[k] * (1.0 - w) + &mats[k + 1] * w
        }))
    }

    /// Reads a table from CSV with header `t, c11, c12, ..., cdd`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| Error::Io(e.to_string()))?;
        let headers = reader.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
        let entries = headers.len().saturating_sub(1);
        let dim = (entries as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries || &headers[0] != "t" {
            return Err(Error::Format(format!(
                "table header must be t, c11, ..., cdd (got {} columns)",
                headers.len()
            )));
        }
        let mut times = Vec::new();
        let mut mats = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::Format(e.to_string()))?;
            times.push(vals[0]);
            mats.push(DMatrix::from_row_slice(dim, dim, &vals[1..]));
        }
        Self::table(times, mats)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t_lo, self.t_hi)
    }

    pub fn eval(&self, t: f64) -> Matrix {
        (self.eval)(t)
    }

    /// The path `t -> factor * c(t)`.
    pub fn scaled(&self, factor: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            dim: self.dim,
            t_lo: self.t_lo,
            t_hi: self.t_hi,
            eval: Arc::new(move |t| inner(t) * factor),
        }
    }

    /// Composite Simpson rule over `[s, r]` with exactly `intervals`
    /// sub-intervals (rounded up to even).
    pub fn simpson(&self, s: f64, r: f64, intervals: usize) -> Result<Matrix> {
        if r < s {
            return Err(Error::ReversedInterval { lo: s, hi: r });
        }
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        if r == s {
            return Ok(acc);
        }
        let n = intervals.max(2).next_multiple_of(2);
        let h = (r - s) / n as f64;
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += self.eval(s + h * k as f64) * w;
        }
        Ok(linalg::symmetrize(&(acc * (h / 3.0))))
    }

    /// `C_sr = int_s^r c(t) dt` with the default node density.
    pub fn accumulate(&self, s: f64, r: f64) -> Result<Matrix> {
        self.accumulate_with(s, r, DEFAULT_NODES_PER_UNIT)
    }

    pub fn accumulate_with(&self, s: f64, r: f64, nodes_per_unit: usize) -> Result<Matrix> {
        if r < s {
            return Err(Error::ReversedInterval { lo: s, hi: r });
        }
        let intervals = ((r - s) * nodes_per_unit as f64).ceil() as usize;
        self.simpson(s, r, intervals)
    }

    /// Accumulated increments `C_{t_k, t_{k+1}}` for consecutive grid times.
    pub fn increments(&self, times: &[f64]) -> Result<Vec<Matrix>> {
        times
            .windows(2)
            .map(|w| {
                let intervals = ((w[1] - w[0]) * DEFAULT_NODES_PER_UNIT as f64).ceil() as usize;
                self.simpson(w[0], w[1], intervals)
            })
            .collect()
    }
}

/// Record of the partial parabolicity condition on a sample of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityCertificate {
    pub p0: usize,
    pub lambda: f64,
    pub t_samples: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Absolute accuracy of the per-time bisection.
pub const LAMBDA_TOL: f64 = 1e-10;

fn psd_with_tol(m: &Matrix, scale: f64) -> bool {
    linalg::min_eigenvalue(m) >= -1e-13 * (1.0 + scale)
}

/// Largest `lambda >= 0` with `c - lambda I0` non-negative definite.
pub fn lambda_at(c: &Matrix, p0: usize) -> f64 {
    let scale = linalg::spectral_norm_bound(c);
    let proj = linalg::leading_projection(c.nrows(), p0);
    let mut hi = (0..p0).map(|i| c[(i, i)]).fold(f64::INFINITY, f64::min);
    if hi <= 0.0 {
        return 0.0;
    }
    if psd_with_tol(&(c - &proj * hi), scale) {
        return hi;
    }
    let mut lo = 0.0;
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        if psd_with_tol(&(c - &proj * mid), scale) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Certifies `<c(t) xi, xi> >= lambda |I0 xi|^2` on `t_grid`, where `I0`
/// projects onto the first `p0` coordinates.
pub fn certify_parabolicity(
    path: &CoefficientPath,
    p0: usize,
    t_grid: &[f64],
) -> Result<ParabolicityCertificate> {
    let d = path.dim();
    if p0 == 0 || p0 > d {
        return Err(Error::InvalidArgument(format!("p0 = {p0} outside [1, {d}]")));
    }
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let c = path.eval(t);
        linalg::check_symmetric(&c)?;
        let c = linalg::symmetrize(&c);
        let min = linalg::min_eigenvalue(&c);
        if min < -linalg::psd_tolerance(&c) {
            return Err(Error::NotPsdAt {
                t,
                min_eigenvalue: min,
            });
        }
        samples.push((t, lambda_at(&c, p0)));
    }
    let lambda = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(ParabolicityCertificate {
        p0,
        lambda,
        t_samples: samples,
        pass: lambda > 0.0,
    })
}

/// Uniform grid of `count` times covering `[a, b]`.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|k| a + (b - a) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// The path `[[1, t/2], [t/2, t^2]]` of the equation
/// `u_t + u_xx + t u_xy + t^2 u_yy = f`.
pub fn mixed_quadratic_path() -> CoefficientPath {
    CoefficientPath::polynomial(vec![
        vec![vec![1.0], vec![0.0, 0.5]],
        vec![vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
    ])
    .expect("symmetric by construction")
}

/// The path `[[1 + e^t, t/2], [t/2, t^2]]` of the drift example
/// `u_t + (1 + e^t) u_xx + t u_xy + t^2 u_yy + y u_y = f`.
pub fn exponential_mixed_path() -> CoefficientPath {
    CoefficientPath::from_fn(2, f64::NEG_INFINITY, f64::INFINITY, |t| {
        Matrix::from_row_slice(2, 2, &[1.0 + t.exp(), t / 2.0, t / 2.0, t * t])
    })
}
