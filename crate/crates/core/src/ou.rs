//! Reduction of `u_t + Tr(c(t) D^2 u) + <Ax, Du> = f` to a drift-free
//! problem through the moving frame `v(t, y) = u(t, e^{tA} y)`.
//!
//! In the new frame `v_t + Tr(c0(t) D^2 v) = f(t, e^{tA} y)` with
//! `c0(t) = e^{-tA} c(t) e^{-tA^T}`, so the spectral solver applies directly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{self, CoefficientPath};
use crate::error::{Error, Result};
use crate::fft::SliceFft;
use crate::field::{Field, SpaceField};
use crate::grid::{GridSpec, SpaceGrid};
use crate::interp::CubicSpline;
use crate::linalg::{self, Matrix};
use crate::spectral::{self, Wavevectors};

/// Tolerance on the off-diagonal blocks of `A` in [`check_invariance`].
pub const BLOCK_TOL: f64 = 1e-14;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
/// Relative magnitude below which values carried out of the box are
/// dropped instead of reported as an escape; matches the wrap-around level
/// tolerated by the padding rule.
pub const ESCAPE_REL: f64 = 1e-8;

const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{tA}` by scaling and squaring with the degree-13 Pade approximant.
pub fn matrix_exp(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    if n == 0 {
        return id;
    }
    let mut x = a * t;
    let norm = one_norm(&x);
    if norm == 0.0 {
        return id;
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    x /= 2f64.powi(s);
    let b = &PADE13;
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let inner_u = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]) + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1];
    let u = &x * inner_u;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]) + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is nonsingular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn check_p0(dim: usize, p0: usize) -> Result<()> {
    if p0 == 0 || p0 > dim {
        return Err(Error::InvalidArgument(format!(
            "p0 = {p0} outside 1..={dim}"
        )));
    }
    Ok(())
}

/// Largest entry of the two off-diagonal blocks of `A` with respect to the
/// split `{1..p0} | {p0+1..d}`.
pub fn block_coupling(a: &Matrix, p0: usize) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if (i < p0) != (j < p0) {
                worst = worst.max(a[(i, j)].abs());
            }
        }
    }
    worst
}

/// Whether `A` leaves both the first `p0` coordinates and their complement
/// invariant. A positive answer is double-checked through the commutation
/// `I0 e^{sA^T} = e^{sA^T} I0` at ten times in `[-1, 1]`.
pub fn check_invariance(a: &Matrix, p0: usize) -> Result<bool> {
    let d = linalg::check_square(a)?;
    check_p0(d, p0)?;
    if block_coupling(a, p0) > BLOCK_TOL {
        return Ok(false);
    }
    let proj = linalg::leading_projection(d, p0);
    let at = a.transpose();
    for s in coeffs::linspace(-1.0, 1.0, 10) {
        let e = matrix_exp(&at, s);
        let gap = (&proj * &e - &e * &proj).amax();
        if gap > 1e-12 * (1.0 + e.amax()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `||e^{tA}|| <= eta e^{omega |t|}` for `|t| <= horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub eta: f64,
    pub omega: f64,
}

impl GrowthBound {
    pub fn holds_at(&self, a: &Matrix, t: f64) -> bool {
        linalg::operator_norm(&matrix_exp(a, t)) <= self.eta * (self.omega * t.abs()).exp() * (1.0 + 1e-12)
    }
}

/// `omega` is the largest `|Re mu|` over eigenvalues `mu` of `A`; `eta` is
/// the sampled supremum of `||e^{tA}|| e^{-omega |t|}` rounded up by 5%,
/// then re-verified on a ten times finer sample.
pub fn growth_constants(a: &Matrix, horizon: f64) -> Result<GrowthBound> {
    linalg::check_square(a)?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let omega = if a.nrows() == 0 {
        0.0
    } else {
        a.clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max)
    };
    let scaled_norm = |t: f64| linalg::operator_norm(&matrix_exp(a, t)) * (-omega * t.abs()).exp();
    let sup = |count: usize| {
        coeffs::linspace(-horizon, horizon, count)
            .into_iter()
            .map(scaled_norm)
            .fold(1.0f64, f64::max)
    };
    let mut eta = sup(201) * 1.05;
    let fine = sup(2001);
    if fine > eta {
        eta = fine * 1.05;
    }
    Ok(GrowthBound { eta, omega })
}

/// `c0(t) = e^{-tA} c(t) e^{-tA^T}` conjugation data.
#[derive(Debug, Clone)]
pub struct OuProblem {
    pub a: Matrix,
    pub path: CoefficientPath,
    pub horizon: f64,
    pub p0: usize,
}

impl OuProblem {
    pub fn new(a: Matrix, path: CoefficientPath, horizon: f64, p0: usize) -> Result<Self> {
        let d = linalg::check_square(&a)?;
        if path.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: path.dim(),
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        check_p0(d, p0)?;
        Ok(Self { a, path, horizon, p0 })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Ensures the block invariance hypothesis; otherwise `HypothesisViolated`.
    pub fn require_invariance(&self) -> Result<()> {
        if check_invariance(&self.a, self.p0)? {
            Ok(())
        } else {
            Err(Error::HypothesisViolated {
                p0: self.p0,
                block_norm: block_coupling(&self.a, self.p0),
            })
        }
    }
}

/// The coefficient path `c0(t) = e^{-tA} c(t) e^{-tA^T}` for `|t| <= T`,
/// frozen at its values at `t = -T` and `t = T` outside that window.
pub fn reduce_coefficients(problem: &OuProblem) -> Result<CoefficientPath> {
    problem.require_invariance()?;
    let a = problem.a.clone();
    let path = problem.path.clone();
    let horizon = problem.horizon;
    let (lo, hi) = path.window();
    Ok(CoefficientPath::from_fn(problem.dim(), lo, hi, move |t| {
        let t = t.clamp(-horizon, horizon);
        let e = matrix_exp(&a, -t);
        linalg::symmetrize(&(&e * path.eval(t) * e.transpose()))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// `v(t, y) = u(t, e^{tA} y)`.
    ToV,
    /// `u(t, x) = v(t, e^{-tA} x)`.
    ToU,
}

/// Jacobian `det e^{tA} = e^{t Tr A}` of the frame change at time `t`.
pub fn frame_jacobian(a: &Matrix, t: f64) -> f64 {
    (t * a.trace()).exp()
}

/// Resamples every time slice in the requested frame using periodic cubic
/// splines. Points mapped outside the box read zero; a slice whose support
/// would be carried outside the box is a `SupportEscape`.
pub fn change_frame(field: &Field, a: &Matrix, frame: Frame) -> Result<Field> {
    let grid = field.grid().clone();
    let d = grid.dim();
    if a.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.nrows(),
        });
    }
    let space = grid.space.clone();
    let sign = match frame {
        Frame::ToV => 1.0,
        Frame::ToU => -1.0,
    };
    let thresh = ESCAPE_REL * field.max_abs();
    let fft = SliceFft::new(&space);
    let ns = grid.slice_len();
    let mut out = Field::zeros(grid.clone());
    let results: Vec<Result<()>> = out
        .values_mut()
        .par_chunks_mut(ns)
        .enumerate()
        .map(|(k, target)| {
            let t = grid.time(k);
            let input = field.slice(k);
            if input.iter().all(|&v| v == 0.0) {
                return Ok(());
            }
            // output node y reads input at x = m y
            let m = matrix_exp(a, sign * t);
            let m_inv = matrix_exp(a, -sign * t);
            let mut x = vec![0.0; d];
            let mut y = DVector::zeros(d);
            for (flat, v) in input.iter().enumerate() {
                if v.abs() <= thresh {
                    continue;
                }
                space.point(flat, &mut x);
                y.copy_from(&(&m_inv * DVector::from_column_slice(&x)));
                for axis in 0..d {
                    let limit = space.half_widths[axis] - space.spacing(axis);
                    // points that stay put (e.g. a field constant along an
                    // axis the drift does not move) are not an escape
                    if y[axis].abs() > limit && y[axis].abs() > x[axis].abs() * (1.0 + 1e-12) {
                        return Err(Error::SupportEscape { axis, t });
                    }
                }
            }
            let spline = CubicSpline::with_fft(&space, &fft, input);
            let mut node = vec![0.0; d];
            for (flat, o) in target.iter_mut().enumerate() {
                space.point(flat, &mut node);
                let mapped = &m * DVector::from_column_slice(&node);
                let inside = (0..d).all(|axis| mapped[axis].abs() <= space.half_widths[axis]);
                *o = if inside { spline.eval(mapped.as_slice()) } else { 0.0 };
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(out)
}

/// Intermediate products of [`solve_ou_detailed`].
#[derive(Debug, Clone)]
pub struct OuSolution {
    /// Source in the moving frame, `f(t, e^{tA} y)`.
    pub source_v: Field,
    /// Solution in the moving frame.
    pub v: Field,
    /// Solution in the original frame.
    pub u: Field,
    pub reduced: CoefficientPath,
}

/// Solves `u_t + Tr(c D^2 u) + <Ax, Du> = f` by moving to the drift-free
/// frame, running the spectral solver with `c0`, and moving back.
pub fn solve_ou_detailed(problem: &OuProblem, f: &Field) -> Result<OuSolution> {
    if f.grid().dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: f.grid().dim(),
        });
    }
    let reduced = reduce_coefficients(problem)?;
    let source_v = change_frame(f, &problem.a, Frame::ToV)?;
    let v = spectral::solve_duhamel(&reduced, &source_v)?;
    let u = change_frame(&v, &problem.a, Frame::ToU)?;
    Ok(OuSolution {
        source_v,
        v,
        u,
        reduced,
    })
}

pub fn solve_ou(problem: &OuProblem, f: &Field) -> Result<Field> {
    Ok(solve_ou_detailed(problem, f)?.u)
}

/// Drift term `<Ax, Du>` with spectral first derivatives.
pub fn drift_term(u: &Field, a: &Matrix) -> Result<Field> {
    let grid = u.grid().clone();
    let d = grid.dim();
    let mut out = Field::zeros(grid.clone());
    let mut x = vec![0.0; d];
    for i in 0..d {
        if (0..d).all(|jj| a[(i, jj)] == 0.0) {
            continue;
        }
        let du = spectral::first_derivative(u, i + 1)?;
        let ns = grid.slice_len();
        for (flat_all, (o, g)) in out.values_mut().iter_mut().zip(du.values()).enumerate() {
            grid.space.point(flat_all % ns, &mut x);
            let ax: f64 = (0..d).map(|jj| a[(i, jj)] * x[jj]).sum();
            *o += ax * g;
        }
    }
    Ok(out)
}

/// A-posteriori residual `u_t + Tr(c D^2 u) + <Ax, Du> - f`.
pub fn ou_residual(u: &Field, f: &Field, problem: &OuProblem) -> Result<Field> {
    let base = spectral::residual(u, f, &problem.path)?;
    let drift = drift_term(u, &problem.a)?;
    base.combine(1.0, &drift, 1.0)
}

/// Time profile `psi` on `(-1, 1)` used to lift a stationary function.
#[derive(Clone)]
pub struct Profile {
    name: String,
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile").field("name", &self.name).finish()
    }
}

impl Profile {
    /// `(1 + cos(pi t)) / 2` on `(-1, 1)`.
    pub fn raised_cosine() -> Self {
        Self::custom(
            "raised-cosine",
            |t| if t.abs() < 1.0 { 0.5 * (1.0 + (PI * t).cos()) } else { 0.0 },
            |t| if t.abs() < 1.0 { -0.5 * PI * (PI * t).sin() } else { 0.0 },
        )
    }

    /// `exp(1 - 1 / (1 - t^2))` on `(-1, 1)`.
    pub fn bump() -> Self {
        Self::custom(
            "bump",
            crate::sources::bump,
            |t| {
                if t.abs() < 1.0 {
                    let s = 1.0 - t * t;
                    -2.0 * t / (s * s) * crate::sources::bump(t)
                } else {
                    0.0
                }
            },
        )
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "raised-cosine" => Ok(Self::raised_cosine()),
            "bump" => Ok(Self::bump()),
            other => Err(Error::InvalidArgument(format!("unknown profile '{other}'"))),
        }
    }

    pub fn custom<F, G>(name: &str, value: F, derivative: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.derivative)(t)
    }

    /// `int_{-1}^{1} psi` by Simpson on 2048 intervals.
    pub fn integral(&self) -> f64 {
        let n = 2048;
        let h = 2.0 / n as f64;
        crate::spectral::simpson_weights(n, h)
            .iter()
            .enumerate()
            .map(|(k, w)| w * self.value(-1.0 + h * k as f64))
            .sum()
    }
}

/// Both sides of the elliptic estimate for one `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    pub p: f64,
    pub i: usize,
    pub j: usize,
    /// Smallest eigenvalue of `Q`.
    pub lambda: f64,
    pub profile: String,
    pub profile_integral: f64,
    /// `||w_{x_i x_j}||_p`.
    pub second_derivative_norm: f64,
    /// `||Tr(Q D^2 w) + <Ax, Dw>||_p`.
    pub operator_norm: f64,
    /// `||w||_p`.
    pub w_norm: f64,
    /// `||w_{x_i x_j}||_p / (||A w||_p + ||w||_p)`, 0 for `w = 0`.
    pub ratio: f64,
    /// `||u_{x_i x_j}||_p` for the lift `u = psi w`.
    pub lifted_second_derivative_norm: f64,
    /// `||u_t + L0 u||_p = ||psi' w + psi (A w)||_p`.
    pub lifted_source_norm: f64,
}

fn spatial_apply(w: &SpaceField, symbol: impl Fn(&Wavevectors, usize) -> Complex64) -> Vec<f64> {
    let space = w.grid();
    let fft = SliceFft::new(space);
    let waves = Wavevectors::new(space);
    let mut buf: Vec<Complex64> = w.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    for (flat, c) in buf.iter_mut().enumerate() {
        *c *= symbol(&waves, flat);
    }
    fft.inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// `Tr(Q D^2 w) + <Ax, Dw>` with spectral derivatives.
pub fn elliptic_operator(w: &SpaceField, q: &Matrix, a: &Matrix) -> Vec<f64> {
    let space = w.grid();
    let d = space.dim();
    let mut out = spatial_apply(w, |waves, flat| Complex64::new(waves.trace_symbol(flat, q), 0.0));
    let mut x = vec![0.0; d];
    for i in 0..d {
        if (0..d).all(|j| a[(i, j)] == 0.0) {
            continue;
        }
        let di = spatial_apply(w, |waves, flat| Complex64::new(0.0, waves.first_symbol(flat, i)));
        for (flat, o) in out.iter_mut().enumerate() {
            space.point(flat, &mut x);
            let ax: f64 = (0..d).map(|j| a[(i, j)] * x[j]).sum();
            *o += ax * di[flat];
        }
    }
    out
}

fn space_lp(values: &[f64], space: &SpaceGrid, p: f64) -> f64 {
    let sum: f64 = crate::rng::pairwise_sum(&values.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>());
    (space.cell_volume() * sum).powf(1.0 / p)
}

/// Number of time steps used for the lift on `(-1, 1)`.
pub const LIFT_STEPS: usize = 256;

/// Lifts `w` to `u(t, x) = psi(t) w(x)` on `[-1, 1]` and evaluates both
/// sides of `||w_{x_i x_j}||_p <= C (||A w||_p + ||w||_p)` with
/// `A w = Tr(Q D^2 w) + <Ax, Dw>`.
pub fn elliptic_lift(
    w: &SpaceField,
    psi: &Profile,
    q: &Matrix,
    a: &Matrix,
    p: f64,
    i: usize,
    j: usize,
) -> Result<(Field, EllipticReport)> {
    let space = w.grid().clone();
    let d = space.dim();
    crate::estimates::check_exponent(p)?;
    linalg::check_symmetric(q)?;
    for m in [q, a] {
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: m.nrows(),
            });
        }
    }
    for axis in [i, j] {
        if axis == 0 || axis > d {
            return Err(Error::AxisOutOfRange { axis, dim: d });
        }
    }
    let lambda = linalg::min_eigenvalue(q);
    if lambda <= 0.0 {
        return Err(Error::NotCertified(format!(
            "Q must be positive definite, smallest eigenvalue {lambda}"
        )));
    }
    let integral = psi.integral();
    if !(integral > 0.0) {
        return Err(Error::BadProfile { integral });
    }

    let (a0, b0) = (i - 1, j - 1);
    let wij = spatial_apply(w, |waves, flat| Complex64::new(waves.second_symbol(flat, a0, b0), 0.0));
    let aw = elliptic_operator(w, q, a);
    let second_derivative_norm = space_lp(&wij, &space, p);
    let operator_norm = space_lp(&aw, &space, p);
    let w_norm = space_lp(w.values(), &space, p);
    let denom = operator_norm + w_norm;
    let ratio = if denom == 0.0 { 0.0 } else { second_derivative_norm / denom };

    let grid = GridSpec::with_steps(space.clone(), -1.0, 1.0, LIFT_STEPS)?;
    let mut lifted = Field::zeros(grid.clone());
    let ns = grid.slice_len();
    let mut lhs = Vec::with_capacity(grid.len());
    let mut rhs = Vec::with_capacity(grid.len());
    for k in 0..grid.nt {
        let t = grid.time(k);
        let (pv, dv) = (psi.value(t), psi.derivative(t));
        let slice = lifted.slice_mut(k);
        for flat in 0..ns {
            slice[flat] = pv * w.values()[flat];
            lhs.push(pv * wij[flat]);
            rhs.push(dv * w.values()[flat] + pv * aw[flat]);
        }
    }
    let lifted_second_derivative_norm = crate::estimates::lp_values(&lhs, grid.cell_volume(), p);
    let lifted_source_norm = crate::estimates::lp_values(&rhs, grid.cell_volume(), p);
    let report = EllipticReport {
        p,
        i,
        j,
        lambda,
        profile: psi.name().to_string(),
        profile_integral: integral,
        second_derivative_norm,
        operator_norm,
        w_norm,
        ratio,
        lifted_second_derivative_norm,
        lifted_source_norm,
    };
    Ok((lifted, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        linalg::from_rows(rows).unwrap()
    }

    /// Independent oracle: truncated Taylor series with enough terms for the
    /// small-norm matrices used below.
    fn taylor_exp(a: &Matrix, t: f64) -> Matrix {
        let n = a.nrows();
        let x = a * t;
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * &x / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_examples() {
        let nil = m(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        for t in [-2.0, 0.3, 5.0] {
            assert_relative_eq!(matrix_exp(&nil, t), m(&[vec![1.0, 0.0], vec![t, 1.0]]), epsilon = 1e-13);
        }
        assert_eq!(matrix_exp(&Matrix::zeros(3, 3), 4.0), Matrix::identity(3, 3));
        let e = matrix_exp(&m(&[vec![0.0, 0.0], vec![0.0, 1.0]]), 1.0);
        assert_relative_eq!(e, m(&[vec![1.0, 0.0], vec![0.0, std::f64::consts::E]]), max_relative = 1e-14);
    }

    #[test]
    fn exp_matches_taylor_and_rotations() {
        let a = m(&[vec![0.1, -0.7, 0.2], vec![0.4, -0.3, 0.5], vec![0.0, 0.9, 0.2]]);
        for t in [-1.5, -0.2, 0.7, 2.0] {
            assert_relative_eq!(matrix_exp(&a, t), taylor_exp(&a, t), max_relative = 1e-12);
        }
        // large argument exercises the squaring phase
        let rot = m(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let t = 40.0;
        assert_relative_eq!(
            matrix_exp(&rot, t),
            m(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]),
            epsilon = 1e-11
        );
    }

    #[test]
    fn invariance_examples() {
        let exa = m(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        assert!(check_invariance(&exa, 1).unwrap());
        let ko = m(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert!(!check_invariance(&ko, 1).unwrap());
        assert!(!check_invariance(&ko.transpose(), 1).unwrap());
        assert!(check_invariance(&ko, 2).unwrap());
        assert!(check_invariance(&m(&[vec![3.0, -1.0], vec![2.0, 0.5]]), 2).unwrap());
        assert!(check_invariance(&ko, 0).is_err());
        assert!(check_invariance(&ko, 3).is_err());
    }

    #[test]
    fn reduce_examples() {
        let path = CoefficientPath::identity(2);
        let zero = OuProblem::new(Matrix::zeros(2, 2), path.clone(), 1.0, 1).unwrap();
        let c0 = reduce_coefficients(&zero).unwrap();
        for t in [-3.0, 0.0, 0.5] {
            assert_eq!(c0.eval(t), Matrix::identity(2, 2));
        }
        let exa = OuProblem::new(m(&[vec![0.0, 0.0], vec![0.0, 1.0]]), path.clone(), 1.0, 1).unwrap();
        let c0 = reduce_coefficients(&exa).unwrap();
        for t in [-1.0f64, -0.4, 0.0, 0.9, 1.0] {
            let expected = m(&[vec![1.0, 0.0], vec![0.0, (-2.0 * t).exp()]]);
            assert_relative_eq!(c0.eval(t), expected, max_relative = 1e-13);
        }
        // frozen outside the window
        assert_eq!(c0.eval(3.0), c0.eval(1.0));
        assert_eq!(c0.eval(-3.0), c0.eval(-1.0));
        let ko = OuProblem::new(m(&[vec![0.0, 0.0], vec![1.0, 0.0]]), path, 1.0, 1).unwrap();
        assert!(matches!(
            reduce_coefficients(&ko),
            Err(Error::HypothesisViolated { p0: 1, .. })
        ));
    }

    #[test]
    fn reduced_certificate_keeps_growth_factor() {
        let a = m(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        let base = crate::coeffs::mixed_quadratic_path();
        let problem = OuProblem::new(a.clone(), base.clone(), 1.0, 1).unwrap();
        let c0 = reduce_coefficients(&problem).unwrap();
        let times = coeffs::linspace(-1.0, 1.0, 201);
        let lam = coeffs::certify_parabolicity(&base, 1, &times).unwrap().lambda;
        let lam0 = coeffs::certify_parabolicity(&c0, 1, &times).unwrap().lambda;
        let g = growth_constants(&a, 1.0).unwrap();
        let floor = lam * g.eta.powi(-2) * (-2.0 * g.omega).exp();
        assert!(lam0 >= floor * (1.0 - 1e-6), "{lam0} < {floor}");
    }

    #[test]
    fn growth_examples() {
        let g = growth_constants(&Matrix::zeros(2, 2), 1.0).unwrap();
        assert_relative_eq!(g.eta, 1.05, epsilon = 1e-14);
        assert_eq!(g.omega, 0.0);
        let a = m(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        let g = growth_constants(&a, 1.0).unwrap();
        assert_relative_eq!(g.omega, 1.0, epsilon = 1e-12);
        assert!(g.eta >= 1.0 && g.eta <= 1.06);
        let nil = m(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let g = growth_constants(&nil, 3.0).unwrap();
        assert_eq!(g.omega, 0.0);
        // norm of [[1,0],[t,1]] is (t + sqrt(t^2 + 4)) / 2
        let t = 3.0f64;
        assert!(g.eta >= (t + (t * t + 4.0).sqrt()) / 2.0);
        for s in coeffs::linspace(-3.0, 3.0, 97) {
            assert!(g.holds_at(&nil, s));
        }
        assert!(growth_constants(&nil, 0.0).is_err());
    }

    fn bump_grid(n: usize, steps: usize) -> GridSpec {
        GridSpec::with_steps(SpaceGrid::uniform(2, 16.0, n).unwrap(), -1.0, 1.0, steps).unwrap()
    }

    fn smooth_bump(g: GridSpec) -> Field {
        Field::from_fn(g, |t, x| {
            crate::sources::bump(t / 0.9) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()
        })
    }

    #[test]
    fn frame_change_identity_for_zero_drift() {
        let f = smooth_bump(bump_grid(32, 8));
        let v = change_frame(&f, &Matrix::zeros(2, 2), Frame::ToV).unwrap();
        for (a, b) in v.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-14 * f.max_abs());
        }
    }

    #[test]
    fn frame_roundtrip() {
        let a = m(&[vec![0.0, 0.0], vec![0.0, 1.0]]);
        let f = smooth_bump(bump_grid(512, 8));
        let v = change_frame(&f, &a, Frame::ToV).unwrap();
        let back = change_frame(&v, &a, Frame::ToU).unwrap();
        let err = back.values().iter().zip(f.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * f.max_abs(), "{err}");
    }

    #[test]
    fn frame_preserves_norm_for_traceless_drift() {
        let a = m(&[vec![0.5, 0.0], vec![0.0, -0.5]]);
        let f = smooth_bump(bump_grid(256, 8));
        let v = change_frame(&f, &a, Frame::ToV).unwrap();
        let norm = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in 1..f.grid().nt - 1 {
            let (a, b) = (norm(f.slice(k)), norm(v.slice(k)));
            assert!((a - b).abs() <= 1e-6 * a, "slice {k}: {a} vs {b}");
        }
    }

    #[test]
    fn support_escape_detected() {
        let a = m(&[vec![0.0, 0.0], vec![0.0, 3.0]]);
        let g = bump_grid(64, 8);
        let f = Field::from_fn(g, |t, x| crate::sources::bump(t / 0.9) * (-((x[1] - 6.0).powi(2))).exp());
        assert!(matches!(
            change_frame(&f, &a, Frame::ToV),
            Err(Error::SupportEscape { axis: 1, .. })
        ));
    }

    #[test]
    fn zero_drift_matches_plain_solver() {
        let g = GridSpec::with_steps(SpaceGrid::uniform(2, 20.0, 32).unwrap(), -1.0, 1.0, 16).unwrap();
        let f = smooth_bump(g);
        let path = CoefficientPath::identity(2);
        let problem = OuProblem::new(Matrix::zeros(2, 2), path.clone(), 1.0, 1).unwrap();
        let u = solve_ou(&problem, &f).unwrap();
        let direct = spectral::solve_duhamel(&path, &f).unwrap();
        for (a, b) in u.values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-12 * direct.max_abs());
        }
        let zero = solve_ou(&problem, &Field::zeros(f.grid().clone())).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn profiles() {
        assert_relative_eq!(Profile::raised_cosine().integral(), 1.0, epsilon = 1e-12);
        assert!(Profile::bump().integral() > 0.0);
        let p = Profile::raised_cosine();
        let h = 1e-6;
        for t in [-0.7, 0.1, 0.55] {
            let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-8);
        }
        let b = Profile::bump();
        for t in [-0.7, 0.1, 0.55] {
            let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            assert!((fd - b.derivative(t)).abs() < 1e-7);
        }
        assert!(Profile::named("nope").is_err());
    }

    fn gaussian_w(space: SpaceGrid) -> SpaceField {
        SpaceField::from_fn(space, |x| (-x.iter().map(|v| v * v).sum::<f64>()).exp())
    }

    #[test]
    fn elliptic_zero_and_bad_profile() {
        let space = SpaceGrid::uniform(1, 10.0, 64).unwrap();
        let w = SpaceField::new(space.clone(), vec![0.0; 64]).unwrap();
        let q = Matrix::identity(1, 1);
        let a = Matrix::zeros(1, 1);
        let (_, r) = elliptic_lift(&w, &Profile::raised_cosine(), &q, &a, 2.0, 1, 1).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.second_derivative_norm, 0.0);
        let neg = Profile::custom("negative", |t| -Profile::raised_cosine().value(t), |t| -Profile::raised_cosine().derivative(t));
        assert!(matches!(
            elliptic_lift(&gaussian_w(space), &neg, &q, &a, 2.0, 1, 1),
            Err(Error::BadProfile { .. })
        ));
    }

    #[test]
    fn elliptic_gaussian_closed_form_l2() {
        // w = exp(-x^2): ||w''||_2^2 = 3 sqrt(pi/2), ||w||_2^2 = sqrt(pi/2)
        let space = SpaceGrid::uniform(1, 10.0, 256).unwrap();
        let (_, r) = elliptic_lift(
            &gaussian_w(space),
            &Profile::raised_cosine(),
            &Matrix::identity(1, 1),
            &Matrix::zeros(1, 1),
            2.0,
            1,
            1,
        )
        .unwrap();
        let c = (PI / 2.0).sqrt();
        assert_relative_eq!(r.second_derivative_norm, (3.0 * c).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(r.operator_norm, (3.0 * c).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(r.w_norm, c.sqrt(), max_relative = 1e-10);
        // ||psi||_2 = sqrt(3/4) for the raised cosine
        assert_relative_eq!(r.lifted_second_derivative_norm, (0.75f64).sqrt() * (3.0 * c).sqrt(), max_relative = 1e-6);
    }
}
