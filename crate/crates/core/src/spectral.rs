//! Solution operator of the backward equation `u_t + Tr(c(t) D^2 u) = f`.
//!
//! Two independent discretisations of the same representation formula:
//!
//! * [`solve_duhamel`]: per frequency, `u^(s, xi) = -int_s^inf
//!   exp(-<C_sr xi, xi>) f^(r, xi) dr`, trapezoidal in `r`, with the
//!   exponent assembled from per-step increments `<C_{t_k t_{k+1}} xi, xi>`
//!   so that `C` is exactly additive on the time grid.
//! * [`solve_space_oracle`]: `u(s, x) = -int_s^inf dr int f(r, x + y)
//!   N(0, C_sr)(dy)`, Simpson in `r` and a grid sum against the Gaussian
//!   density in `y`.
//!
//! The orientation is backward in time: `u(s, .)` only depends on `f(r, .)`
//! for `r >= s`, and vanishes after the last non-zero slice of `f`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coeffs::CoefficientPath;
use crate::error::{Error, Result};
use crate::field::{self, Field, SpectralField};
use crate::gauss::GaussianMeasure;
use crate::grid::{GridSpec, SpaceGrid};
use crate::linalg::{self, Matrix};

/// Standard deviations of padding required between the support of `f` and
/// the box boundary.
pub const PADDING_SIGMAS: f64 = 6.0;

/// Relative threshold defining the numerical support of a field.
pub const SUPPORT_REL: f64 = 1e-12;

/// Forward spatial DFT of every time slice.
pub fn partial_fourier(field: &Field) -> SpectralField {
    field::forward_transform(field)
}

/// Inverse of [`partial_fourier`].
pub fn partial_fourier_inverse(spec: &SpectralField) -> Field {
    field::inverse_transform(spec)
}

/// Wavevector table: `xi[flat * d + a]`, plus Nyquist flags per axis.
pub(crate) struct Wavevectors {
    pub dim: usize,
    pub xi: Vec<f64>,
    pub nyquist: Vec<bool>,
}

impl Wavevectors {
    pub fn new(space: &SpaceGrid) -> Self {
        let d = space.dim();
        let ks: Vec<Vec<f64>> = (0..d).map(|a| space.wavenumbers(a)).collect();
        let mut xi = vec![0.0; space.len() * d];
        let mut nyquist = vec![false; space.len() * d];
        let mut idx = vec![0; d];
        for flat in 0..space.len() {
            space.unravel(flat, &mut idx);
            for a in 0..d {
                xi[flat * d + a] = ks[a][idx[a]];
                nyquist[flat * d + a] = idx[a] == space.points[a] / 2;
            }
        }
        Self { dim: d, xi, nyquist }
    }

    #[inline]
    pub fn at(&self, flat: usize) -> &[f64] {
        &self.xi[flat * self.dim..(flat + 1) * self.dim]
    }

    /// Symbol of `d^2 / dx_i dx_j` (0-based axes).
    #[inline]
    pub fn second_symbol(&self, flat: usize, i: usize, j: usize) -> f64 {
        let xi = self.at(flat);
        if i != j && (self.nyquist[flat * self.dim + i] || self.nyquist[flat * self.dim + j]) {
            return 0.0;
        }
        -xi[i] * xi[j]
    }

    /// Symbol of `Tr(c D^2)`.
    #[inline]
    pub fn trace_symbol(&self, flat: usize, c: &Matrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let cij = c[(i, j)];
                if cij != 0.0 {
                    acc += cij * self.second_symbol(flat, i, j);
                }
            }
        }
        acc
    }

    /// Symbol of `d / dx_i` (without the factor `i`); zero at Nyquist.
    #[inline]
    pub fn first_symbol(&self, flat: usize, i: usize) -> f64 {
        if self.nyquist[flat * self.dim + i] {
            0.0
        } else {
            self.at(flat)[i]
        }
    }
}

/// Checks that the box leaves `PADDING_SIGMAS` standard deviations of the
/// largest accumulated Gaussian around the support of `f`, on every axis
/// along which `f` varies.
pub fn check_padding(path: &CoefficientPath, f: &Field) -> Result<()> {
    let grid = f.grid();
    let Some(extent) = f.support_extent(SUPPORT_REL) else {
        return Ok(());
    };
    let total = path.accumulate(grid.t_min, grid.t_max())?;
    let sigma = (2.0 * linalg::max_eigenvalue(&total).max(0.0)).sqrt();
    let varying = f.varying_axes();
    for a in 0..grid.dim() {
        if !varying[a] {
            continue;
        }
        let required = extent[a] + PADDING_SIGMAS * sigma;
        let actual = grid.space.half_widths[a];
        if required > actual {
            return Err(Error::GridTooSmall {
                axis: a,
                required,
                actual,
            });
        }
    }
    Ok(())
}

fn check_path_dim(path: &CoefficientPath, grid: &GridSpec) -> Result<()> {
    if path.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: path.dim(),
        });
    }
    Ok(())
}

/// Transformed solution `u^` of the backward problem (see module docs).
pub fn solve_duhamel_spectral(path: &CoefficientPath, f: &Field) -> Result<SpectralField> {
    let grid = f.grid().clone();
    check_path_dim(path, &grid)?;
    check_padding(path, f)?;
    let fhat = partial_fourier(f);
    let increments = path.increments(&grid.times())?;
    let waves = Wavevectors::new(&grid.space);
    let ns = grid.slice_len();
    let nt = grid.nt;
    let dt = grid.dt;

    let mut uhat = vec![Complex64::new(0.0, 0.0); grid.len()];
    // running tail sum R_k = sum_{m > k} w_m exp(-(q_m - q_k)) f^_m
    let mut tail = vec![Complex64::new(0.0, 0.0); ns];
    for k in (0..nt.saturating_sub(1)).rev() {
        let next_weight = if k + 1 == nt - 1 { 0.5 * dt } else { dt };
        let inc = &increments[k];
        let f_next = fhat.slice(k + 1);
        let f_here = fhat.slice(k);
        let out = &mut uhat[k * ns..(k + 1) * ns];
        tail.par_iter_mut()
            .zip(out.par_iter_mut())
            .enumerate()
            .for_each(|(j, (r, o))| {
                let q = linalg::quad_form(inc, waves.at(j));
                *r = (*r + f_next[j] * next_weight) * (-q).exp();
                *o = -(*r + f_here[j] * (0.5 * dt));
            });
    }
    Ok(SpectralField::from_parts(grid, uhat))
}

/// Solution `u` of `u_t + Tr(c D^2 u) = f` in physical space.
pub fn solve_duhamel(path: &CoefficientPath, f: &Field) -> Result<Field> {
    Ok(partial_fourier_inverse(&solve_duhamel_spectral(path, f)?))
}

fn axis_pair(dim: usize, i: usize, j: usize) -> Result<(usize, usize)> {
    for axis in [i, j] {
        if axis == 0 || axis > dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
    }
    Ok((i - 1, j - 1))
}

/// Applies a per-slice spectral multiplier `m(k, flat)` and returns the real
/// physical field.
fn apply_multiplier<M>(spec: &SpectralField, m: M) -> Field
where
    M: Fn(usize, usize) -> Complex64 + Sync,
{
    let ns = spec.grid().slice_len();
    let mut out = spec.clone();
    out.values_mut()
        .par_chunks_mut(ns)
        .enumerate()
        .for_each(|(k, slice)| {
            for (flat, v) in slice.iter_mut().enumerate() {
                *v *= m(k, flat);
            }
        });
    partial_fourier_inverse(&out)
}

/// `d^2 u / dx_i dx_j` (axes 1-based) of a transformed field.
pub fn second_derivative_spectral(spec: &SpectralField, i: usize, j: usize) -> Result<Field> {
    let (a, b) = axis_pair(spec.grid().dim(), i, j)?;
    let waves = Wavevectors::new(&spec.grid().space);
    Ok(apply_multiplier(spec, |_, flat| {
        Complex64::new(waves.second_symbol(flat, a, b), 0.0)
    }))
}

/// Spectral `d^2 u / dx_i dx_j` (axes 1-based) with multiplier `-xi_i xi_j`.
pub fn second_derivative(u: &Field, i: usize, j: usize) -> Result<Field> {
    axis_pair(u.grid().dim(), i, j)?;
    second_derivative_spectral(&partial_fourier(u), i, j)
}

/// Spectral `du / dx_i` (1-based axis).
pub fn first_derivative(u: &Field, i: usize) -> Result<Field> {
    let (a, _) = axis_pair(u.grid().dim(), i, i)?;
    let waves = Wavevectors::new(&u.grid().space);
    Ok(apply_multiplier(&partial_fourier(u), |_, flat| {
        Complex64::new(0.0, waves.first_symbol(flat, a))
    }))
}

/// `Tr(c(t) D^2 u)` slice by slice.
pub fn trace_term(u: &Field, path: &CoefficientPath) -> Result<Field> {
    check_path_dim(path, u.grid())?;
    let grid = u.grid();
    let waves = Wavevectors::new(&grid.space);
    let coeffs: Vec<Matrix> = grid.times().iter().map(|&t| path.eval(t)).collect();
    Ok(apply_multiplier(&partial_fourier(u), |k, flat| {
        Complex64::new(waves.trace_symbol(flat, &coeffs[k]), 0.0)
    }))
}

/// Second-order finite-difference `du/dt` (centred inside, one-sided at the
/// two ends).
pub fn time_derivative(u: &Field) -> Field {
    let grid = u.grid().clone();
    let nt = grid.nt;
    let dt = grid.dt;
    let mut out = Field::zeros(grid);
    if nt < 3 {
        if nt == 2 {
            let (a, b) = (u.slice(0).to_vec(), u.slice(1).to_vec());
            for k in 0..2 {
                for (o, (x, y)) in out.slice_mut(k).iter_mut().zip(a.iter().zip(&b)) {
                    *o = (y - x) / dt;
                }
            }
        }
        return out;
    }
    for k in 0..nt {
        let (c0, c1, c2, k0, k1, k2) = if k == 0 {
            (-1.5, 2.0, -0.5, 0, 1, 2)
        } else if k == nt - 1 {
            (0.5, -2.0, 1.5, nt - 3, nt - 2, nt - 1)
        } else {
            (-0.5, 0.0, 0.5, k - 1, k, k + 1)
        };
        let (s0, s1, s2) = (u.slice(k0).to_vec(), u.slice(k1).to_vec(), u.slice(k2).to_vec());
        for (flat, o) in out.slice_mut(k).iter_mut().enumerate() {
            *o = (c0 * s0[flat] + c1 * s1[flat] + c2 * s2[flat]) / dt;
        }
    }
    out
}

/// A-posteriori residual `u_t + Tr(c D^2 u) - f`.
pub fn residual(u: &Field, f: &Field, path: &CoefficientPath) -> Result<Field> {
    if !u.grid().same_as(f.grid()) {
        return Err(Error::GridMismatch);
    }
    let ut = time_derivative(u);
    let lu = trace_term(u, path)?;
    let r = ut.combine(1.0, &lu, 1.0)?;
    r.combine(1.0, f, -1.0)
}

/// Relative residual `||r||_2 / ||f||_2` on the grid.
pub fn relative_residual(r: &Field, f: &Field) -> f64 {
    let num: f64 = r.values().iter().map(|v| v * v).sum();
    let den: f64 = f.values().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

/// How the space-domain oracle treats degenerate covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Convolve over every axis; any singular `C_sr` with `r > s` is an error.
    Full,
    /// Convolve only along axes where `f` varies, and treat axes with
    /// (numerically) zero accumulated variance as point masses.
    Degenerate,
}

/// Normalised grid weights of `N(0, C)` restricted to `axes`, as
/// (offset per axis, weight) pairs. `None` means a point mass at 0.
fn kernel_weights(
    space: &SpaceGrid,
    cov: &Matrix,
    axes: &[usize],
    mode: OracleMode,
) -> Result<Option<Vec<(Vec<isize>, f64)>>> {
    let scale = (0..cov.nrows()).map(|a| cov[(a, a)]).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(None);
    }
    let active: Vec<usize> = match mode {
        OracleMode::Full => axes.to_vec(),
        OracleMode::Degenerate => axes
            .iter()
            .copied()
            .filter(|&a| (2.0 * cov[(a, a)].max(0.0)).sqrt() >= space.spacing(a) / 8.0)
            .collect(),
    };
    if active.is_empty() {
        return Ok(None);
    }
    let marginal = Matrix::from_fn(active.len(), active.len(), |p, q| cov[(active[p], active[q])]);
    let density = GaussianMeasure::new(marginal.clone())?.density()?;
    let radius: Vec<isize> = active
        .iter()
        .map(|&a| {
            let sigma = (2.0 * cov[(a, a)]).sqrt();
            let r = (8.5 * sigma / space.spacing(a)).ceil() as isize + 1;
            r.min(space.points[a] as isize / 2 - 1)
        })
        .collect();
    let mut out = Vec::new();
    let mut offs = vec![0isize; active.len()];
    let mut y = vec![0.0; active.len()];
    let counts: Vec<usize> = radius.iter().map(|r| (2 * r + 1) as usize).collect();
    let total: usize = counts.iter().product();
    let mut sum = 0.0;
    for mut combo in 0..total {
        for p in 0..active.len() {
            offs[p] = (combo % counts[p]) as isize - radius[p];
            combo /= counts[p];
            y[p] = offs[p] as f64 * space.spacing(active[p]);
        }
        let w = density.eval(&y);
        sum += w;
        let mut full = vec![0isize; space.dim()];
        for (p, &a) in active.iter().enumerate() {
            full[a] = offs[p];
        }
        out.push((full, w));
    }
    for (_, w) in &mut out {
        *w /= sum;
    }
    Ok(Some(out))
}

/// Composite Simpson weights over `n` equal intervals (3/8 rule on the last
/// three when `n` is odd; trapezoid when `n == 1`).
pub(crate) fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let even = if n.is_multiple_of(2) { n } else { n - 3 };
            for k in 0..even / 2 {
                w[2 * k] += h / 3.0;
                w[2 * k + 1] += 4.0 * h / 3.0;
                w[2 * k + 2] += h / 3.0;
            }
            if n % 2 == 1 {
                let b = even;
                for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[b + o] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

struct OracleSetup {
    axes: Vec<usize>,
    strides: Vec<usize>,
}

fn oracle_setup(path: &CoefficientPath, f: &Field, mode: OracleMode) -> Result<OracleSetup> {
    check_path_dim(path, f.grid())?;
    let axes = match mode {
        OracleMode::Full => (0..f.grid().dim()).collect(),
        OracleMode::Degenerate => f
            .varying_axes()
            .iter()
            .enumerate()
            .filter_map(|(a, &v)| v.then_some(a))
            .collect(),
    };
    Ok(OracleSetup {
        axes,
        strides: f.grid().space.strides(),
    })
}

fn convolve_at(
    space: &SpaceGrid,
    strides: &[usize],
    slice: &[f64],
    node: &[usize],
    kernel: &Option<Vec<(Vec<isize>, f64)>>,
) -> f64 {
    let Some(weights) = kernel else {
        return slice[space.ravel(node)];
    };
    let mut acc = 0.0;
    for (off, w) in weights {
        let mut flat = 0usize;
        for a in 0..space.dim() {
            let n = space.points[a] as isize;
            let k = (node[a] as isize + off[a]).rem_euclid(n) as usize;
            flat += k * strides[a];
        }
        acc += w * slice[flat];
    }
    acc
}

/// Space-domain oracle at time node `k` and spatial node `node`.
pub fn space_oracle_at(
    path: &CoefficientPath,
    f: &Field,
    k: usize,
    node: &[usize],
    mode: OracleMode,
) -> Result<f64> {
    let setup = oracle_setup(path, f, mode)?;
    let grid = f.grid();
    if k >= grid.nt || node.len() != grid.dim() {
        return Err(Error::InvalidArgument("probe outside the grid".into()));
    }
    let n = grid.nt - 1 - k;
    let weights = simpson_weights(n, grid.dt);
    let s = grid.time(k);
    let mut acc = 0.0;
    for (o, w) in weights.iter().enumerate() {
        let m = k + o;
        let slice = f.slice(m);
        if slice.iter().all(|&v| v == 0.0) {
            continue;
        }
        let cov = path.accumulate(s, grid.time(m))?;
        let kernel = kernel_weights(&grid.space, &cov, &setup.axes, mode)?;
        acc += w * convolve_at(&grid.space, &setup.strides, slice, node, &kernel);
    }
    Ok(-acc)
}

/// Space-domain oracle on the whole grid (cost grows like `nt^2` times the
/// kernel size; intended for small validation grids).
pub fn solve_space_oracle(path: &CoefficientPath, f: &Field, mode: OracleMode) -> Result<Field> {
    let setup = oracle_setup(path, f, mode)?;
    let grid = f.grid().clone();
    let ns = grid.slice_len();
    let mut out = Field::zeros(grid.clone());
    let slices: Vec<Result<Vec<f64>>> = (0..grid.nt)
        .into_par_iter()
        .map(|k| {
            let n = grid.nt - 1 - k;
            let weights = simpson_weights(n, grid.dt);
            let s = grid.time(k);
            let mut acc = vec![0.0; ns];
            let mut node = vec![0; grid.dim()];
            for (o, w) in weights.iter().enumerate() {
                let m = k + o;
                let slice = f.slice(m);
                if slice.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let cov = path.accumulate(s, grid.time(m))?;
                let kernel = kernel_weights(&grid.space, &cov, &setup.axes, mode)?;
                for (flat, a) in acc.iter_mut().enumerate() {
                    grid.space.unravel(flat, &mut node);
                    *a -= w * convolve_at(&grid.space, &setup.strides, slice, &node, &kernel);
                }
            }
            Ok(acc)
        })
        .collect();
    for (k, s) in slices.into_iter().enumerate() {
        out.slice_mut(k).copy_from_slice(&s?);
    }
    Ok(out)
}
