//! Grid `L^p` norms and empirical ratios `||u_{x_i x_j}||_p / ||f||_p`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{self, CoefficientPath};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::Matrix;
use crate::ou::GrowthBound;
use crate::rng::pairwise_sum;
use crate::spectral;

/// Relative slack on multiplier bounds.
pub const BOUND_SLACK: f64 = 0.05;

/// Tolerance on `lambda N(lambda)` in [`sweep_lambda`].
pub const SWEEP_TOL: f64 = 0.02;

pub fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::BadExponent(p))
    }
}

/// `(cell * sum |v|^p)^(1/p)` with pairwise summation.
pub fn lp_values(values: &[f64], cell: f64, p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    // normalise by the max to keep |v|^p in range for large p
    let powers: Vec<f64> = values.iter().map(|v| (v.abs() / max).powf(p)).collect();
    max * (cell * pairwise_sum(&powers)).powf(1.0 / p)
}

/// Riemann-sum `L^p` norm over time and space.
pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(lp_values(field.values(), field.grid().cell_volume(), p))
}

/// `L^2` norm computed on the frequency side via Parseval.
pub fn l2_norm_spectral(field: &Field) -> f64 {
    let spec = spectral::partial_fourier(field);
    let ns = field.grid().slice_len() as f64;
    let powers: Vec<f64> = spec.values().iter().map(|c| c.norm_sqr()).collect();
    (field.grid().cell_volume() * pairwise_sum(&powers) / ns).sqrt()
}

/// `sup_{tau, xi} |xi_i xi_j| / sqrt(tau^2 + |xi|^4)`: 1 on the diagonal
/// and 1/2 off it, independently of the dimension.
pub fn l2_multiplier_oracle(i: usize, j: usize, dim: usize) -> Result<f64> {
    for axis in [i, j] {
        if axis == 0 || axis > dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
    }
    Ok(if i == j { 1.0 } else { 0.5 })
}

/// Measured ratio for one source and one derivative pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub p: f64,
    pub i: usize,
    pub j: usize,
    pub ratio: f64,
    /// Parabolicity constant of the path on the source's time grid.
    pub lambda: f64,
    /// `L^2` multiplier bound divided by `lambda` (present only for `p = 2`).
    pub bound: Option<f64>,
    /// `ratio <= bound * (1 + BOUND_SLACK)`, present only with a bound.
    pub pass: Option<bool>,
    /// Whether the ratio also satisfies the uniform constant `1 / (2 lambda)`
    /// (present only for `p = 2`).
    pub within_half: Option<bool>,
}

impl EstimateReport {
    fn new(p: f64, i: usize, j: usize, ratio: f64, lambda: f64, bound: Option<f64>) -> Self {
        let slack = 1.0 + BOUND_SLACK;
        Self {
            p,
            i,
            j,
            ratio,
            lambda,
            bound,
            pass: bound.map(|b| ratio <= b * slack),
            within_half: bound.map(|_| ratio <= 0.5 / lambda * slack),
        }
    }
}

fn certified_lambda(path: &CoefficientPath, f: &Field, p0: usize, i: usize, j: usize) -> Result<f64> {
    let d = f.grid().dim();
    for axis in [i, j] {
        if axis == 0 || axis > d {
            return Err(Error::AxisOutOfRange { axis, dim: d });
        }
    }
    if i > p0 || j > p0 {
        return Err(Error::NotCertified(format!(
            "derivative axes ({i}, {j}) exceed p0 = {p0}"
        )));
    }
    let cert = coeffs::certify_parabolicity(path, p0, &f.grid().times())?;
    if cert.lambda <= 0.0 {
        return Err(Error::NotCertified(format!(
            "parabolicity constant vanishes for p0 = {p0}"
        )));
    }
    Ok(cert.lambda)
}

/// Solves with `f`, differentiates along `(i, j)` (1-based) and reports
/// `||u_{x_i x_j}||_p / ||f||_p`; for `p = 2` the exact multiplier bound
/// `l2_multiplier_oracle / lambda` is attached.
pub fn estimate_ratio(
    path: &CoefficientPath,
    f: &Field,
    p: f64,
    i: usize,
    j: usize,
    p0: usize,
) -> Result<EstimateReport> {
    check_exponent(p)?;
    let lambda = certified_lambda(path, f, p0, i, j)?;
    let bound = if p == 2.0 {
        Some(l2_multiplier_oracle(i, j, f.grid().dim())? / lambda)
    } else {
        None
    };
    let fnorm = lp_norm(f, p)?;
    if fnorm == 0.0 {
        return Ok(EstimateReport::new(p, i, j, 0.0, lambda, bound));
    }
    let spec = spectral::solve_duhamel_spectral(path, f)?;
    let uij = spectral::second_derivative_spectral(&spec, i, j)?;
    let ratio = lp_norm(&uij, p)? / fnorm;
    Ok(EstimateReport::new(p, i, j, ratio, lambda, bound))
}

/// Supremum of [`estimate_ratio`] over a family, plus the individual reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEstimate {
    pub sup_ratio: f64,
    pub argmax: usize,
    pub reports: Vec<EstimateReport>,
}

pub fn family_estimate(
    path: &CoefficientPath,
    family: &[Field],
    p: f64,
    i: usize,
    j: usize,
    p0: usize,
) -> Result<FamilyEstimate> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty source family".into()));
    }
    let reports: Vec<EstimateReport> = family
        .par_iter()
        .map(|f| estimate_ratio(path, f, p, i, j, p0))
        .collect::<Result<_>>()?;
    let (argmax, sup_ratio) = reports
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, r)| if r.ratio > acc.1 { (k, r.ratio) } else { acc });
    Ok(FamilyEstimate {
        sup_ratio,
        argmax,
        reports,
    })
}

/// One row of the scaling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Empirical supremum `N(lambda)` over the dilated family.
    pub sup_ratio: f64,
    /// `lambda N(lambda)`.
    pub scaled: f64,
    /// `|lambda N(lambda) - N(1)| / N(1)`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub p: f64,
    pub i: usize,
    pub j: usize,
    pub reference: f64,
    pub rows: Vec<SweepRow>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// The source `f(t, y / sqrt(lambda))` sampled on the box dilated by
/// `sqrt(lambda)`: the same array on a stretched grid.
pub fn dilate_source(f: &Field, lambda: f64) -> Result<Field> {
    let mut grid = f.grid().clone();
    grid.space = grid.space.dilated(lambda.sqrt());
    Field::new(grid, f.values().to_vec())
}

/// For each `lambda`, measures `N(lambda)` for the path `lambda * c` on the
/// dilated family and compares `lambda N(lambda)` with `N(1)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lambda(
    base: &CoefficientPath,
    lambdas: &[f64],
    family: &[Field],
    p: f64,
    i: usize,
    j: usize,
    p0: usize,
) -> Result<SweepTable> {
    check_exponent(p)?;
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("no lambda values".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {bad}")));
    }
    let first = family
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty source family".into()))?;
    let base_lambda = certified_lambda(base, first, p0, i, j)?;
    if (base_lambda - 1.0).abs() > 1e-6 {
        return Err(Error::NotCertified(format!(
            "base path must have parabolicity constant 1, found {base_lambda}"
        )));
    }
    let measure = |lambda: f64| -> Result<f64> {
        let path = base.scaled(lambda);
        let dilated: Vec<Field> = family.iter().map(|f| dilate_source(f, lambda)).collect::<Result<_>>()?;
        Ok(family_estimate(&path, &dilated, p, i, j, p0)?.sup_ratio)
    };
    let reference = measure(1.0)?;
    let rows: Vec<SweepRow> = lambdas
        .iter()
        .map(|&lambda| {
            let sup_ratio = if lambda == 1.0 { reference } else { measure(lambda)? };
            let scaled = lambda * sup_ratio;
            let deviation = if reference == 0.0 {
                if scaled == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (scaled - reference).abs() / reference
            };
            Ok(SweepRow {
                lambda,
                sup_ratio,
                scaled,
                deviation,
            })
        })
        .collect::<Result<_>>()?;
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(SweepTable {
        p,
        i,
        j,
        reference,
        rows,
        max_deviation,
        pass: max_deviation <= SWEEP_TOL,
    })
}

/// The computable part `eta^4 exp(4 T omega + (2T/p) |Tr A|)` of the
/// drift-case constant.
pub fn m1_factor(a: &Matrix, horizon: f64, p: f64, bound: &GrowthBound) -> f64 {
    bound.eta.powi(4) * (4.0 * horizon * bound.omega + 2.0 * horizon / p * a.trace().abs()).exp()
}
