//! Source terms used by the estimate harness and the validation suites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::GridSpec;
use crate::rng::StreamRng;

/// The `C^inf` bump `exp(1 - 1 / (1 - s^2))` on `(-1, 1)`, with value 1 at 0.
pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Radial bump of radius `radius` centred at the origin.
pub fn radial_bump(x: &[f64], radius: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    bump(r2.sqrt() / radius)
}

/// `1_{[t_lo, t_hi]}(t) exp(-|x|^2)`.
pub fn gaussian_source(grid: GridSpec, t_lo: f64, t_hi: f64) -> Field {
    Field::from_fn(grid, move |t, x| {
        if t >= t_lo && t <= t_hi {
            (-x.iter().map(|v| v * v).sum::<f64>()).exp()
        } else {
            0.0
        }
    })
}

/// Parameters of the seeded random smooth family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    pub members: usize,
    /// Number of plane-wave modes per member.
    pub modes: usize,
    /// Largest spatial wavenumber per axis.
    pub max_wavenumber: f64,
    /// Largest temporal frequency.
    pub max_frequency: f64,
    /// Radius of the spatial envelope.
    pub radius: f64,
    /// Time window of the temporal envelope.
    pub t_lo: f64,
    pub t_hi: f64,
}

impl FamilyParams {
    /// Sixteen members on the given window with a spatial envelope of the
    /// given radius.
    pub fn standard(radius: f64, t_lo: f64, t_hi: f64) -> Self {
        Self {
            members: 16,
            modes: 4,
            max_wavenumber: 2.0,
            max_frequency: 3.0,
            radius,
            t_lo,
            t_hi,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.members == 0 || self.modes == 0 {
            return Err(Error::InvalidArgument("family needs at least one member and one mode".into()));
        }
        if !(self.radius > 0.0) || !(self.t_hi > self.t_lo) {
            return Err(Error::InvalidArgument("family envelope must be non-empty".into()));
        }
        Ok(())
    }
}

/// Seeded family of smooth compactly supported sources
/// `bump_t(t) bump_R(|x|) sum_m a_m cos(<k_m, x> + w_m t + phi_m)`.
/// Member `k` draws from stream `k` of `seed`.
pub fn random_smooth_family(grid: &GridSpec, params: &FamilyParams, seed: u64) -> Result<Vec<Field>> {
    params.validate()?;
    let d = grid.dim();
    let mid = 0.5 * (params.t_lo + params.t_hi);
    let half = 0.5 * (params.t_hi - params.t_lo);
    Ok((0..params.members)
        .map(|member| {
            let mut rng = StreamRng::new(seed, member as u64);
            let modes: Vec<(f64, Vec<f64>, f64, f64)> = (0..params.modes)
                .map(|_| {
                    let amp = rng.normal();
                    let k: Vec<f64> = (0..d)
                        .map(|_| (2.0 * rng.uniform() - 1.0) * params.max_wavenumber)
                        .collect();
                    let w = (2.0 * rng.uniform() - 1.0) * params.max_frequency;
                    let phi = 2.0 * std::f64::consts::PI * rng.uniform();
                    (amp, k, w, phi)
                })
                .collect();
            let radius = params.radius;
            Field::from_fn(grid.clone(), move |t, x| {
                let env = bump((t - mid) / half) * radial_bump(x, radius);
                if env == 0.0 {
                    return 0.0;
                }
                let wave: f64 = modes
                    .iter()
                    .map(|(a, k, w, phi)| {
                        let kx: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                        a * (kx + w * t + phi).cos()
                    })
                    .sum();
                env * wave
            })
        })
        .collect())
}

/// A slowly varying source concentrated at spatial frequencies with
/// `|xi_i| = |xi_j| = k`, which nearly attains the `L^2` bound for the mixed
/// derivative `(i, j)` (1-based, `i != j`) in the heat case.
pub fn near_extremal_mixed(
    grid: &GridSpec,
    i: usize,
    j: usize,
    k: f64,
    radius: f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<Field> {
    let d = grid.dim();
    for axis in [i, j] {
        if axis == 0 || axis > d {
            return Err(Error::AxisOutOfRange { axis, dim: d });
        }
    }
    if i == j {
        return Err(Error::InvalidArgument("near-extremal source needs i != j".into()));
    }
    let mid = 0.5 * (t_lo + t_hi);
    let half = 0.5 * (t_hi - t_lo);
    Ok(Field::from_fn(grid.clone(), move |t, x| {
        bump((t - mid) / half) * radial_bump(x, radius) * (k * x[i - 1]).cos() * (k * x[j - 1]).cos()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceGrid;

    #[test]
    fn bump_values() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.5), 0.0);
        assert!((bump(0.5) - (1.0f64 - 1.0 / 0.75).exp()).abs() < 1e-15);
    }

    #[test]
    fn family_is_seeded_and_supported() {
        let g = GridSpec::with_steps(SpaceGrid::uniform(2, 10.0, 32).unwrap(), 0.0, 2.0, 16).unwrap();
        let params = FamilyParams::standard(4.0, 0.5, 1.5);
        let a = random_smooth_family(&g, &params, 5).unwrap();
        let b = random_smooth_family(&g, &params, 5).unwrap();
        let c = random_smooth_family(&g, &params, 6).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        assert_ne!(a[0], c[0]);
        for f in &a {
            let (lo, hi) = f.time_support().unwrap();
            assert!(g.time(lo) > 0.5 && g.time(hi) < 1.5);
            let ext = f.support_extent(0.0).unwrap();
            assert!(ext.iter().all(|&e| e < 4.0));
        }
    }

    #[test]
    fn near_extremal_rejects_diagonal() {
        let g = GridSpec::with_steps(SpaceGrid::uniform(2, 10.0, 16).unwrap(), 0.0, 1.0, 4).unwrap();
        assert!(near_extremal_mixed(&g, 1, 1, 1.0, 4.0, 0.0, 1.0).is_err());
        assert!(near_extremal_mixed(&g, 1, 3, 1.0, 4.0, 0.0, 1.0).is_err());
        assert!(near_extremal_mixed(&g, 2, 1, 1.0, 4.0, 0.0, 1.0).is_ok());
    }
}
