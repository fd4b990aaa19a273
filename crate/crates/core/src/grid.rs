//! Periodic space-time grids.
//!
//! Space is the box `prod [-L_a, L_a)` sampled at `N_a` points per axis
//! (`x_k = -L_a + k dx_a`), treated as periodic. Time is the closed range
//! `[t_min, t_max]` with `nt` equispaced nodes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub half_widths: Vec<f64>,
    pub points: Vec<usize>,
}

impl SpaceGrid {
    pub fn new(half_widths: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let g = Self {
            half_widths,
            points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(vec![half_width; dim], vec![points; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_widths.is_empty() || self.half_widths.len() != self.points.len() {
            return Err(Error::InvalidGrid(
                "half_widths and points must be non-empty and of equal length".into(),
            ));
        }
        for (a, (&l, &n)) in self.half_widths.iter().zip(&self.points).enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {a}: half-width {l} must be positive")));
            }
            if n < MIN_POINTS || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: {n} points; need a power of two >= {MIN_POINTS}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_widths[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        -self.half_widths[axis] + k as f64 * self.spacing(axis)
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.points[a + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.points[a];
            flat /= self.points[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.points)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Physical coordinates of flat node `flat`.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        for a in 0..self.dim() {
            out[a] = self.coord(a, idx[a]);
        }
    }

    /// Angular wavenumbers of the DFT bins along `axis`, in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let base = PI / self.half_widths[axis];
        (0..n)
            .map(|m| {
                let signed = if m < n / 2 { m as isize } else { m as isize - n as isize };
                base * signed as f64
            })
            .collect()
    }

    /// Grid with every half-width multiplied by `factor` (same node count).
    pub fn dilated(&self, factor: f64) -> Self {
        Self {
            half_widths: self.half_widths.iter().map(|l| l * factor).collect(),
            points: self.points.clone(),
        }
    }

    /// Same box, `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            half_widths: self.half_widths.clone(),
            points: self.points.iter().map(|n| n * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub space: SpaceGrid,
    pub t_min: f64,
    pub dt: f64,
    pub nt: usize,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    half_widths: Vec<f64>,
    points: Vec<usize>,
    t_min: f64,
    t_max: f64,
    dt: f64,
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridSpecRepr {
            half_widths: self.space.half_widths.clone(),
            points: self.space.points.clone(),
            t_min: self.t_min,
            t_max: self.t_max(),
            dt: self.dt,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GridSpecRepr::deserialize(d)?;
        GridSpec::new(SpaceGrid::new(r.half_widths, r.points).map_err(serde::de::Error::custom)?, r.t_min, r.t_max, r.dt)
            .map_err(serde::de::Error::custom)
    }
}

impl GridSpec {
    /// `t_max - t_min` must be a whole number of steps `dt`.
    pub fn new(space: SpaceGrid, t_min: f64, t_max: f64, dt: f64) -> Result<Self> {
        space.validate()?;
        if !(dt > 0.0) || !(t_max >= t_min) {
            return Err(Error::InvalidGrid(format!(
                "time range [{t_min}, {t_max}] with step {dt}"
            )));
        }
        let steps = ((t_max - t_min) / dt).round();
        if ((steps * dt) - (t_max - t_min)).abs() > 1e-9 * (1.0 + t_max.abs() + t_min.abs()) {
            return Err(Error::InvalidGrid(format!(
                "time range {t_min}..{t_max} is not a multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            space,
            t_min,
            dt,
            nt: steps as usize + 1,
        })
    }

    pub fn with_steps(space: SpaceGrid, t_min: f64, t_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        Self::new(space, t_min, t_max, (t_max - t_min) / steps as f64)
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.nt - 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_min + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|k| self.time(k)).collect()
    }

    pub fn slice_len(&self) -> usize {
        self.space.len()
    }

    pub fn len(&self) -> usize {
        self.nt * self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Space-time cell volume `dt * prod dx`.
    pub fn cell_volume(&self) -> f64 {
        self.dt * self.space.cell_volume()
    }

    /// Refine space by `space_factor` and time by `time_factor`.
    pub fn refined(&self, space_factor: usize, time_factor: usize) -> Self {
        Self {
            space: self.space.refined(space_factor),
            t_min: self.t_min,
            dt: self.dt / time_factor as f64,
            nt: (self.nt - 1) * time_factor + 1,
        }
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.space == other.space
            && self.nt == other.nt
            && (self.t_min - other.t_min).abs() <= 1e-12 * (1.0 + self.t_min.abs())
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_points() {
        assert!(SpaceGrid::new(vec![1.0], vec![12]).is_err());
        assert!(SpaceGrid::new(vec![1.0], vec![8]).is_err());
        assert!(SpaceGrid::new(vec![1.0], vec![16]).is_ok());
    }

    #[test]
    fn ravel_roundtrip() {
        let g = SpaceGrid::new(vec![1.0, 2.0, 3.0], vec![16, 32, 16]).unwrap();
        let mut idx = vec![0; 3];
        for flat in [0, 1, 17, 555, g.len() - 1] {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
        }
    }

    #[test]
    fn time_nodes() {
        let g = GridSpec::new(SpaceGrid::uniform(1, 1.0, 16).unwrap(), 0.0, 1.0, 0.125).unwrap();
        assert_eq!(g.nt, 9);
        assert_eq!(g.t_max(), 1.0);
        assert!(GridSpec::new(SpaceGrid::uniform(1, 1.0, 16).unwrap(), 0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn wavenumbers_fft_order() {
        let g = SpaceGrid::uniform(1, PI, 16).unwrap();
        let k = g.wavenumbers(0);
        assert_eq!(k[1], 1.0);
        assert_eq!(k[15], -1.0);
        assert_eq!(k[8], -8.0);
    }
}
