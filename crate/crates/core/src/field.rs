//! Sampled space-time functions and their on-disk format.
//!
//! File layout: one line of UTF-8 JSON header terminated by `\n`, followed by
//! `count` little-endian IEEE-754 `f64` values in C order (time slowest, then
//! spatial axes in order, last axis fastest).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::SliceFft;
use crate::grid::{GridSpec, SpaceGrid};

pub const FIELD_FORMAT: &str = "parreg-field";
pub const FIELD_VERSION: u32 = 1;

/// Real values on every node of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

/// A single spatial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceField {
    grid: SpaceGrid,
    values: Vec<f64>,
}

/// Per-time-slice spatial DFT of a field (unnormalised, FFT bin order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples `f(t, x)` at every node.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Sync,
    {
        let ns = grid.slice_len();
        let mut values = vec![0.0; grid.len()];
        values
            .par_chunks_mut(ns)
            .enumerate()
            .for_each(|(k, slice)| {
                let t = grid.time(k);
                let mut x = vec![0.0; grid.dim()];
                for (flat, v) in slice.iter_mut().enumerate() {
                    grid.space.point(flat, &mut x);
                    *v = f(t, &x);
                }
            });
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let ns = self.grid.slice_len();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let ns = self.grid.slice_len();
        &mut self.values[k * ns..(k + 1) * ns]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// Same values on a different grid of identical shape.
    pub fn regrid(&self, grid: GridSpec) -> Result<Self> {
        if grid.nt != self.grid.nt || grid.space.points != self.grid.space.points {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            values: self.values.clone(),
        })
    }

    /// Indices `k` of time slices that are not identically zero.
    pub fn time_support(&self) -> Option<(usize, usize)> {
        let nz: Vec<usize> = (0..self.grid.nt)
            .filter(|&k| self.slice(k).iter().any(|&v| v != 0.0))
            .collect();
        Some((*nz.first()?, *nz.last()?))
    }

    pub fn space_slice(&self, k: usize) -> SpaceField {
        SpaceField {
            grid: self.grid.space.clone(),
            values: self.slice(k).to_vec(),
        }
    }

    /// Spatial axes along which the field varies (relative tolerance `1e-14`).
    pub fn varying_axes(&self) -> Vec<bool> {
        let space = &self.grid.space;
        let strides = space.strides();
        let tol = 1e-14 * self.max_abs();
        (0..space.dim())
            .map(|a| {
                let n = space.points[a];
                let s = strides[a];
                (0..self.grid.nt).any(|k| {
                    let slice = self.slice(k);
                    let mut idx = vec![0; space.dim()];
                    (0..slice.len()).any(|flat| {
                        space.unravel(flat, &mut idx);
                        let next = if idx[a] + 1 == n { flat + s - n * s } else { flat + s };
                        (slice[flat] - slice[next]).abs() > tol
                    })
                })
            })
            .collect()
    }

    /// Per-axis max `|x_a|` over nodes where `|f| > rel * max|f|`; `None`
    /// for a zero field.
    pub fn support_extent(&self, rel: f64) -> Option<Vec<f64>> {
        let max = self.max_abs();
        if max == 0.0 {
            return None;
        }
        let thresh = rel * max;
        let space = &self.grid.space;
        let mut ext = vec![0.0f64; space.dim()];
        let mut x = vec![0.0; space.dim()];
        for k in 0..self.grid.nt {
            for (flat, v) in self.slice(k).iter().enumerate() {
                if v.abs() > thresh {
                    space.point(flat, &mut x);
                    for a in 0..space.dim() {
                        ext[a] = ext[a].max(x[a].abs());
                    }
                }
            }
        }
        Some(ext)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = FieldHeader {
            format: FIELD_FORMAT.into(),
            version: FIELD_VERSION,
            grid: self.grid.clone(),
            axis_order: std::iter::once("t".to_string())
                .chain((1..=self.grid.dim()).map(|a| format!("x{a}")))
                .collect(),
            endianness: "little".into(),
            dtype: "f64".into(),
            count: self.values.len(),
        };
        let mut out = Vec::with_capacity(self.values.len() * 8 + 256);
        serde_json::to_writer(&mut out, &header).map_err(|e| Error::Io(e.to_string()))?;
        out.push(b'\n');
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line)?;
        let header: FieldHeader =
            serde_json::from_slice(&line).map_err(|e| Error::Format(e.to_string()))?;
        if header.format != FIELD_FORMAT || header.version != FIELD_VERSION {
            return Err(Error::Format(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        if header.endianness != "little" || header.dtype != "f64" {
            return Err(Error::Format("only little-endian f64 payloads are supported".into()));
        }
        if header.count != header.grid.len() {
            return Err(Error::Format("count does not match grid".into()));
        }
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != header.count * 8 {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                header.count * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Field::new(header.grid, values)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    version: u32,
    grid: GridSpec,
    axis_order: Vec<String>,
    endianness: String,
    dtype: String,
    count: usize,
}

impl SpaceField {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: SpaceGrid, f: F) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|flat| {
                grid.point(flat, &mut x);
                f(&x)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl SpectralField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let ns = self.grid.slice_len();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Vec<Complex64>) -> Self {
        Self { grid, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Spatial DFT of every time slice.
pub fn forward_transform(field: &Field) -> SpectralField {
    let grid = field.grid().clone();
    let fft = SliceFft::new(&grid.space);
    let ns = grid.slice_len();
    let mut values: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    values.par_chunks_mut(ns).for_each(|slice| fft.forward(slice));
    SpectralField { grid, values }
}

/// Inverse spatial DFT of every slice, keeping the real part.
pub fn inverse_transform(spec: &SpectralField) -> Field {
    let grid = spec.grid().clone();
    let fft = SliceFft::new(&grid.space);
    let ns = grid.slice_len();
    let mut buf = spec.values().to_vec();
    buf.par_chunks_mut(ns).for_each(|slice| fft.inverse(slice));
    Field {
        grid,
        values: buf.into_iter().map(|c| c.re).collect(),
    }
}
