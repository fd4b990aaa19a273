//! Periodic tensor-product cubic B-spline interpolation on a [`SpaceGrid`].
//!
//! The interpolation condition is a circulant system per axis, inverted in
//! Fourier space (B-spline symbol `(4 + 2 cos theta) / 6`).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::SliceFft;
use crate::grid::SpaceGrid;

#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: SpaceGrid,
    coeffs: Vec<f64>,
    strides: Vec<usize>,
}

impl CubicSpline {
    pub fn new(grid: &SpaceGrid, values: &[f64]) -> Self {
        Self::with_fft(grid, &SliceFft::new(grid), values)
    }

    pub fn with_fft(grid: &SpaceGrid, fft: &SliceFft, values: &[f64]) -> Self {
        let d = grid.dim();
        let symbols: Vec<Vec<f64>> = grid
            .points
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|m| (4.0 + 2.0 * (2.0 * PI * m as f64 / n as f64).cos()) / 6.0)
                    .collect()
            })
            .collect();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut buf);
        let mut idx = vec![0; d];
        for (flat, c) in buf.iter_mut().enumerate() {
            grid.unravel(flat, &mut idx);
            let s: f64 = (0..d).map(|a| symbols[a][idx[a]]).product();
            *c /= s;
        }
        fft.inverse(&mut buf);
        Self {
            grid: grid.clone(),
            coeffs: buf.into_iter().map(|c| c.re).collect(),
            strides: grid.strides(),
        }
    }

    /// Value at an arbitrary point; coordinates wrap periodically.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut base = [0isize; 8];
        let mut weights = [[0.0f64; 4]; 8];
        assert!(d <= 8, "at most 8 spatial dimensions");
        for a in 0..d {
            let h = self.grid.spacing(a);
            let u = (x[a] + self.grid.half_widths[a]) / h;
            let i = u.floor();
            let f = u - i;
            base[a] = i as isize - 1;
            let f2 = f * f;
            let f3 = f2 * f;
            let g = 1.0 - f;
            weights[a] = [
                g * g * g / 6.0,
                (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0,
                (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
                f3 / 6.0,
            ];
        }
        let total = 4usize.pow(d as u32);
        let mut acc = 0.0;
        for combo in 0..total {
            let mut c = combo;
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let o = c % 4;
                c /= 4;
                w *= weights[a][o];
                let n = self.grid.points[a] as isize;
                let k = (base[a] + o as isize).rem_euclid(n) as usize;
                flat += k * self.strides[a];
            }
            acc += w * self.coeffs[flat];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes() {
        let g = SpaceGrid::new(vec![3.0, 3.0], vec![32, 16]).unwrap();
        let mut x = vec![0.0; 2];
        let vals: Vec<f64> = (0..g.len())
            .map(|k| {
                g.point(k, &mut x);
                (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp()
            })
            .collect();
        let s = CubicSpline::new(&g, &vals);
        for k in [0, 17, 200, 511] {
            g.point(k, &mut x);
            assert!((s.eval(&x) - vals[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let f = |x: f64| (-x * x).exp() * (2.0 * x).cos();
        let err = |n: usize| {
            let g = SpaceGrid::new(vec![6.0], vec![n]).unwrap();
            let vals: Vec<f64> = (0..n).map(|k| f(g.coord(0, k))).collect();
            let s = CubicSpline::new(&g, &vals);
            (0..997)
                .map(|k| {
                    let x = -5.0 + 10.0 * k as f64 / 997.0;
                    (s.eval(&[x]) - f(x)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }
}
