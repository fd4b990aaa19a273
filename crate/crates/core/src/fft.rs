//! Multi-dimensional complex FFT over one spatial slice, built from
//! `rustfft` 1-D plans.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::SpaceGrid;

#[derive(Clone)]
pub struct SliceFft {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl SliceFft {
    pub fn new(grid: &SpaceGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.points.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = grid.points.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            shape: grid.points.clone(),
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.forward);
    }

    /// Inverse transform in place, normalised so `inverse(forward(x)) = x`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        debug_assert_eq!(buf.len(), self.len());
        let d = self.shape.len();
        let mut inner = 1;
        for axis in (0..d).rev() {
            let n = self.shape[axis];
            let plan = &plans[axis];
            if inner == 1 {
                // contiguous lines: rustfft handles a buffer of many lines
                plan.process(buf);
            } else {
                let outer = buf.len() / (n * inner);
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * n * inner + i;
                        for k in 0..n {
                            line[k] = buf[base + k * inner];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for k in 0..n {
                            buf[base + k * inner] = line[k];
                        }
                    }
                }
            }
            inner *= n;
        }
    }
}
