//! Solvers and estimate harnesses for backward parabolic equations
//! `u_t + Tr(c(t) D^2 u) = f` with partially degenerate coefficients.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod estimates;
pub mod fft;
pub mod field;
pub mod gauss;
pub mod grid;
pub mod interp;
pub mod linalg;
pub mod ou;
pub mod rng;
pub mod sources;
pub mod spectral;
pub mod stochastic;

pub use coeffs::{certify_parabolicity, CoefficientPath, ParabolicityCertificate};
pub use error::{Error, Result};
pub use estimates::{EstimateReport, SweepTable};
pub use field::{Field, SpaceField, SpectralField};
pub use gauss::GaussianMeasure;
pub use grid::{GridSpec, SpaceGrid};
pub use linalg::{Matrix, Vector};
pub use ou::{GrowthBound, OuProblem};
pub use stochastic::{MatrixPath, McReport};
