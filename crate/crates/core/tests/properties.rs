use approx::assert_relative_eq;
use proptest::prelude::*;

use parreg_core::coeffs::{self, CoefficientPath};
use parreg_core::estimates::{self, lp_values};
use parreg_core::gauss::GaussianMeasure;
use parreg_core::grid::{GridSpec, SpaceGrid};
use parreg_core::linalg;
use parreg_core::ou::{self, matrix_exp};
use parreg_core::sources;
use parreg_core::stochastic::matrix_sqrt_psd;
use parreg_core::Matrix;

fn matrix(n: usize, range: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-range..range, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

fn psd(n: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, 1.0).prop_map(|b| &b * b.transpose())
}

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_group_law(a in matrix(3, 1.5), s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let lhs = matrix_exp(&a, s) * matrix_exp(&a, t);
        let rhs = matrix_exp(&a, s + t);
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-11 * (1.0 + rhs.abs().max()));
    }

    #[test]
    fn exp_inverse(a in matrix(2, 2.0), t in -2.0f64..2.0) {
        let prod = matrix_exp(&a, t) * matrix_exp(&a, -t);
        prop_assert!(max_diff(&prod, &Matrix::identity(2, 2)) <= 1e-10);
    }

    #[test]
    fn invariance_is_transpose_symmetric(a in matrix(3, 1.0), p0 in 1usize..3, zero in any::<bool>()) {
        let mut a = a;
        if zero {
            for i in 0..p0 {
                for j in p0..3 {
                    a[(i, j)] = 0.0;
                    a[(j, i)] = 0.0;
                }
            }
        }
        let direct = ou::check_invariance(&a, p0).unwrap();
        let transposed = ou::check_invariance(&a.transpose(), p0).unwrap();
        prop_assert_eq!(direct, transposed);
        if zero {
            prop_assert!(direct);
        }
    }

    #[test]
    fn lp_is_homogeneous(values in prop::collection::vec(-5.0f64..5.0, 1..64), alpha in -4.0f64..4.0, p in 1.0f64..6.0) {
        let scaled: Vec<f64> = values.iter().map(|v| alpha * v).collect();
        let lhs = lp_values(&scaled, 0.25, p);
        let rhs = alpha.abs() * lp_values(&values, 0.25, p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn convolution_adds_parameters(q in psd(3), r in psd(3), xi in prop::collection::vec(-1.0f64..1.0, 3)) {
        let gq = GaussianMeasure::new(q.clone()).unwrap();
        let gr = GaussianMeasure::new(r.clone()).unwrap();
        let conv = gq.convolve(&gr).unwrap();
        prop_assert!(max_diff(conv.q(), &(&q + &r)) <= 1e-15 * (1.0 + (&q + &r).abs().max()));
        let lhs = conv.char_fn(&xi);
        let rhs = gq.char_fn(&xi) * gr.char_fn(&xi);
        prop_assert!((lhs - rhs).abs() <= 1e-13);
        prop_assert!(max_diff(&conv.covariance(), &(conv.q() * 2.0)) == 0.0);
    }

    #[test]
    fn sqrt_psd_squares_back(m in psd(3)) {
        let s = matrix_sqrt_psd(&m).unwrap();
        prop_assert!(max_diff(&s, &s.transpose()) <= 1e-12);
        prop_assert!(max_diff(&(&s * &s), &m) <= 1e-10 * (1.0 + m.abs().max()));
        prop_assert!(linalg::min_eigenvalue(&s) >= -1e-10);
    }

    #[test]
    fn constant_path_certifies_its_smallest_eigenvalue(m in psd(2), shift in 0.1f64..2.0) {
        let c = &m + Matrix::identity(2, 2) * shift;
        let path = CoefficientPath::constant(c.clone()).unwrap();
        let cert = coeffs::certify_parabolicity(&path, 2, &coeffs::linspace(0.0, 1.0, 5)).unwrap();
        assert_relative_eq!(cert.lambda, linalg::min_eigenvalue(&c), max_relative = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ratio_is_scale_invariant(alpha in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], seed in 0u64..1000) {
        let grid = GridSpec::new(SpaceGrid::uniform(1, 16.0, 64).unwrap(), 0.0, 2.0, 0.0625).unwrap();
        let params = sources::FamilyParams { members: 1, ..sources::FamilyParams::standard(3.0, 0.5, 2.0) };
        let f = sources::random_smooth_family(&grid, &params, seed).unwrap().remove(0);
        let path = CoefficientPath::identity(1);
        let base = estimates::estimate_ratio(&path, &f, 2.0, 1, 1, 1).unwrap();
        let scaled = estimates::estimate_ratio(&path, &f.scaled(alpha), 2.0, 1, 1, 1).unwrap();
        prop_assert!((base.ratio - scaled.ratio).abs() <= 1e-10 * base.ratio);
    }
}
