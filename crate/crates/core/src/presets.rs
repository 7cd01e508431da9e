//! Reference parameter sets: the two-state estimation example and the
//! planar vehicle tracking scenario.

use crate::filterdesign::SystemModel;
use crate::matops::{from_rows, Matrix};

/// Two-state stable system used throughout the estimator examples.
/// `Σ₀` is not part of the published data; `Q` is used.
pub fn example1() -> SystemModel {
    let a = from_rows(&[&[0.9, 0.0], &[0.02, 0.8]]);
    let c = from_rows(&[&[0.5, -0.8], &[0.0, 0.7]]);
    let q = from_rows(&[&[0.5, 0.0], &[0.0, 0.7]]);
    let r = from_rows(&[&[0.5, 0.1], &[0.1, 0.8]]);
    SystemModel::new(a, c, q.clone(), r, q).expect("example system is valid")
}

/// Vehicle scenario constants.
pub mod vehicle {
    use super::*;

    pub const SAMPLING_TIME: f64 = 1.0;
    pub const PROCESS_NOISE_SCALE: f64 = 0.1;
    pub const MEASUREMENT_NOISE_SCALE: f64 = 0.1;
    /// Multiplier of the robust estimator in the tracking comparison.
    pub const LAMBDA_ROBUST: f64 = 0.307;
    /// Non-nominal measurement noise scale, `R̄ = 2.5 I₂`.
    pub const ADVERSE_NOISE_SCALE: f64 = 2.5;

    /// `Wx = diag(100, 1e-3, 100, 1e-3)`.
    pub fn state_weight() -> Matrix {
        Matrix::from_diagonal(&nalgebra::dvector![100.0, 1e-3, 100.0, 1e-3])
    }

    /// `Wu = 1e-3 I₂`.
    pub fn input_weight() -> Matrix {
        Matrix::identity(2, 2) * 1e-3
    }

    pub fn adverse_measurement_covariance() -> Matrix {
        Matrix::identity(2, 2) * ADVERSE_NOISE_SCALE
    }
}
