//! Design and validation of linear state estimators on the Pareto frontier
//! between steady-state accuracy (trace of the error covariance) and
//! robustness (sensitivity of that trace to the measurement-noise covariance).
//!
//! - [`matops`]: spectral radius, discrete Lyapunov and Riccati solvers.
//! - [`filterdesign`]: performance, sensitivity, gradients, Kalman and
//!   λ-optimal gains, δ-targeted bisection and trade-off curves.
//! - [`montecarlo`]: seeded trajectory simulation under Gaussian, mixture or
//!   empirical noise and the empirical accuracy/sensitivity study.
//! - [`closedloop`]: vehicle tracking with an estimator-based controller,
//!   steady-state LQG cost, its sensitivity and the closed-loop trade-off.

pub mod closedloop;
pub mod error;
pub mod filterdesign;
pub mod matops;
pub mod montecarlo;
pub mod presets;

pub use error::{Error, Result};
