//! Seeded Monte Carlo simulation of the plant and a fixed-gain filter.
//!
//! Each run draws its process noise (and `x(0)`) and its measurement noise
//! from two independent ChaCha streams of the same seed, so runs that share
//! a seed but differ only in the measurement-noise model see identical
//! process noise.

mod noise;
mod sweep;

pub use noise::{MixtureComponent, NoiseModel, WEIGHT_SUM_TOL};
pub use sweep::{derive_seed, estimator_sweep, SweepRecord};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filterdesign::{FilterGain, SystemModel};
use crate::matops::{check_shape, Matrix, Vector};

/// Steps discarded before covariance accumulation.
pub const DEFAULT_BURN_IN: usize = 1_000;

/// Post-burn-in samples required by [`empirical_performance`].
pub const MIN_SAMPLES: usize = 1_000;

const PROCESS_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 1;

/// The two generators of one run.
pub(crate) fn run_generators(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut process = ChaCha8Rng::seed_from_u64(seed);
    process.set_stream(PROCESS_STREAM);
    let mut measurement = ChaCha8Rng::seed_from_u64(seed);
    measurement.set_stream(MEASUREMENT_STREAM);
    (process, measurement)
}

/// One simulated trajectory. Column `t` of each matrix holds time `t`,
/// for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub seed: u64,
    pub horizon: usize,
    pub burn_in: usize,
    pub states: Matrix,
    pub estimates: Matrix,
    /// `e(t) = x(t) − x̂(t)`.
    pub errors: Matrix,
}

impl SimulationRun {
    /// Error samples after the burn-in, `t = burn_in+1..=horizon`.
    pub fn post_burn_in_errors(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.errors
            .columns(self.burn_in + 1, self.horizon - self.burn_in)
    }
}

/// Simulate with the default burn-in of [`DEFAULT_BURN_IN`] steps.
pub fn simulate_filter(
    sys: &SystemModel,
    gain: &FilterGain,
    w_model: &NoiseModel,
    v_model: &NoiseModel,
    horizon: usize,
    seed: u64,
) -> Result<SimulationRun> {
    simulate_filter_with_burn_in(sys, gain, w_model, v_model, horizon, DEFAULT_BURN_IN, seed)
}

/// `x(t+1) = A x(t) + w(t)`, `y(t+1) = C x(t+1) + v(t+1)`,
/// `x̂(t+1) = A x̂(t) + K (y(t+1) − C A x̂(t))` with `x(0) ~ 𝒩(0, Σ₀)` and
/// `x̂(0) = 0`. The noise models replace the system's `Q` and `R`.
pub fn simulate_filter_with_burn_in(
    sys: &SystemModel,
    gain: &FilterGain,
    w_model: &NoiseModel,
    v_model: &NoiseModel,
    horizon: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SimulationRun> {
    let n = sys.state_dim();
    let m = sys.output_dim();
    check_shape("filter gain", gain.matrix(), n, m)?;
    if w_model.dim() != n {
        return Err(Error::dimension("process noise model", n, w_model.dim()));
    }
    if v_model.dim() != m {
        return Err(Error::dimension(
            "measurement noise model",
            m,
            v_model.dim(),
        ));
    }
    if horizon < burn_in + 1 {
        return Err(Error::validation(
            "horizon",
            format!(
                "must be at least burn_in + 1 = {}, got {horizon}",
                burn_in + 1
            ),
        ));
    }

    let (mut process_rng, mut measurement_rng) = run_generators(seed);
    let initial = NoiseModel::gaussian(sys.sigma0().clone())?;

    let a = sys.a();
    let c = sys.c();
    let k = gain.matrix();
    let mut states = Matrix::zeros(n, horizon + 1);
    let mut estimates = Matrix::zeros(n, horizon + 1);

    let mut x = initial.sample(&mut process_rng);
    let mut xhat = Vector::zeros(n);
    let mut w = Vector::zeros(n);
    let mut v = Vector::zeros(m);
    let mut next = Vector::zeros(n);
    let mut pred = Vector::zeros(n);
    let mut innov = Vector::zeros(m);
    states.set_column(0, &x);

    for t in 1..=horizon {
        w_model.sample_into(&mut process_rng, &mut w);
        next.gemv(1.0, a, &x, 0.0);
        next += &w;
        std::mem::swap(&mut x, &mut next);

        v_model.sample_into(&mut measurement_rng, &mut v);
        // innovation y − C A x̂ = C x + v − C (A x̂)
        pred.gemv(1.0, a, &xhat, 0.0);
        innov.gemv(1.0, c, &x, 0.0);
        innov += &v;
        innov.gemv(-1.0, c, &pred, 1.0);
        xhat.copy_from(&pred);
        xhat.gemv(1.0, k, &innov, 1.0);

        states.set_column(t, &x);
        estimates.set_column(t, &xhat);
    }
    let errors = &states - &estimates;
    Ok(SimulationRun {
        seed,
        horizon,
        burn_in,
        states,
        estimates,
        errors,
    })
}

/// Unbiased sample covariance (mean removed, divisor `N − 1`) of the columns.
pub fn sample_covariance(samples: &nalgebra::DMatrixView<'_, f64>) -> Result<Matrix> {
    let count = samples.ncols();
    if count < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            available: count,
        });
    }
    let mean = samples.column_mean();
    let mut centered = samples.clone_owned();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    Ok(&centered * centered.transpose() / (count - 1) as f64)
}

/// Trace of the post-burn-in sample error covariance.
pub fn empirical_performance(run: &SimulationRun) -> Result<f64> {
    let samples = run.post_burn_in_errors();
    if samples.ncols() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            available: samples.ncols(),
        });
    }
    Ok(sample_covariance(&samples)?.trace())
}

/// Relative degradation `(p_adv − p_nom) / p_nom`.
pub fn empirical_sensitivity(p_nom: f64, p_adv: f64) -> Result<f64> {
    if !(p_nom > 0.0 && p_nom.is_finite()) {
        return Err(Error::validation(
            "nominal performance",
            format!("must be positive, got {p_nom}"),
        ));
    }
    if !p_adv.is_finite() {
        return Err(Error::validation("adverse performance", "must be finite"));
    }
    Ok((p_adv - p_nom) / p_nom)
}
