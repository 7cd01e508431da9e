use rayon::prelude::*;

use super::ClosedLoopConfig;
use crate::error::{Error, Result};
use crate::matops::{Matrix, Vector};
use crate::montecarlo::{run_generators, NoiseModel};

/// One closed-loop tracking trajectory. Column `t` holds time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub seed: u64,
    pub horizon: usize,
    /// `x(0..=T)`.
    pub states: Matrix,
    /// `x_c(0..=T)`.
    pub controller_states: Matrix,
    /// `u(0..T)`.
    pub inputs: Matrix,
    /// `sqrt(mean_{t=1..=T} ‖C (x(t) − x_d(t))‖²)`.
    pub rmse: f64,
    /// `(1/T) Σ_{t<T} [εᵀ Wx ε + (u − u_d)ᵀ Wu (u − u_d)]`, the finite-horizon
    /// estimate of the steady-state cost.
    pub average_cost: f64,
}

/// Simulate plant and controller: apply `u(t)`, advance the plant, measure
/// `y(t+1)`, then update `x_c`. `x(0) = x_d(0) + ε₀` with `ε₀ ~ 𝒩(0, Σ₀)` and
/// `x_c(0) = 0`. Without a reference the zero reference is tracked.
pub fn tracking_simulate(
    cfg: &ClosedLoopConfig,
    w_model: &NoiseModel,
    v_model: &NoiseModel,
    horizon: usize,
    seed: u64,
) -> Result<TrackingRun> {
    let plant = cfg.plant();
    let (n, m, p) = (plant.state_dim(), plant.output_dim(), plant.input_dim());
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
    if horizon == 0 {
        return Err(Error::validation("horizon", "must be positive"));
    }
    if let Some(r) = cfg.reference() {
        if r.len() < horizon {
            return Err(Error::validation(
                "reference",
                format!("covers {} steps, horizon is {horizon}", r.len()),
            ));
        }
    }
    let zero_state = Vector::zeros(n);
    let zero_input = Vector::zeros(p);
    let desired_state = |t: usize| match cfg.reference() {
        Some(r) => r.states().column(t).into_owned(),
        None => zero_state.clone(),
    };
    let desired_input = |t: usize| match cfg.reference() {
        Some(r) => r.inputs().column(t).into_owned(),
        None => zero_input.clone(),
    };

    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let k = cfg.k().matrix();
    let l = cfg.l();
    let controller = (Matrix::identity(n, n) - k * c) * (a - b * l);

    let (mut process_rng, mut measurement_rng) = run_generators(seed);
    let initial = NoiseModel::gaussian(plant.sigma0().clone())?;

    let mut states = Matrix::zeros(n, horizon + 1);
    let mut controller_states = Matrix::zeros(n, horizon + 1);
    let mut inputs = Matrix::zeros(p, horizon);

    let mut x = desired_state(0) + initial.sample(&mut process_rng);
    let mut xc = Vector::zeros(n);
    let mut w = Vector::zeros(n);
    let mut v = Vector::zeros(m);
    let mut cost = 0.0;
    let mut squared_error = 0.0;
    states.set_column(0, &x);

    for t in 0..horizon {
        let ud = desired_input(t);
        let du = -(l * &xc);
        let u = &du + &ud;
        let eps = &x - desired_state(t);
        cost += eps.dot(&(cfg.wx() * &eps)) + du.dot(&(cfg.wu() * &du));

        w_model.sample_into(&mut process_rng, &mut w);
        x = a * &x + b * &u + &w;
        v_model.sample_into(&mut measurement_rng, &mut v);
        let xd_next = desired_state(t + 1);
        let innovation = c * (&x - &xd_next) + &v;
        xc = &controller * &xc + k * innovation;

        let pos_err = c * (&x - &xd_next);
        squared_error += pos_err.norm_squared();
        states.set_column(t + 1, &x);
        controller_states.set_column(t + 1, &xc);
        inputs.set_column(t, &u);
    }
    Ok(TrackingRun {
        seed,
        horizon,
        states,
        controller_states,
        inputs,
        rmse: (squared_error / horizon as f64).sqrt(),
        average_cost: cost / horizon as f64,
    })
}

/// Seed-averaged tracking RMSE of two controllers at one noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    /// Measurement-noise variance relative to the nominal model.
    pub scale: f64,
    pub rmse_kalman: f64,
    pub rmse_robust: f64,
    pub stderr_kalman: f64,
    pub stderr_robust: f64,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// For each scale `s`, run both controllers with measurement noise
/// `v_nominal` scaled to variance `s·E[vvᵀ]` over every seed. Both
/// controllers see the same noise realizations for a given seed.
pub fn rmse_sweep(
    kalman: &ClosedLoopConfig,
    robust: &ClosedLoopConfig,
    v_nominal: &NoiseModel,
    scales: &[f64],
    horizon: usize,
    seeds: &[u64],
) -> Result<Vec<RmseRow>> {
    if kalman.plant() != robust.plant() {
        return Err(Error::validation(
            "rmse sweep",
            "both controllers must share the plant",
        ));
    }
    if seeds.is_empty() || scales.is_empty() {
        return Err(Error::validation(
            "rmse sweep",
            "need at least one scale and one seed",
        ));
    }
    let w_model = NoiseModel::gaussian(kalman.plant().q().clone())?;
    let models: Vec<NoiseModel> = scales
        .iter()
        .map(|&s| v_nominal.scaled(s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..scales.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let rmses: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let a = tracking_simulate(kalman, &w_model, &models[i], horizon, seed)?.rmse;
            let b = tracking_simulate(robust, &w_model, &models[i], horizon, seed)?.rmse;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    Ok(scales
        .iter()
        .zip(rmses.chunks(seeds.len()))
        .map(|(&scale, runs)| {
            let (rmse_kalman, stderr_kalman) =
                mean_and_stderr(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
            let (rmse_robust, stderr_robust) =
                mean_and_stderr(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
            RmseRow {
                scale,
                rmse_kalman,
                rmse_robust,
                stderr_kalman,
                stderr_robust,
            }
        })
        .collect())
}

/// Number of sign changes of `rmse_kalman − rmse_robust` along the rows.
pub fn sign_changes(rows: &[RmseRow]) -> usize {
    let signs: Vec<bool> = rows
        .iter()
        .map(|r| r.rmse_kalman - r.rmse_robust)
        .filter(|d| *d != 0.0)
        .map(|d| d > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedloop::{demo_course, lqr_gain, reference_from_waypoints, vehicle_preset};
    use crate::filterdesign::kalman_gain;
    use crate::presets::vehicle::{input_weight, state_weight};

    #[test]
    fn noiseless_tracking_is_exact() {
        let plant = vehicle_preset(1.0).unwrap();
        let plant = crate::closedloop::PlantWithInput::new(
            plant.a().clone(),
            plant.b().clone(),
            plant.c().clone(),
            plant.q().clone(),
            plant.r().clone(),
            Matrix::zeros(4, 4),
            1.0,
        )
        .unwrap();
        let l = lqr_gain(&plant, &state_weight(), &input_weight()).unwrap();
        let k = kalman_gain(plant.estimation_model()).unwrap();
        let reference = reference_from_waypoints(&plant, &demo_course(1.0, 600)).unwrap();
        let cfg = ClosedLoopConfig::new(plant, k, l, state_weight(), input_weight())
            .unwrap()
            .with_reference(reference)
            .unwrap();
        let w = NoiseModel::gaussian(Matrix::zeros(4, 4)).unwrap();
        let v = NoiseModel::gaussian(Matrix::zeros(2, 2)).unwrap();
        let run = tracking_simulate(&cfg, &w, &v, 600, 1).unwrap();
        assert!(run.rmse <= 1e-8, "{}", run.rmse);
    }

    #[test]
    fn short_reference_rejected() {
        let plant = vehicle_preset(1.0).unwrap();
        let l = lqr_gain(&plant, &state_weight(), &input_weight()).unwrap();
        let k = kalman_gain(plant.estimation_model()).unwrap();
        let reference = reference_from_waypoints(&plant, &demo_course(1.0, 100)).unwrap();
        let len = reference.len();
        let cfg = ClosedLoopConfig::new(plant.clone(), k, l, state_weight(), input_weight())
            .unwrap()
            .with_reference(reference)
            .unwrap();
        let w = NoiseModel::gaussian(plant.q().clone()).unwrap();
        let v = NoiseModel::gaussian(plant.r().clone()).unwrap();
        assert!(tracking_simulate(&cfg, &w, &v, len + 1, 1).is_err());
        assert!(tracking_simulate(&cfg, &w, &v, len, 1).is_ok());
    }

    #[test]
    fn sign_change_count() {
        let row = |d: f64| RmseRow {
            scale: 1.0,
            rmse_kalman: 1.0 + d,
            rmse_robust: 1.0,
            stderr_kalman: 0.0,
            stderr_robust: 0.0,
        };
        assert_eq!(sign_changes(&[row(-1.0), row(-0.5), row(0.5), row(1.0)]), 1);
        assert_eq!(sign_changes(&[row(-1.0), row(0.5), row(-0.5)]), 2);
        assert_eq!(sign_changes(&[row(-1.0), row(-2.0)]), 0);
    }
}
