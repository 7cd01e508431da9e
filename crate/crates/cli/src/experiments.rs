use std::path::Path;

use pareto_filter::closedloop::{
    closed_loop_cost, closed_loop_tradeoff_with, demo_course, lqr_gain, reference_from_waypoints,
    rmse_sweep, ClosedLoopConfig, PlantWithInput, TradeoffOptions,
};
use pareto_filter::filterdesign::{
    kalman_gain, optimal_gain, performance, performance_bounds, robust_gain, sensitivity,
    tradeoff_curve, worst_case_performance, FilterGain, SystemModel,
};
use pareto_filter::matops::Matrix;
use pareto_filter::montecarlo::{
    derive_seed, empirical_performance, estimator_sweep, simulate_filter_with_burn_in, NoiseModel,
    DEFAULT_BURN_IN,
};

use crate::config::{self, Experiment, ExperimentConfig, Parameters};
use crate::error::{CliError, CliResult};
use crate::output::{matrix_cells, matrix_columns, num, opt, Table};

pub const DEFAULT_SEED: u64 = 0;

const TRADEOFF_STEPS: usize = 25;
const SWEEP_STEPS: usize = 6;
const CLOSED_LOOP_STEPS: usize = 10;
const SIMULATE_HORIZON: usize = 100_000;
const SIMULATE_TRIALS: usize = 10;
const TRACKING_HORIZON: usize = 20_000;
const TRACKING_TRIALS: usize = 20;
const SWEEP_HORIZON: usize = 50_000;
const SWEEP_TRIALS: usize = 20;

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn positive(field: &str, value: Option<usize>, default: usize) -> CliResult<usize> {
    match value {
        Some(0) => Err(CliError::validation(format!(
            "parameters.{field}: must be positive"
        ))),
        Some(v) => Ok(v),
        None => Ok(default),
    }
}

/// Uniform grid over `[lo, hi]` with endpoint defaults supplied per
/// experiment.
fn delta_grid(
    params: &Parameters,
    lo: Option<f64>,
    hi: Option<f64>,
    steps: usize,
) -> CliResult<Vec<f64>> {
    let lo = params
        .delta_min
        .or(lo)
        .ok_or_else(|| CliError::validation("parameters.delta_min: required for this system"))?;
    let hi = params
        .delta_max
        .or(hi)
        .ok_or_else(|| CliError::validation("parameters.delta_max: required for this system"))?;
    let steps = positive("delta_steps", params.delta_steps, steps)?;
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(CliError::validation(format!(
            "parameters.delta_min/delta_max: need finite delta_min <= delta_max, got [{lo}, {hi}]"
        )));
    }
    if steps == 1 {
        if lo != hi {
            return Err(CliError::validation(
                "parameters.delta_steps: 1 requires delta_min == delta_max",
            ));
        }
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| {
            if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

fn seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|i| derive_seed(master, i)).collect()
}

/// Runs the configured experiment. Relative noise-table paths resolve
/// against `base_dir`.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> CliResult<Table> {
    let params = &config.parameters;
    let seed = params.seed.unwrap_or(DEFAULT_SEED);
    match config.experiment {
        Experiment::Tradeoff => tradeoff(&config::system_model(&config.system)?, params),
        Experiment::Design => design(&config::system_model(&config.system)?, params),
        Experiment::Simulate if params.scales.is_some() => tracking(config, base_dir, seed),
        Experiment::Simulate => simulate(
            &config::system_model(&config.system)?,
            params,
            base_dir,
            seed,
        ),
        Experiment::Sweep => sweep(
            &config::system_model(&config.system)?,
            params,
            base_dir,
            seed,
        ),
        Experiment::ClosedloopTradeoff => closed_loop(&config::plant(&config.system)?, params),
    }
}

fn tradeoff(sys: &SystemModel, params: &Parameters) -> CliResult<Table> {
    let bounds = performance_bounds(sys)?;
    let grid = delta_grid(
        params,
        Some(bounds.kalman_performance),
        bounds.zero_gain_performance,
        TRADEOFF_STEPS,
    )?;
    let curve = tradeoff_curve(sys, &grid)?;
    let (n, m) = (sys.state_dim(), sys.output_dim());
    let mut header = strs(&["delta", "lambda", "performance", "sensitivity", "at_cap"]);
    header.extend(matrix_columns("k", n, m));
    let mut table = Table::new(header);
    for p in &curve {
        let mut row = vec![
            num(p.delta),
            num(p.lambda),
            num(p.performance),
            num(p.sensitivity),
            p.at_cap.to_string(),
        ];
        row.extend(matrix_cells(p.gain.matrix()));
        table.push(row);
    }
    Ok(table)
}

/// Gain selected by `lambda` or `gamma` (at most one); Kalman otherwise.
fn selected_gain(sys: &SystemModel, params: &Parameters) -> CliResult<(&'static str, FilterGain)> {
    match (params.lambda, params.gamma) {
        (Some(_), Some(_)) => Err(CliError::validation(
            "parameters.lambda/gamma: give at most one",
        )),
        (Some(l), None) => Ok(("optimal", optimal_gain(sys, l)?)),
        (None, Some(g)) => Ok(("robust", robust_gain(sys, g)?)),
        (None, None) => Ok(("kalman", kalman_gain(sys)?)),
    }
}

fn design(sys: &SystemModel, params: &Parameters) -> CliResult<Table> {
    let (kind, gain) = selected_gain(sys, params)?;
    let mut header = strs(&[
        "design",
        "lambda",
        "gamma",
        "performance",
        "sensitivity",
        "worst_case_performance",
    ]);
    header.extend(matrix_columns("k", sys.state_dim(), sys.output_dim()));
    let worst = params
        .gamma
        .map(|g| worst_case_performance(sys, &gain, g))
        .transpose()?;
    let mut row = vec![
        kind.to_string(),
        opt(params.lambda),
        opt(params.gamma),
        num(performance(sys, &gain)?),
        num(sensitivity(sys, &gain)?),
        opt(worst),
    ];
    row.extend(matrix_cells(gain.matrix()));
    let mut table = Table::new(header);
    table.push(row);
    Ok(table)
}

fn nominal_noise(params: &Parameters, r: &Matrix, base_dir: &Path) -> CliResult<NoiseModel> {
    match params.noise.as_ref().and_then(|n| n.nominal.as_ref()) {
        Some(spec) => config::noise_model("parameters.noise.nominal", spec, r.nrows(), base_dir),
        None => Ok(NoiseModel::gaussian(r.clone())?),
    }
}

fn adverse_noise(params: &Parameters, dim: usize, base_dir: &Path) -> CliResult<NoiseModel> {
    if let Some(spec) = params.noise.as_ref().and_then(|n| n.adverse.as_ref()) {
        return config::noise_model("parameters.noise.adverse", spec, dim, base_dir);
    }
    let r = params.r_adverse.as_ref().ok_or_else(|| {
        CliError::validation("parameters.noise.adverse or parameters.R_adverse: required")
    })?;
    Ok(NoiseModel::gaussian(config::shaped(
        "parameters.R_adverse",
        r,
        dim,
        dim,
    )?)?)
}

fn simulate(
    sys: &SystemModel,
    params: &Parameters,
    base_dir: &Path,
    seed: u64,
) -> CliResult<Table> {
    let (_, gain) = selected_gain(sys, params)?;
    let horizon = positive("horizon", params.horizon, SIMULATE_HORIZON)?;
    let trials = positive("trials", params.trials, SIMULATE_TRIALS)?;
    let burn_in = params.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let w = NoiseModel::gaussian(sys.q().clone())?;
    let v = nominal_noise(params, sys.r(), base_dir)?;
    let design = sys.with_measurement_covariance(v.second_moment().clone())?;
    let analytic = performance(&design, &gain)?;
    let mut table = Table::new(strs(&[
        "trial",
        "seed",
        "horizon",
        "burn_in",
        "noise",
        "empirical_performance",
        "analytic_performance",
    ]));
    for (i, s) in seeds(seed, trials).into_iter().enumerate() {
        let run = simulate_filter_with_burn_in(sys, &gain, &w, &v, horizon, burn_in, s)?;
        table.push(vec![
            i.to_string(),
            s.to_string(),
            horizon.to_string(),
            burn_in.to_string(),
            v.kind_name().to_string(),
            num(empirical_performance(&run)?),
            num(analytic),
        ]);
    }
    Ok(table)
}

fn sweep(sys: &SystemModel, params: &Parameters, base_dir: &Path, seed: u64) -> CliResult<Table> {
    let v_nom = nominal_noise(params, sys.r(), base_dir)?;
    let v_adv = adverse_noise(params, sys.output_dim(), base_dir)?;
    let design = sys.with_measurement_covariance(v_nom.second_moment().clone())?;
    let bounds = performance_bounds(&design)?;
    let p_kf = bounds.kalman_performance;
    let (lo, hi) = match bounds.zero_gain_performance {
        Some(p0) => (p_kf, p0),
        None => (1.02 * p_kf, 2.0 * p_kf),
    };
    let grid = delta_grid(params, Some(lo), Some(hi), SWEEP_STEPS)?;
    let horizon = positive("horizon", params.horizon, SWEEP_HORIZON)?;
    let trials = positive("trials", params.trials, SWEEP_TRIALS)?;
    let records = estimator_sweep(sys, &grid, &v_nom, &v_adv, horizon, &seeds(seed, trials))?;

    let mut header = strs(&[
        "delta",
        "lambda",
        "p_nom",
        "p_adv",
        "empirical_sensitivity",
        "sensitivity_std_error",
        "analytic_performance",
        "analytic_sensitivity",
    ]);
    header.extend(matrix_columns("k", sys.state_dim(), sys.output_dim()));
    let mut table = Table::new(header);
    for r in &records {
        let mut row = vec![
            num(r.delta),
            num(r.lambda),
            num(r.p_nom),
            num(r.p_adv),
            num(r.empirical_sensitivity),
            opt(r.sensitivity_std_error),
            num(performance(&design, &r.gain)?),
            num(sensitivity(&design, &r.gain)?),
        ];
        row.extend(matrix_cells(r.gain.matrix()));
        table.push(row);
    }
    Ok(table)
}

/// RMSE of the Kalman-based and the robust LQG controllers across
/// measurement-noise scales.
fn tracking(config: &ExperimentConfig, base_dir: &Path, seed: u64) -> CliResult<Table> {
    let params = &config.parameters;
    let plant = config::plant(&config.system)?;
    let (wx, wu) = config::weights(params, &plant)?;
    let lambda = params.lambda_robust.or(params.lambda).ok_or_else(|| {
        CliError::validation("parameters.lambda_robust: required for the tracking comparison")
    })?;
    let scales = params.scales.clone().unwrap_or_default();
    if scales.is_empty() {
        return Err(CliError::validation("parameters.scales: must not be empty"));
    }
    let horizon = positive("horizon", params.horizon, TRACKING_HORIZON)?;
    let trials = positive("trials", params.trials, TRACKING_TRIALS)?;

    let l = lqr_gain(&plant, &wx, &wu)?;
    let build = |k: FilterGain| -> CliResult<ClosedLoopConfig> {
        let cfg = ClosedLoopConfig::new(plant.clone(), k, l.clone(), wx.clone(), wu.clone())?;
        match params.reference.as_deref() {
            None | Some("none") => Ok(cfg),
            Some("demo-course") => {
                let reference =
                    reference_from_waypoints(&plant, &demo_course(plant.ts(), horizon))?;
                Ok(cfg.with_reference(reference)?)
            }
            Some(other) => Err(CliError::validation(format!(
                "parameters.reference: unknown reference {other:?}; expected demo-course or none"
            ))),
        }
    };
    let kalman = build(kalman_gain(plant.estimation_model())?)?;
    let robust = build(optimal_gain(plant.estimation_model(), lambda)?)?;
    let v = nominal_noise(params, plant.r(), base_dir)?;
    let rows = rmse_sweep(&kalman, &robust, &v, &scales, horizon, &seeds(seed, trials))?;

    let mut table = Table::new(strs(&[
        "scale",
        "rmse_kalman",
        "rmse_robust",
        "stderr_kalman",
        "stderr_robust",
    ]));
    for r in &rows {
        table.push(vec![
            num(r.scale),
            num(r.rmse_kalman),
            num(r.rmse_robust),
            num(r.stderr_kalman),
            num(r.stderr_robust),
        ]);
    }
    Ok(table)
}

fn closed_loop(plant: &PlantWithInput, params: &Parameters) -> CliResult<Table> {
    let (wx, wu) = config::weights(params, plant)?;
    let modes = config::modes(params)?;
    let lqg = ClosedLoopConfig::new(
        plant.clone(),
        kalman_gain(plant.estimation_model())?,
        lqr_gain(plant, &wx, &wu)?,
        wx.clone(),
        wu.clone(),
    )?;
    let j_min = closed_loop_cost(&lqg)?;
    let grid = delta_grid(
        params,
        Some(1.05 * j_min),
        Some(1.6 * j_min),
        CLOSED_LOOP_STEPS,
    )?;
    let options = TradeoffOptions::default();

    let (n, m, p) = (plant.state_dim(), plant.output_dim(), plant.input_dim());
    let mut header = strs(&[
        "mode",
        "delta",
        "cost",
        "sensitivity",
        "multiplier",
        "certified",
    ]);
    header.extend(matrix_columns("k", n, m));
    header.extend(matrix_columns("l", p, n));
    let mut table = Table::new(header);
    for mode in modes {
        for pt in closed_loop_tradeoff_with(plant, &wx, &wu, &grid, mode, &options)? {
            let mut row = vec![
                mode.to_string(),
                num(pt.delta),
                num(pt.cost),
                num(pt.sensitivity),
                opt(pt.multiplier),
                pt.certified.to_string(),
            ];
            row.extend(matrix_cells(&pt.k));
            row.extend(matrix_cells(&pt.l));
            table.push(row);
        }
    }
    Ok(table)
}
