use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::optimize::{minimize, BfgsOptions};
use super::{check_weights, evaluate, lqr_gain, PlantWithInput};
use crate::error::{Error, Result};
use crate::filterdesign::{kalman_gain, optimal_gain, LAMBDA_CAP};
use crate::matops::Matrix;

/// Which gains the closed-loop trade-off optimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TradeoffMode {
    OptimizeBoth,
    /// Controller fixed to the LQR gain; optimize the estimator.
    FixLLqr,
    /// Estimator fixed to the Kalman gain; optimize the controller.
    FixKKalman,
}

impl TradeoffMode {
    pub const ALL: [TradeoffMode; 3] = [
        TradeoffMode::OptimizeBoth,
        TradeoffMode::FixLLqr,
        TradeoffMode::FixKKalman,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TradeoffMode::OptimizeBoth => "optimize-both",
            TradeoffMode::FixLLqr => "fix-L-lqr",
            TradeoffMode::FixKKalman => "fix-K-kalman",
        }
    }
}

impl fmt::Display for TradeoffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TradeoffMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::validation(
                    "mode",
                    format!(
                        "unknown mode {s:?}; expected optimize-both, fix-L-lqr or fix-K-kalman"
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTradeoffPoint {
    pub delta: f64,
    pub mode: TradeoffMode,
    pub k: Matrix,
    pub l: Matrix,
    pub cost: f64,
    pub sensitivity: f64,
    /// Scalarization weight `μ` of `𝒮_J + μJ` (or `λ` for
    /// [`frontier_point_for_cost`]); `None` at the endpoints.
    pub multiplier: Option<f64>,
    /// The inner optimizer converged and the cost constraint is active
    /// within tolerance.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffOptions {
    /// Random restarts at each δ, on top of the warm start.
    pub starts: usize,
    pub seed: u64,
    /// `|J − δ| ≤ cost_rel_tol · δ` ends the multiplier search.
    pub cost_rel_tol: f64,
    pub max_search_steps: usize,
    pub bfgs: BfgsOptions,
}

impl Default for TradeoffOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            cost_rel_tol: 1e-7,
            max_search_steps: 60,
            bfgs: BfgsOptions::default(),
        }
    }
}

const MU_CAP: f64 = 1e10;
const MU_FLOOR: f64 = 1e-10;
const RESTART_ROUNDS: usize = 2;

struct Problem<'a> {
    plant: &'a PlantWithInput,
    wx: &'a Matrix,
    wu: &'a Matrix,
    mode: TradeoffMode,
    k_kf: Matrix,
    l_lqr: Matrix,
}

#[derive(Debug, Clone)]
struct Solved {
    theta: Vec<f64>,
    mu: f64,
    cost: f64,
    objective: f64,
    converged: bool,
}

impl Problem<'_> {
    fn gains(&self, theta: &[f64]) -> (Matrix, Matrix) {
        let (n, m, p) = (
            self.plant.state_dim(),
            self.plant.output_dim(),
            self.plant.input_dim(),
        );
        match self.mode {
            TradeoffMode::OptimizeBoth => (
                Matrix::from_column_slice(n, m, &theta[..n * m]),
                Matrix::from_column_slice(p, n, &theta[n * m..]),
            ),
            TradeoffMode::FixLLqr => (Matrix::from_column_slice(n, m, theta), self.l_lqr.clone()),
            TradeoffMode::FixKKalman => (self.k_kf.clone(), Matrix::from_column_slice(p, n, theta)),
        }
    }

    fn theta(&self, k: &Matrix, l: &Matrix) -> Vec<f64> {
        match self.mode {
            TradeoffMode::OptimizeBoth => k.iter().chain(l.iter()).copied().collect(),
            TradeoffMode::FixLLqr => k.as_slice().to_vec(),
            TradeoffMode::FixKKalman => l.as_slice().to_vec(),
        }
    }

    fn eval(&self, theta: &[f64]) -> Option<(f64, f64)> {
        let (k, l) = self.gains(theta);
        evaluate(self.plant, &k, &l, self.wx, self.wu).ok()
    }

    /// Minimize `(𝒮_J + μJ)/(1 + μ)` from `start`.
    fn solve(&self, mu: f64, start: &[f64], opts: &TradeoffOptions) -> Option<Solved> {
        let f = |theta: &[f64]| match self.eval(theta) {
            Some((j, s)) => (s + mu * j) / (1.0 + mu),
            None => f64::INFINITY,
        };
        let found = minimize(&f, start, &opts.bfgs);
        let (cost, _) = self.eval(&found.x)?;
        Some(Solved {
            theta: found.x,
            mu,
            cost,
            objective: found.f,
            converged: found.converged,
        })
    }

    /// Search `μ` so that the scalarized minimizer meets `J = δ`.
    /// Returns the point and whether the constraint is active.
    fn solve_for_delta(
        &self,
        delta: f64,
        start: &[f64],
        mu0: f64,
        opts: &TradeoffOptions,
    ) -> Result<(Solved, bool)> {
        let tol = opts.cost_rel_tol * delta;
        let stagnated = |mu: f64| Error::Convergence {
            solver: "closed-loop trade-off".into(),
            iterations: opts.max_search_steps,
            residual: mu,
        };
        let mut cur = self.solve(mu0, start, opts).ok_or_else(|| stagnated(mu0))?;
        let mut lo: Option<Solved> = None;
        let mut hi: Option<Solved> = None;
        for _ in 0..opts.max_search_steps {
            if (cur.cost - delta).abs() <= tol {
                return Ok((cur, true));
            }
            let (mu, warm) = if cur.cost > delta {
                lo = Some(cur.clone());
                match &hi {
                    Some(_) => break,
                    None => (cur.mu * 4.0, cur.theta.clone()),
                }
            } else {
                hi = Some(cur.clone());
                match &lo {
                    Some(_) => break,
                    None => (cur.mu / 4.0, cur.theta.clone()),
                }
            };
            if mu > MU_CAP {
                return Err(stagnated(mu));
            }
            if mu < MU_FLOOR {
                // constraint cannot be made active: the loosest point found
                return Ok((cur, false));
            }
            cur = self.solve(mu, &warm, opts).ok_or_else(|| stagnated(mu))?;
        }
        if (cur.cost - delta).abs() <= tol {
            return Ok((cur, true));
        }
        let (Some(mut lo), Some(mut hi)) = (lo, hi) else {
            return Err(stagnated(cur.mu));
        };

        // safeguarded regula falsi (Illinois) on g(s) = ln J − ln δ, s = ln μ
        let g = |p: &Solved| p.cost.ln() - delta.ln();
        let (mut g_lo, mut g_hi) = (g(&lo), g(&hi));
        let mut last_side = 0i8;
        for step in 0..opts.max_search_steps {
            let (s_lo, s_hi) = (lo.mu.ln(), hi.mu.ln());
            if (s_hi - s_lo).abs() <= 1e-13 * s_lo.abs().max(1.0) {
                break;
            }
            let secant = s_lo - g_lo * (s_hi - s_lo) / (g_hi - g_lo);
            let width = s_hi - s_lo;
            let inside = (secant - s_lo) / width;
            let s = if step % 4 == 3 || !(0.02..=0.98).contains(&inside) {
                0.5 * (s_lo + s_hi)
            } else {
                secant
            };
            let warm = if (s - s_lo).abs() < (s_hi - s).abs() {
                &lo.theta
            } else {
                &hi.theta
            };
            let next = self
                .solve(s.exp(), warm, opts)
                .ok_or_else(|| stagnated(s.exp()))?;
            if (next.cost - delta).abs() <= tol {
                return Ok((next, true));
            }
            if next.cost > delta {
                g_lo = g(&next);
                lo = next;
                if last_side == -1 {
                    g_hi *= 0.5;
                }
                last_side = -1;
            } else {
                g_hi = g(&next);
                hi = next;
                if last_side == 1 {
                    g_lo *= 0.5;
                }
                last_side = 1;
            }
        }
        Ok((hi, false))
    }

    fn perturbed_start(&self, theta: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let rms = (theta.iter().map(|x| x * x).sum::<f64>() / theta.len() as f64)
            .sqrt()
            .max(1e-3);
        for _ in 0..100 {
            let trial: Vec<f64> = theta
                .iter()
                .map(|&x| x + scale * x.abs().max(0.1 * rms) * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if self.eval(&trial).is_some() {
                return Some(trial);
            }
        }
        None
    }

    fn point(
        &self,
        delta: f64,
        theta: &[f64],
        multiplier: Option<f64>,
        certified: bool,
    ) -> Result<ClosedLoopTradeoffPoint> {
        let (k, l) = self.gains(theta);
        let (cost, sensitivity) = evaluate(self.plant, &k, &l, self.wx, self.wu)?;
        Ok(ClosedLoopTradeoffPoint {
            delta,
            mode: self.mode,
            k,
            l,
            cost,
            sensitivity,
            multiplier,
            certified,
        })
    }
}

fn validate_grid(delta_grid: &[f64]) -> Result<()> {
    if delta_grid.is_empty() {
        return Err(Error::validation("delta grid", "must not be empty"));
    }
    if delta_grid.iter().any(|d| !d.is_finite()) {
        return Err(Error::validation("delta grid", "entries must be finite"));
    }
    if delta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation(
            "delta grid",
            "must be strictly increasing",
        ));
    }
    Ok(())
}

/// [`closed_loop_tradeoff_with`] using default options.
pub fn closed_loop_tradeoff(
    plant: &PlantWithInput,
    wx: &Matrix,
    wu: &Matrix,
    delta_grid: &[f64],
    mode: TradeoffMode,
) -> Result<Vec<ClosedLoopTradeoffPoint>> {
    closed_loop_tradeoff_with(plant, wx, wu, delta_grid, mode, &TradeoffOptions::default())
}

/// Approximate `𝒮*_J(δ) = min 𝒮_J(K, L) s.t. J(K, L) ≤ δ` on each grid point
/// by minimizing `𝒮_J + μJ` with `μ` searched until `J = δ`. The grid is
/// processed in order, each point warm-started from the previous one, then
/// restarted from `options.starts` random perturbations; the feasible point
/// with the lowest sensitivity seen is kept.
pub fn closed_loop_tradeoff_with(
    plant: &PlantWithInput,
    wx: &Matrix,
    wu: &Matrix,
    delta_grid: &[f64],
    mode: TradeoffMode,
    options: &TradeoffOptions,
) -> Result<Vec<ClosedLoopTradeoffPoint>> {
    validate_grid(delta_grid)?;
    check_weights(plant, wx, wu)?;
    if options.starts < 5 {
        return Err(Error::validation(
            "starts",
            format!("need at least 5, got {}", options.starts),
        ));
    }
    if !(options.cost_rel_tol > 0.0 && options.cost_rel_tol < 1.0) {
        return Err(Error::validation("cost_rel_tol", "must lie in (0, 1)"));
    }
    let model = plant.estimation_model();
    let problem = Problem {
        plant,
        wx,
        wu,
        mode,
        k_kf: kalman_gain(model)?.into_matrix(),
        l_lqr: lqr_gain(plant, wx, wu)?,
    };
    let (j_min, _) = evaluate(plant, &problem.k_kf, &problem.l_lqr, wx, wu)?;
    let endpoint_tol = options.cost_rel_tol * j_min;
    let zero_k = Matrix::zeros(plant.state_dim(), plant.output_dim());
    let j_zero = match mode {
        TradeoffMode::FixKKalman => None,
        _ => evaluate(plant, &zero_k, &problem.l_lqr, wx, wu)
            .ok()
            .map(|(j, _)| j),
    };
    if delta_grid[0] < j_min - endpoint_tol {
        return Err(Error::InfeasibleTarget {
            target: delta_grid[0],
            lower: j_min,
            upper: j_zero.unwrap_or(f64::INFINITY),
        });
    }

    let theta_min = problem.theta(&problem.k_kf, &problem.l_lqr);
    let mut warm = theta_min.clone();
    let mut mu_guess = 1.0;
    let mut previous: Option<ClosedLoopTradeoffPoint> = None;
    let mut out = Vec::with_capacity(delta_grid.len());

    for (index, &delta) in delta_grid.iter().enumerate() {
        let point = if delta <= j_min + endpoint_tol {
            problem.point(delta, &theta_min, None, true)?
        } else if j_zero.is_some_and(|j0| delta >= j0) {
            problem.point(delta, &problem.theta(&zero_k, &problem.l_lqr), None, true)?
        } else {
            let (mut best, mut active) =
                problem.solve_for_delta(delta, &warm, mu_guess, options)?;
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(index as u64);
            for _ in 0..RESTART_ROUNDS {
                let mut improved: Option<Solved> = None;
                for i in 0..options.starts {
                    let scale = [0.05, 0.1, 0.2, 0.35, 0.5][i % 5] * (1 + i / 5) as f64;
                    let Some(start) = problem.perturbed_start(&best.theta, scale, &mut rng) else {
                        continue;
                    };
                    let Some(cand) = problem.solve(best.mu, &start, options) else {
                        continue;
                    };
                    let target = improved.as_ref().map_or(best.objective, |p| p.objective);
                    if cand.objective < target - 1e-9 * target.abs() {
                        improved = Some(cand);
                    }
                }
                let Some(better) = improved else {
                    break;
                };
                (best, active) =
                    problem.solve_for_delta(delta, &better.theta, better.mu, options)?;
            }
            warm = best.theta.clone();
            mu_guess = best.mu;
            let certified = best.converged && active;
            problem.point(delta, &best.theta, Some(best.mu), certified)?
        };
        // a point feasible for a tighter δ is feasible here too
        let point = match previous {
            Some(prev) if prev.sensitivity < point.sensitivity && prev.cost <= delta => {
                ClosedLoopTradeoffPoint {
                    delta,
                    certified: false,
                    ..prev
                }
            }
            _ => point,
        };
        previous = Some(point.clone());
        out.push(point);
    }
    Ok(out)
}

/// Controller fixed to the LQR gain, estimator `K*(λ)` from the open-loop
/// frontier, with `λ` bisected so that `J(K*(λ), L_lqr) = δ`.
pub fn frontier_point_for_cost(
    plant: &PlantWithInput,
    wx: &Matrix,
    wu: &Matrix,
    delta: f64,
) -> Result<ClosedLoopTradeoffPoint> {
    check_weights(plant, wx, wu)?;
    let model = plant.estimation_model();
    let l = lqr_gain(plant, wx, wu)?;
    let cost_at = |lambda: f64| -> Result<(Matrix, f64, f64)> {
        let k = optimal_gain(model, lambda)?.into_matrix();
        let (j, s) = evaluate(plant, &k, &l, wx, wu)?;
        Ok((k, j, s))
    };
    let make = |k: Matrix, cost: f64, sensitivity: f64, lambda: Option<f64>, certified: bool| {
        ClosedLoopTradeoffPoint {
            delta,
            mode: TradeoffMode::FixLLqr,
            k,
            l: l.clone(),
            cost,
            sensitivity,
            multiplier: lambda,
            certified,
        }
    };
    let k_kf = kalman_gain(model)?.into_matrix();
    let (j_min, s_min) = evaluate(plant, &k_kf, &l, wx, wu)?;
    let tol = 1e-10 * delta.abs().max(1.0);
    if !delta.is_finite() || delta < j_min - tol {
        return Err(Error::InfeasibleTarget {
            target: delta,
            lower: j_min,
            upper: f64::INFINITY,
        });
    }
    if delta <= j_min + tol {
        return Ok(make(k_kf, j_min, s_min, None, true));
    }
    if model.is_open_loop_stable() {
        let zero = Matrix::zeros(plant.state_dim(), plant.output_dim());
        if let Ok((j0, s0)) = evaluate(plant, &zero, &l, wx, wu) {
            if delta >= j0 {
                return Ok(make(zero, j0, s0, Some(0.0), true));
            }
        }
    }
    // J(K*(λ)) falls towards J_min as λ grows
    let feasible = |lambda: f64| cost_at(lambda).map(|(_, j, _)| j <= delta).unwrap_or(false);
    let (mut lo, mut hi) = (1.0, 1.0);
    if feasible(1.0) {
        while feasible(lo) {
            lo *= 0.5;
            if lo < 1e-15 {
                let (k, j, s) = cost_at(hi)?;
                return Ok(make(k, j, s, Some(hi), false));
            }
        }
        hi = lo * 2.0;
    } else {
        while !feasible(hi) {
            hi *= 2.0;
            if hi > LAMBDA_CAP {
                return Ok(make(k_kf, j_min, s_min, Some(LAMBDA_CAP), false));
            }
        }
        lo = hi / 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi as f64).sqrt();
        let (k, j, s) = cost_at(mid)?;
        if (j - delta).abs() <= tol {
            return Ok(make(k, j, s, Some(mid), true));
        }
        if j <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 <= 1e-15 {
            break;
        }
    }
    let (k, j, s) = cost_at(hi)?;
    Ok(make(k, j, s, Some(hi), (j - delta).abs() <= 1e-8 * delta))
}
