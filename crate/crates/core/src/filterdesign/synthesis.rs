use rayon::prelude::*;

use super::{performance, sensitivity, FilterGain, SystemModel};
use crate::error::{Error, Result};
use crate::matops::{riccati_gain, solve_filter_riccati, solve_prediction_riccati, Matrix};

/// Largest multiplier tried by [`solve_lambda_for_delta`]. Targets that are
/// still not met there are treated as the Kalman endpoint.
pub const LAMBDA_CAP: f64 = 1e9;

/// Smallest multiplier tried when shrinking the bracket towards `λ = 0`.
const LAMBDA_FLOOR: f64 = 1e-15;

/// One point of the frontier `𝒮*(δ) = min 𝒮(K) s.t. 𝒫(K) ≤ δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub delta: f64,
    pub lambda: f64,
    pub gain: FilterGain,
    pub performance: f64,
    pub sensitivity: f64,
    /// The bisection hit [`LAMBDA_CAP`]; `gain` is the Kalman gain.
    pub at_cap: bool,
}

/// Steady-state Kalman gain `K = ΣCᵀ(CΣCᵀ + R)⁻¹`.
pub fn kalman_gain(sys: &SystemModel) -> Result<FilterGain> {
    let sigma = solve_prediction_riccati(sys.a(), sys.c(), sys.q(), sys.r(), sys.tolerances())?;
    FilterGain::new(sys, riccati_gain(sys.c(), &sigma, sys.r())?)
}

/// `K*(λ) = XCᵀ(CXCᵀ + I + λR)⁻¹` with `X` the λ-weighted filter Riccati
/// solution. Minimizes `𝒮(K) + λ𝒫(K)`; `K*(0) = 0`.
pub fn optimal_gain(sys: &SystemModel, lambda: f64) -> Result<FilterGain> {
    let x = solve_filter_riccati(sys.a(), sys.c(), sys.q(), sys.r(), lambda, sys.tolerances())?;
    if lambda == 0.0 {
        return FilterGain::zero(sys);
    }
    let m = sys.output_dim();
    let r_eff = Matrix::identity(m, m) + sys.r() * lambda;
    FilterGain::new(sys, riccati_gain(sys.c(), &x, &r_eff)?)
}

/// Gain minimizing `𝒫(K) + γ𝒮(K)`, i.e. `K*(1/γ)`.
pub fn robust_gain(sys: &SystemModel, gamma: f64) -> Result<FilterGain> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::validation(
            "gamma",
            format!("must be positive and finite, got {gamma}"),
        ));
    }
    optimal_gain(sys, 1.0 / gamma)
}

/// The accuracy range of the frontier: `[𝒫(K_kf), 𝒫(0)]`, where the upper
/// end is `None` (infinite) when `A` is not stable.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceBounds {
    pub kalman: FilterGain,
    pub kalman_performance: f64,
    pub zero_gain_performance: Option<f64>,
}

pub fn performance_bounds(sys: &SystemModel) -> Result<PerformanceBounds> {
    let kalman = kalman_gain(sys)?;
    let kalman_performance = performance(sys, &kalman)?;
    let zero_gain_performance = if sys.is_open_loop_stable() {
        Some(performance(sys, &FilterGain::zero(sys)?)?)
    } else {
        None
    };
    Ok(PerformanceBounds {
        kalman,
        kalman_performance,
        zero_gain_performance,
    })
}

fn point(
    sys: &SystemModel,
    delta: f64,
    lambda: f64,
    gain: FilterGain,
    at_cap: bool,
) -> Result<TradeoffPoint> {
    Ok(TradeoffPoint {
        delta,
        lambda,
        performance: performance(sys, &gain)?,
        sensitivity: sensitivity(sys, &gain)?,
        gain,
        at_cap,
    })
}

/// Find `λ` with `𝒫(K*(λ)) = δ` by bisection on `log λ`.
///
/// `δ` must lie in `[𝒫(K_kf), 𝒫(0)]` up to `1e-8·max(1, δ)`. The upper bracket
/// is grown by doubling from 1; if it reaches [`LAMBDA_CAP`] without meeting
/// the target, the Kalman gain is returned with `at_cap` set.
pub fn solve_lambda_for_delta(sys: &SystemModel, delta: f64) -> Result<TradeoffPoint> {
    let bounds = performance_bounds(sys)?;
    solve_with_bounds(sys, delta, &bounds)
}

fn solve_with_bounds(
    sys: &SystemModel,
    delta: f64,
    bounds: &PerformanceBounds,
) -> Result<TradeoffPoint> {
    let tol = 1e-8 * delta.abs().max(1.0);
    let upper = bounds.zero_gain_performance.unwrap_or(f64::INFINITY);
    if !delta.is_finite() || delta < bounds.kalman_performance - tol || delta > upper + tol {
        return Err(Error::InfeasibleTarget {
            target: delta,
            lower: bounds.kalman_performance,
            upper,
        });
    }
    if delta >= upper {
        return point(sys, delta, 0.0, FilterGain::zero(sys)?, false);
    }

    let perf_at = |lambda: f64| -> Result<(f64, FilterGain)> {
        let gain = optimal_gain(sys, lambda)?;
        Ok((performance(sys, &gain)?, gain))
    };

    // 𝒫*(λ) is strictly decreasing: grow hi until 𝒫*(hi) ≤ δ.
    let mut hi = 1.0;
    let mut hi_eval = perf_at(hi)?;
    while hi_eval.0 > delta {
        if hi >= LAMBDA_CAP {
            return point(sys, delta, LAMBDA_CAP, bounds.kalman.clone(), true);
        }
        hi = (hi * 2.0).min(LAMBDA_CAP);
        hi_eval = perf_at(hi)?;
    }
    if (hi_eval.0 - delta).abs() <= 0.1 * tol {
        return point(sys, delta, hi, hi_eval.1, false);
    }
    // then shrink lo until 𝒫*(lo) > δ
    let mut lo = hi / 2.0;
    let mut lo_eval = perf_at(lo)?;
    while lo_eval.0 <= delta {
        if lo < LAMBDA_FLOOR {
            return Err(Error::Convergence {
                solver: "lambda bracket".into(),
                iterations: 0,
                residual: lo_eval.0 - delta,
            });
        }
        hi = lo;
        hi_eval = lo_eval;
        lo /= 2.0;
        lo_eval = perf_at(lo)?;
    }

    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let (p, gain) = perf_at(mid)?;
        if (p - delta).abs() <= 0.1 * tol {
            return point(sys, delta, mid, gain, false);
        }
        if p > delta {
            lo = mid;
            lo_eval = (p, gain);
        } else {
            hi = mid;
            hi_eval = (p, gain);
        }
        if hi / lo - 1.0 <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let (lambda, (p, gain)) = if (lo_eval.0 - delta).abs() <= (hi_eval.0 - delta).abs() {
        (lo, lo_eval)
    } else {
        (hi, hi_eval)
    };
    if (p - delta).abs() > tol {
        return Err(Error::Convergence {
            solver: "lambda bisection".into(),
            iterations: 200,
            residual: p - delta,
        });
    }
    point(sys, delta, lambda, gain, false)
}

/// Frontier points for a strictly increasing grid of accuracy targets,
/// computed in parallel and returned in grid order.
pub fn tradeoff_curve(sys: &SystemModel, delta_grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    if delta_grid.is_empty() {
        return Err(Error::validation("delta_grid", "must not be empty"));
    }
    if delta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation(
            "delta_grid",
            "must be strictly increasing",
        ));
    }
    let bounds = performance_bounds(sys)?;
    delta_grid
        .par_iter()
        .map(|&delta| solve_with_bounds(sys, delta, &bounds))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterdesign::stationarity_residual;
    use crate::matops::from_rows;
    use crate::presets::example1;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_kalman() {
        let sys = SystemModel::new(
            from_rows(&[&[0.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[1.0]]),
            from_rows(&[&[1.0]]),
        )
        .unwrap();
        let k = kalman_gain(&sys).unwrap();
        assert_abs_diff_eq!(k.matrix()[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(performance(&sys, &k).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lambda_zero_is_zero_gain() {
        let sys = example1();
        let k = optimal_gain(&sys, 0.0).unwrap();
        assert_eq!(k.matrix(), &Matrix::zeros(2, 2));
        assert!(optimal_gain(&sys, -1.0).is_err());
    }

    #[test]
    fn robust_gain_is_inverse_lambda() {
        let sys = example1();
        assert_eq!(
            robust_gain(&sys, 1.0).unwrap(),
            optimal_gain(&sys, 1.0).unwrap()
        );
        assert_eq!(
            robust_gain(&sys, 4.0).unwrap(),
            optimal_gain(&sys, 0.25).unwrap()
        );
        assert!(robust_gain(&sys, 0.0).is_err());
        assert!(robust_gain(&sys, -2.0).is_err());
        let kf = kalman_gain(&sys).unwrap();
        let near_kf = robust_gain(&sys, 1e-6).unwrap();
        assert!((near_kf.matrix() - kf.matrix()).norm() < 1e-4);
        let near_zero = robust_gain(&sys, 1e6).unwrap();
        assert!(near_zero.matrix().norm() < 1e-5);
    }

    #[test]
    fn zero_gain_endpoint_and_infeasible_targets() {
        let sys = example1();
        let b = performance_bounds(&sys).unwrap();
        let p0 = b.zero_gain_performance.unwrap();
        let pt = solve_lambda_for_delta(&sys, p0).unwrap();
        assert_eq!(pt.lambda, 0.0);
        assert_eq!(pt.sensitivity, 0.0);
        assert!(matches!(
            solve_lambda_for_delta(&sys, p0 * 1.01),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            solve_lambda_for_delta(&sys, b.kalman_performance * 0.99),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn kalman_endpoint() {
        let sys = example1();
        let b = performance_bounds(&sys).unwrap();
        let pt = solve_lambda_for_delta(&sys, b.kalman_performance).unwrap();
        assert!(pt.lambda >= 1e6);
        assert!((pt.performance - b.kalman_performance).abs() <= 1e-6);
        assert!((pt.gain.matrix() - b.kalman.matrix()).norm() <= 1e-3);
        // a target below 𝒫(K_kf) but inside the tolerance can only be met at the cap
        let below = solve_lambda_for_delta(&sys, b.kalman_performance - 1e-9).unwrap();
        assert!(below.at_cap);
        assert_eq!(below.lambda, LAMBDA_CAP);
        assert_eq!(below.gain, b.kalman);
        // the capped optimal gain itself is within the same tolerance
        let capped = optimal_gain(&sys, LAMBDA_CAP).unwrap();
        assert!((performance(&sys, &capped).unwrap() - b.kalman_performance).abs() <= 1e-6);
    }

    #[test]
    fn midpoint_target_is_active() {
        let sys = example1();
        let b = performance_bounds(&sys).unwrap();
        let delta = 0.5 * (b.kalman_performance + b.zero_gain_performance.unwrap());
        let pt = solve_lambda_for_delta(&sys, delta).unwrap();
        assert!(pt.lambda > 0.0);
        assert!((pt.performance - delta).abs() <= 1e-8 * delta.max(1.0));
        let r = stationarity_residual(&sys, &pt.gain, pt.lambda).unwrap();
        assert!(r <= 1e-7 * (1.0 + pt.lambda));
    }

    #[test]
    fn grid_validation() {
        let sys = example1();
        assert!(tradeoff_curve(&sys, &[]).is_err());
        let b = performance_bounds(&sys).unwrap();
        let p0 = b.zero_gain_performance.unwrap();
        assert!(tradeoff_curve(&sys, &[p0, p0]).is_err());
        let single = tradeoff_curve(&sys, &[p0]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].sensitivity, 0.0);
    }
}
