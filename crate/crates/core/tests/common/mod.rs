//! Test-only oracles: random systems and gains, central differences and a
//! derivative-free minimizer. Nothing here calls into the gradient or
//! Riccati code paths it is used to check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use pareto_filter::filterdesign::{FilterGain, SystemModel};
use pareto_filter::matops::{spectral_radius, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Fixed seed for every randomized oracle in the test suites.
pub const ORACLE_SEED: u64 = 0x5EED_2020;

pub fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    r.set_stream(stream);
    r
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_stable_matrix(rng: &mut impl Rng, n: usize, radius: f64) -> Matrix {
    loop {
        let a = gaussian_matrix(rng, n, n);
        let rho = spectral_radius(&a).unwrap();
        if rho > 1e-3 {
            return a * (radius / rho);
        }
    }
}

pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n);
    &g * g.transpose() / n as f64 + Matrix::identity(n, n) * floor
}

/// Random stable system with `n` states and `m` outputs.
pub fn random_system(rng: &mut impl Rng, n: usize, m: usize) -> SystemModel {
    let radius = rng.random_range(0.5..0.95);
    let a = random_stable_matrix(rng, n, radius);
    let c = gaussian_matrix(rng, m, n);
    let q = random_spd(rng, n, 0.1);
    let r = random_spd(rng, m, 0.1);
    SystemModel::new(a, c, q.clone(), r, q).unwrap()
}

/// A gain `center + scale·N(0, 1)` that is certified stable.
pub fn random_stable_gain(
    rng: &mut impl Rng,
    sys: &SystemModel,
    center: &Matrix,
    scale: f64,
) -> FilterGain {
    loop {
        let k = center + gaussian_matrix(rng, sys.state_dim(), sys.output_dim()) * scale;
        if let Ok(g) = FilterGain::new(sys, k) {
            return g;
        }
    }
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn central_difference(x: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[(i, j)] += h;
        minus[(i, j)] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// Central difference with symmetric perturbations `E_ij + E_ji` (a single
/// `E_ii` on the diagonal), halved off the diagonal so that for a symmetric
/// gradient the result equals that gradient entrywise.
pub fn symmetric_central_difference(x: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[(i, j)] += h;
        minus[(i, j)] -= h;
        if i != j {
            plus[(j, i)] += h;
            minus[(j, i)] -= h;
        }
        let d = (f(&plus) - f(&minus)) / (2.0 * h);
        if i == j {
            d
        } else {
            d / 2.0
        }
    })
}

/// Largest entrywise error relative to `max(|g_ij|, floor·max|g|)`.
pub fn max_relative_error(approx: &Matrix, exact: &Matrix, floor: f64) -> f64 {
    let scale = exact.amax().max(1e-300);
    approx
        .iter()
        .zip(exact.iter())
        .map(|(a, e)| (a - e).abs() / e.abs().max(floor * scale))
        .fold(0.0, f64::max)
}

/// Nelder–Mead on a flattened parameter vector. Infinite values mark
/// infeasible points.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= 1e-15 * values[0].abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|d| centroid[d] + t * (simplex[n][d] - centroid[d]))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n)
                        .map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| {
            values[a]
                .partial_cmp(&values[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    (simplex[best].clone(), values[best])
}

/// Nelder–Mead with restarts from the incumbent, which recovers from
/// simplex collapse.
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64) -> (Vec<f64>, f64) {
    let (mut x, mut v) = nelder_mead(f, x0, step, 4000);
    let mut s = step;
    for _ in 0..12 {
        s *= 0.3;
        let (x2, v2) = nelder_mead(f, &x, s.max(1e-7), 4000);
        if v2 < v {
            x = x2;
            v = v2;
        }
    }
    (x, v)
}

/// Objective over a flattened gain: `f(K)` or +∞ when `K` is not stable.
pub fn gain_objective<'a>(
    sys: &'a SystemModel,
    f: impl Fn(&FilterGain) -> f64 + 'a,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        let k = Matrix::from_column_slice(sys.state_dim(), sys.output_dim(), x);
        match FilterGain::new(sys, k) {
            Ok(g) => f(&g),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Iterate `P(t+1) = A_K P A_Kᵀ + B_K Q B_Kᵀ + K R Kᵀ` from Σ₀ to stationarity.
pub fn covariance_recursion(sys: &SystemModel, gain: &FilterGain) -> Matrix {
    let ak = gain.a_k(sys);
    let bk = gain.b_k(sys);
    let k = gain.matrix();
    let forcing = &bk * sys.q() * bk.transpose() + k * sys.r() * k.transpose();
    let mut p = sys.sigma0().clone();
    for _ in 0..1_000_000 {
        let next = &ak * &p * ak.transpose() + &forcing;
        let done = (&next - &p).norm() < 1e-13;
        p = next;
        if done {
            break;
        }
    }
    p
}

/// Σ_{i=0}^{N} Aⁱ Q (Aᵀ)ⁱ truncated when ρ^{2N}‖Q‖ < 1e-14.
pub fn lyapunov_series(a: &Matrix, q: &Matrix) -> Matrix {
    let rho = spectral_radius(a).unwrap();
    let terms = if rho < 1e-12 {
        1
    } else {
        ((1e-14 / q.norm().max(1e-300)).ln() / (2.0 * rho.ln()))
            .ceil()
            .max(1.0) as usize
            + 50
    };
    let mut sum = Matrix::zeros(q.nrows(), q.ncols());
    let mut term = q.clone();
    for _ in 0..terms {
        sum += &term;
        term = a * term * a.transpose();
    }
    sum
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Random plant with input. `radius` sets ρ(A) and may exceed one; random
/// `B` and `C` are generically stabilizable and detectable.
pub fn random_plant(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    p: usize,
    radius: f64,
) -> pareto_filter::closedloop::PlantWithInput {
    let a = random_stable_matrix(rng, n, radius);
    let b = gaussian_matrix(rng, n, p);
    let c = gaussian_matrix(rng, m, n);
    let q = random_spd(rng, n, 0.1);
    let r = random_spd(rng, m, 0.1);
    pareto_filter::closedloop::PlantWithInput::new(a, b, c, q.clone(), r, q, 1.0).unwrap()
}
