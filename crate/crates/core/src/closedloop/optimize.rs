//! Quasi-Newton minimization with central-difference gradients. Infinite
//! objective values mark infeasible (destabilizing) points and are rejected
//! by the line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Converged when `‖∇f‖_∞ ≤ gradient_tol · max(1, |f|)`.
    pub gradient_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            gradient_tol: 1e-9,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Stagnation is accepted as convergence within this factor of the
/// gradient tolerance (the finite-difference noise floor).
const STAGNATION_FACTOR: f64 = 1e3;

fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], fx: f64, step: f64) -> DVector<f64> {
    let mut probe = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => 0.0,
        }
    })
}

pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return Minimum {
            x: x0.to_vec(),
            f: fx,
            gradient_norm: f64::INFINITY,
            converged: false,
            iterations: 0,
        };
    }
    let mut g = gradient(f, x.as_slice(), fx, opts.fd_step);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stalled = false;

    while iterations < opts.max_iterations {
        if g.amax() <= opts.gradient_tol * fx.abs().max(1.0) {
            break;
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        let mut alpha = if fresh {
            (1.0 / g.amax()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * alpha;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                stalled = true;
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let g_new = gradient(f, x_new.as_slice(), f_new, opts.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        let small_progress = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if small_progress && s.amax() <= 1e-14 * x.amax().max(1.0) {
            stalled = true;
            break;
        }
    }
    let scale = fx.abs().max(1.0);
    let gradient_norm = g.amax();
    let converged = gradient_norm <= opts.gradient_tol * scale
        || (stalled && gradient_norm <= STAGNATION_FACTOR * opts.gradient_tol * scale);
    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        gradient_norm,
        converged,
        iterations,
    }
}
