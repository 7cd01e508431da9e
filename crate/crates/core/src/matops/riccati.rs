use super::{
    check_finite, check_shape, check_square, is_detectable, is_stabilizable,
    require_positive_definite, require_positive_semidefinite, require_stable, symmetrize, Matrix,
    SolverTolerances,
};
use crate::error::{Error, Result};

/// Solve `G Z = B` for symmetric positive definite `G`.
pub(crate) fn spd_solve(context: &str, g: &Matrix, b: &Matrix) -> Result<Matrix> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::validation(context, "matrix is not positive definite"))?;
    Ok(chol.solve(b))
}

/// `K = X Cᵀ (C X Cᵀ + R)⁻¹` for symmetric `X`.
pub fn riccati_gain(c: &Matrix, x: &Matrix, r: &Matrix) -> Result<Matrix> {
    let g = c * x * c.transpose() + r;
    Ok(spd_solve("C X Cᵀ + R", &g, &(c * x))?.transpose())
}

/// One step of `X ↦ A X Aᵀ − A X Cᵀ (C X Cᵀ + R)⁻¹ C X Aᵀ + Q`.
fn filter_riccati_map(
    a: &Matrix,
    c: &Matrix,
    q: &Matrix,
    r: &Matrix,
    x: &Matrix,
) -> Result<Matrix> {
    let h = c * x * a.transpose();
    let g = c * x * c.transpose() + r;
    let correction = h.transpose() * spd_solve("innovation covariance", &g, &h)?;
    Ok(symmetrize(&(a * x * a.transpose() - correction + q)))
}

/// `‖X − f(X)‖_F` for the filter Riccati map with weights `(Q, R)`.
pub fn filter_riccati_residual(a: &Matrix, c: &Matrix, q: &Matrix, r: &Matrix, x: &Matrix) -> f64 {
    match filter_riccati_map(a, c, q, r, x) {
        Ok(fx) => (x - fx).norm(),
        Err(_) => f64::INFINITY,
    }
}

fn iterate_filter_riccati(
    a: &Matrix,
    c: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: &SolverTolerances,
    solver: &str,
) -> Result<Matrix> {
    let threshold = tol.residual_tol * q.norm().max(1.0);
    let mut x = q.clone();
    let mut step = f64::INFINITY;
    for _ in 0..tol.max_iterations {
        let next = filter_riccati_map(a, c, q, r, &x)?;
        step = (&next - &x).norm();
        x = next;
        if !step.is_finite() {
            break;
        }
        if step <= threshold {
            super::monitor::record(filter_riccati_residual(a, c, q, r, &x), q.norm());
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        solver: solver.into(),
        iterations: tol.max_iterations,
        residual: step,
    })
}

fn validate_estimation_data(
    a: &Matrix,
    c: &Matrix,
    q: &Matrix,
    r: &Matrix,
) -> Result<(usize, usize)> {
    let n = check_square("A", a)?;
    let m = c.nrows();
    check_shape("C", c, m, n)?;
    check_shape("Q", q, n, n)?;
    check_shape("R", r, m, m)?;
    check_finite("A", a)?;
    check_finite("C", c)?;
    require_positive_semidefinite("Q", q)?;
    require_positive_definite("R", r)?;
    if !is_detectable(a, c)? {
        return Err(Error::validation("A, C", "pair is not detectable"));
    }
    Ok((n, m))
}

/// Solve the λ-weighted filter Riccati equation
/// `X = A X Aᵀ − A X Cᵀ (C X Cᵀ + I + λR)⁻¹ C X Aᵀ + λQ`
/// by fixed-point iteration from `X₀ = λQ`. For `λ = 0` the solution is zero.
pub fn solve_filter_riccati(
    a: &Matrix,
    c: &Matrix,
    q: &Matrix,
    r: &Matrix,
    lambda: f64,
    tol: &SolverTolerances,
) -> Result<Matrix> {
    tol.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::validation(
            "lambda",
            format!("must be finite and nonnegative, got {lambda}"),
        ));
    }
    let (n, m) = validate_estimation_data(a, c, q, r)?;
    if lambda == 0.0 {
        // the zero solution is only stabilizing for stable A
        require_stable("A", a, 0.0)?;
        return Ok(Matrix::zeros(n, n));
    }
    let q_eff = q * lambda;
    let r_eff = Matrix::identity(m, m) + r * lambda;
    iterate_filter_riccati(a, c, &q_eff, &r_eff, tol, "filter Riccati")
}

/// Solve the steady-state prediction Riccati equation
/// `Σ = AΣAᵀ − AΣCᵀ(CΣCᵀ + R)⁻¹CΣAᵀ + Q` by fixed-point iteration from `Σ₀ = Q`.
pub fn solve_prediction_riccati(
    a: &Matrix,
    c: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: &SolverTolerances,
) -> Result<Matrix> {
    tol.validate()?;
    validate_estimation_data(a, c, q, r)?;
    iterate_filter_riccati(a, c, q, r, tol, "prediction Riccati")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// Cost-to-go matrix.
    pub x: Matrix,
    /// State-feedback gain, `u = −L x`.
    pub l: Matrix,
    /// `ρ(A − BL)`.
    pub closed_loop_spectral_radius: f64,
}

fn lqr_map(
    a: &Matrix,
    b: &Matrix,
    wx: &Matrix,
    wu: &Matrix,
    x: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let bx = b.transpose() * x;
    let g = &bx * b + wu;
    let l = spd_solve("Bᵀ X B + Wu", &g, &(&bx * a))?;
    let next = a.transpose() * x * a - (&bx * a).transpose() * &l + wx;
    Ok((symmetrize(&next), l))
}

/// `‖X − f(X)‖_F` for the LQR Riccati map.
pub fn lqr_riccati_residual(a: &Matrix, b: &Matrix, wx: &Matrix, wu: &Matrix, x: &Matrix) -> f64 {
    match lqr_map(a, b, wx, wu, x) {
        Ok((fx, _)) => (x - fx).norm(),
        Err(_) => f64::INFINITY,
    }
}

/// Solve `X = AᵀXA − AᵀXB(BᵀXB + Wu)⁻¹BᵀXA + Wx` by value iteration from
/// `X₀ = Wx` and return the gain `L = (BᵀXB + Wu)⁻¹BᵀXA`.
pub fn solve_lqr_riccati(
    a: &Matrix,
    b: &Matrix,
    wx: &Matrix,
    wu: &Matrix,
    tol: &SolverTolerances,
) -> Result<LqrSolution> {
    tol.validate()?;
    let n = check_square("A", a)?;
    let p = b.ncols();
    check_shape("B", b, n, p)?;
    check_finite("A", a)?;
    check_finite("B", b)?;
    check_shape("Wx", wx, n, n)?;
    check_shape("Wu", wu, p, p)?;
    require_positive_definite("Wx", wx)?;
    require_positive_definite("Wu", wu)?;
    if !is_stabilizable(a, b)? {
        return Err(Error::validation("A, B", "pair is not stabilizable"));
    }

    let threshold = tol.residual_tol * wx.norm().max(1.0);
    let mut x = wx.clone();
    let mut step = f64::INFINITY;
    for _ in 0..tol.max_iterations {
        let (next, _) = lqr_map(a, b, wx, wu, &x)?;
        step = (&next - &x).norm();
        x = next;
        if !step.is_finite() {
            break;
        }
        if step <= threshold {
            let bx = b.transpose() * &x;
            let l = spd_solve("Bᵀ X B + Wu", &(&bx * b + wu), &(&bx * a))?;
            let rho = require_stable("A − BL", &(a - b * &l), 0.0)?;
            super::monitor::record(lqr_riccati_residual(a, b, wx, wu, &x), wx.norm());
            return Ok(LqrSolution {
                x,
                l,
                closed_loop_spectral_radius: rho,
            });
        }
    }
    Err(Error::Convergence {
        solver: "LQR Riccati".into(),
        iterations: tol.max_iterations,
        residual: step,
    })
}
