use nalgebra::DVector;

use super::{
    check_finite, check_square, require_stable, require_symmetric, symmetrize, Matrix,
    SolverTolerances,
};
use crate::error::{Error, Result};

/// Refinement passes applied after the dense solve.
const MAX_REFINEMENTS: usize = 3;

/// Hard failure threshold, as a multiple of `residual_tol`.
const RESIDUAL_HARD_FACTOR: f64 = 100.0;

/// `‖X − A X Aᵀ − Q‖_F`.
pub fn lyapunov_residual(a: &Matrix, x: &Matrix, q: &Matrix) -> f64 {
    (x - a * x * a.transpose() - q).norm()
}

/// Solve the Stein equation `X = A X Aᵀ + Q` for arbitrary (possibly
/// non-symmetric) `Q` by vectorization: `(I − A⊗A) vec X = vec Q`.
pub fn solve_stein(a: &Matrix, q: &Matrix, tol: &SolverTolerances) -> Result<Matrix> {
    let n = check_square("Lyapunov A", a)?;
    super::check_shape("Lyapunov right-hand side", q, n, n)?;
    check_finite("Lyapunov A", a)?;
    check_finite("Lyapunov right-hand side", q)?;
    tol.validate()?;
    require_stable("Lyapunov A", a, 0.0)?;

    let nn = n * n;
    let system = Matrix::identity(nn, nn) - a.kronecker(a);
    let lu = system.lu();

    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::unstable("Lyapunov A", 1.0))?;
    let mut x = Matrix::from_column_slice(n, n, sol.as_slice());

    let target = tol.residual_tol * q.norm().max(1.0);
    let mut residual = lyapunov_residual(a, &x, q);
    for _ in 0..MAX_REFINEMENTS {
        if residual <= target {
            break;
        }
        let r = q + a * &x * a.transpose() - &x;
        let Some(dx) = lu.solve(&DVector::from_column_slice(r.as_slice())) else {
            break;
        };
        let candidate = &x + Matrix::from_column_slice(n, n, dx.as_slice());
        let candidate_residual = lyapunov_residual(a, &candidate, q);
        if candidate_residual >= residual {
            break;
        }
        x = candidate;
        residual = candidate_residual;
    }
    if residual > RESIDUAL_HARD_FACTOR * target {
        return Err(Error::Convergence {
            solver: "discrete Lyapunov".into(),
            iterations: MAX_REFINEMENTS,
            residual,
        });
    }
    super::monitor::record(residual, q.norm());
    Ok(x)
}

/// Solve `X = A X Aᵀ + Q` for symmetric `Q`; the result is symmetrized.
pub fn solve_discrete_lyapunov(a: &Matrix, q: &Matrix, tol: &SolverTolerances) -> Result<Matrix> {
    check_square("Lyapunov right-hand side", q)?;
    check_finite("Lyapunov right-hand side", q)?;
    require_symmetric("Lyapunov right-hand side", q)?;
    Ok(symmetrize(&solve_stein(a, q, tol)?))
}

/// Solve the dual equation `M = Aᵀ M A + W`. `W` need not be symmetric; when
/// it is, the result is symmetrized.
pub fn solve_dual_lyapunov(a: &Matrix, w: &Matrix, tol: &SolverTolerances) -> Result<Matrix> {
    let m = solve_stein(&a.transpose(), w, tol)?;
    let symmetric = check_square("dual Lyapunov right-hand side", w).is_ok()
        && require_symmetric("W", w).is_ok();
    Ok(if symmetric { symmetrize(&m) } else { m })
}
