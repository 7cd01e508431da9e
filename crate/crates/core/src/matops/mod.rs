//! Dense linear-algebra kernel.
//!
//! Everything here works on [`Matrix`] (a dynamically sized `f64` matrix)
//! and is a pure function of its inputs. The Lyapunov solvers vectorize the
//! equation into an `n² × n²` dense system; the Riccati solvers run the
//! associated covariance (or value) recursion to its fixed point.

mod lyapunov;
mod monitor;
mod riccati;

pub use lyapunov::{lyapunov_residual, solve_discrete_lyapunov, solve_dual_lyapunov, solve_stein};
pub use monitor::{reset_residual_monitor, worst_relative_residual};
pub use riccati::{
    filter_riccati_residual, lqr_riccati_residual, riccati_gain, solve_filter_riccati,
    solve_lqr_riccati, solve_prediction_riccati, LqrSolution,
};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Pivot threshold used by the Cholesky positive-definiteness test.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Asymmetry tolerated on inputs that must be symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            max_iterations: 10_000,
        }
    }
}

impl SolverTolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::validation(
                "residual_tol",
                format!("must be positive and finite, got {}", self.residual_tol),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Build a matrix from row slices. Panics on ragged input; meant for literals.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let ncols = rows.first().map_or(0, |r| r.len());
    assert!(
        rows.iter().all(|r| r.len() == ncols),
        "ragged matrix literal"
    );
    Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}

pub(crate) fn check_square(name: &str, m: &Matrix) -> Result<usize> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::dimension(
            name,
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

pub(crate) fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dimension(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn check_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(name, "entries must be finite"))
    }
}

pub(crate) fn require_symmetric(name: &str, m: &Matrix) -> Result<()> {
    let scale = m.amax().max(1.0);
    if asymmetry(m) > SYMMETRY_TOL * scale {
        return Err(Error::validation(name, "matrix is not symmetric"));
    }
    Ok(())
}

/// Cholesky-based positive-definiteness test with an absolute pivot floor.
pub fn is_positive_definite(m: &Matrix) -> bool {
    if !m.is_square() || asymmetry(m) > SYMMETRY_TOL * m.amax().max(1.0) {
        return false;
    }
    let n = m.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > CHOLESKY_PIVOT_TOL) {
            return false;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

pub(crate) fn require_positive_definite(name: &str, m: &Matrix) -> Result<()> {
    check_square(name, m)?;
    check_finite(name, m)?;
    if is_positive_definite(m) {
        Ok(())
    } else {
        Err(Error::validation(name, "matrix is not positive definite"))
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub(crate) fn require_positive_semidefinite(name: &str, m: &Matrix) -> Result<()> {
    check_square(name, m)?;
    check_finite(name, m)?;
    require_symmetric(name, m)?;
    let floor = -1e-12 * m.amax().max(1.0);
    if min_symmetric_eigenvalue(m) < floor {
        return Err(Error::validation(
            name,
            "matrix is not positive semidefinite",
        ));
    }
    Ok(())
}

/// A square root `F` with `F Fᵀ = m` for symmetric PSD `m`, from the
/// eigendecomposition with negative round-off eigenvalues clamped to zero.
pub fn psd_factor(m: &Matrix) -> Matrix {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots)
}

fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    let n = check_square("spectral_radius", a)?;
    check_finite("spectral_radius", a)?;
    if n == 1 {
        return Ok(vec![Complex::new(a[(0, 0)], 0.0)]);
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Convergence {
            solver: "Schur eigenvalue iteration".into(),
            iterations: 100_000,
            residual: f64::NAN,
        }
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Errors unless `ρ(a) < 1 − margin`. Returns the spectral radius.
pub(crate) fn require_stable(context: &str, a: &Matrix, margin: f64) -> Result<f64> {
    let rho = spectral_radius(a)?;
    if rho < 1.0 - margin {
        Ok(rho)
    } else {
        Err(Error::unstable(context, rho))
    }
}

/// PBH detectability test: every eigenvalue with |z| ≥ 1 must be observable
/// through `c`, i.e. `[A − zI; C]` has full column rank.
pub fn is_detectable(a: &Matrix, c: &Matrix) -> Result<bool> {
    let n = check_square("A", a)?;
    if c.ncols() != n {
        return Err(Error::dimension(
            "C",
            format!("?x{n}"),
            format!("{}x{}", c.nrows(), c.ncols()),
        ));
    }
    for z in eigenvalues(a)? {
        if z.norm() < 1.0 {
            continue;
        }
        let stacked = nalgebra::DMatrix::<Complex<f64>>::from_fn(n + c.nrows(), n, |i, j| {
            if i < n {
                let diag = if i == j { z } else { Complex::new(0.0, 0.0) };
                Complex::new(a[(i, j)], 0.0) - diag
            } else {
                Complex::new(c[(i - n, j)], 0.0)
            }
        });
        let sv = stacked.svd(false, false).singular_values;
        let smax = sv.max().max(1.0);
        if sv.iter().filter(|s| **s > 1e-10 * smax).count() < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH stabilizability test, the dual of [`is_detectable`].
pub fn is_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool> {
    is_detectable(&a.transpose(), &b.transpose())
}
