use super::{FilterGain, SystemModel};
use crate::error::{Error, Result};
use crate::matops::{solve_discrete_lyapunov, solve_dual_lyapunov, symmetrize, Matrix};

/// Steady-state error covariance `P(K)`.
pub fn error_covariance(sys: &SystemModel, gain: &FilterGain) -> Result<Matrix> {
    let k = gain.matrix();
    let bk = gain.b_k(sys);
    let rhs = symmetrize(&(&bk * sys.q() * bk.transpose() + k * sys.r() * k.transpose()));
    solve_discrete_lyapunov(&gain.a_k(sys), &rhs, sys.tolerances())
}

/// `𝒫(K) = tr P(K)`.
pub fn performance(sys: &SystemModel, gain: &FilterGain) -> Result<f64> {
    Ok(error_covariance(sys, gain)?.trace())
}

/// `S(K)` solving `S = A_K S A_Kᵀ + K Kᵀ`.
pub fn sensitivity_matrix(sys: &SystemModel, gain: &FilterGain) -> Result<Matrix> {
    let k = gain.matrix();
    solve_discrete_lyapunov(&gain.a_k(sys), &(k * k.transpose()), sys.tolerances())
}

/// `𝒮(K) = tr S(K)`.
pub fn sensitivity(sys: &SystemModel, gain: &FilterGain) -> Result<f64> {
    Ok(sensitivity_matrix(sys, gain)?.trace())
}

/// `𝒫(K) + γ 𝒮(K)`: the first-order worst case over perturbations of `R`
/// with `tr ΔR ≤ γ`.
pub fn worst_case_performance(sys: &SystemModel, gain: &FilterGain, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::validation(
            "gamma",
            format!("must be finite and nonnegative, got {gamma}"),
        ));
    }
    Ok(performance(sys, gain)? + gamma * sensitivity(sys, gain)?)
}

/// Covariances and closed-form first derivatives at one gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub p: Matrix,
    pub s: Matrix,
    /// Solution of `M = A_Kᵀ M A_K + I`.
    pub m: Matrix,
    /// `d𝒫/dR = Kᵀ M K`.
    pub dp_dr: Matrix,
    /// `d𝒫/dK = 2M(KR − A_K P Aᵀ Cᵀ − B_K Q Cᵀ)`.
    pub dp_dk: Matrix,
    /// `d𝒮/dK = 2M(K − A_K S Aᵀ Cᵀ)`.
    pub ds_dk: Matrix,
}

pub fn gradient_bundle(sys: &SystemModel, gain: &FilterGain) -> Result<GradientBundle> {
    let n = sys.state_dim();
    let k = gain.matrix();
    let ak = gain.a_k(sys);
    let bk = gain.b_k(sys);
    let p = error_covariance(sys, gain)?;
    let s = sensitivity_matrix(sys, gain)?;
    let m = solve_dual_lyapunov(&ak, &Matrix::identity(n, n), sys.tolerances())?;

    let at_ct = sys.a().transpose() * sys.c().transpose();
    let dp_dr = symmetrize(&(k.transpose() * &m * k));
    let ds_dk = &m * (k - &ak * &s * &at_ct) * 2.0;
    let dp_dk = &m * (k * sys.r() - &ak * &p * &at_ct - &bk * sys.q() * sys.c().transpose()) * 2.0;
    Ok(GradientBundle {
        p,
        s,
        m,
        dp_dr,
        dp_dk,
        ds_dk,
    })
}

/// `‖d𝒮/dK + λ d𝒫/dK‖_F`, which vanishes at the λ-optimal gain.
pub fn stationarity_residual(sys: &SystemModel, gain: &FilterGain, lambda: f64) -> Result<f64> {
    let g = gradient_bundle(sys, gain)?;
    Ok((g.ds_dk + g.dp_dk * lambda).norm())
}
