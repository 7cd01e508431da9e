//! Steady-state filter design on the accuracy/robustness frontier.
//!
//! The filter is `x̂(t+1) = A x̂(t) + K [y(t+1) − C A x̂(t)]`. For a gain `K`
//! with `A_K = A − KCA` stable, the steady-state error covariance `P(K)` and
//! the sensitivity matrix `S(K)` solve
//!
//! ```text
//! P = A_K P A_Kᵀ + B_K Q B_Kᵀ + K R Kᵀ,    B_K = I − KC
//! S = A_K S A_Kᵀ + K Kᵀ
//! ```
//!
//! Accuracy is `𝒫(K) = tr P(K)` and robustness is measured by the sensitivity
//! `𝒮(K) = tr S(K) = tr(d𝒫/dR)`. Minimizing `𝒮` subject to `𝒫 ≤ δ` is solved in
//! closed form for every multiplier `λ ≥ 0` by [`optimal_gain`]; the
//! multiplier matching a target `δ` is found by bisection in
//! [`solve_lambda_for_delta`].

mod metrics;
mod synthesis;

pub use metrics::{
    error_covariance, gradient_bundle, performance, sensitivity, sensitivity_matrix,
    stationarity_residual, worst_case_performance, GradientBundle,
};
pub use synthesis::{
    kalman_gain, optimal_gain, performance_bounds, robust_gain, solve_lambda_for_delta,
    tradeoff_curve, PerformanceBounds, TradeoffPoint, LAMBDA_CAP,
};

use crate::error::{Error, Result};
use crate::matops::{
    check_finite, check_shape, check_square, is_detectable, require_positive_definite,
    require_positive_semidefinite, require_stable, spectral_radius, Matrix, SolverTolerances,
};

/// Margin by which a gain's closed-loop spectral radius must stay below one.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Plant `x(t+1) = A x(t) + w(t)`, `y(t) = C x(t) + v(t)` with
/// `w ~ 𝒩(0, Q)`, `v ~ 𝒩(0, R)` and `x(0) ~ 𝒩(0, Σ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: Matrix,
    c: Matrix,
    q: Matrix,
    r: Matrix,
    sigma0: Matrix,
    open_loop_spectral_radius: f64,
    tolerances: SolverTolerances,
}

impl SystemModel {
    /// Build a model with Schur-stable `A`.
    pub fn new(a: Matrix, c: Matrix, q: Matrix, r: Matrix, sigma0: Matrix) -> Result<Self> {
        let sys = Self::build(a, c, q, r, sigma0)?;
        if sys.open_loop_spectral_radius >= 1.0 {
            return Err(Error::unstable("A", sys.open_loop_spectral_radius));
        }
        Ok(sys)
    }

    /// Build a model whose `A` may be marginally stable or unstable, as long
    /// as `(A, C)` is detectable. The zero gain is then not admissible and
    /// `𝒫(0)` is infinite.
    pub fn with_unstable_dynamics(
        a: Matrix,
        c: Matrix,
        q: Matrix,
        r: Matrix,
        sigma0: Matrix,
    ) -> Result<Self> {
        let sys = Self::build(a, c, q, r, sigma0)?;
        if !is_detectable(&sys.a, &sys.c)? {
            return Err(Error::validation("A, C", "pair is not detectable"));
        }
        Ok(sys)
    }

    fn build(a: Matrix, c: Matrix, q: Matrix, r: Matrix, sigma0: Matrix) -> Result<Self> {
        let n = check_square("A", &a)?;
        check_finite("A", &a)?;
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dimension(
                "C",
                format!("m x {n}"),
                format!("{}x{}", c.nrows(), c.ncols()),
            ));
        }
        check_finite("C", &c)?;
        let m = c.nrows();
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        check_shape("Sigma0", &sigma0, n, n)?;
        require_positive_semidefinite("Q", &q)?;
        require_positive_definite("R", &r)?;
        require_positive_semidefinite("Sigma0", &sigma0)?;
        let open_loop_spectral_radius = spectral_radius(&a)?;
        Ok(Self {
            a,
            c,
            q,
            r,
            sigma0,
            open_loop_spectral_radius,
            tolerances: SolverTolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tolerances: SolverTolerances) -> Result<Self> {
        tolerances.validate()?;
        self.tolerances = tolerances;
        Ok(self)
    }

    /// Same plant with a different measurement-noise covariance.
    pub fn with_measurement_covariance(&self, r: Matrix) -> Result<Self> {
        check_shape("R", &r, self.output_dim(), self.output_dim())?;
        require_positive_definite("R", &r)?;
        Ok(Self { r, ..self.clone() })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub fn sigma0(&self) -> &Matrix {
        &self.sigma0
    }
    pub fn tolerances(&self) -> &SolverTolerances {
        &self.tolerances
    }
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    pub fn open_loop_spectral_radius(&self) -> f64 {
        self.open_loop_spectral_radius
    }
    pub fn is_open_loop_stable(&self) -> bool {
        self.open_loop_spectral_radius < 1.0
    }
}

/// An `n × m` estimator gain certified stable for the system it was built
/// against: `ρ(A − KCA) < 1 − STABILITY_MARGIN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGain {
    k: Matrix,
    closed_loop_spectral_radius: f64,
}

impl FilterGain {
    pub fn new(sys: &SystemModel, k: Matrix) -> Result<Self> {
        check_shape("K", &k, sys.state_dim(), sys.output_dim())?;
        check_finite("K", &k)?;
        let rho = require_stable("A − KCA", &closed_loop_matrix(sys, &k), STABILITY_MARGIN)?;
        Ok(Self {
            k,
            closed_loop_spectral_radius: rho,
        })
    }

    /// The zero gain; only admissible when `A` itself is stable.
    pub fn zero(sys: &SystemModel) -> Result<Self> {
        Self::new(sys, Matrix::zeros(sys.state_dim(), sys.output_dim()))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.k
    }

    pub fn into_matrix(self) -> Matrix {
        self.k
    }

    pub fn closed_loop_spectral_radius(&self) -> f64 {
        self.closed_loop_spectral_radius
    }

    /// `A_K = A − KCA`.
    pub fn a_k(&self, sys: &SystemModel) -> Matrix {
        closed_loop_matrix(sys, &self.k)
    }

    /// `B_K = I − KC`.
    pub fn b_k(&self, sys: &SystemModel) -> Matrix {
        Matrix::identity(sys.state_dim(), sys.state_dim()) - &self.k * sys.c()
    }
}

fn closed_loop_matrix(sys: &SystemModel, k: &Matrix) -> Matrix {
    sys.a() - k * sys.c() * sys.a()
}
