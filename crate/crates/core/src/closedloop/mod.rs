//! Output-feedback tracking with an estimator-based controller
//!
//! ```text
//! x_c(t+1) = (I − KC)(A − BL) x_c(t) + K (y(t+1) − C x_d(t+1))
//! u(t)     = −L x_c(t) + u_d(t)
//! ```
//!
//! In regulation form the tracking error `ε = x − x_d` and the controller
//! state `x_c` evolve jointly as `z(t+1) = 𝔸 z(t) + 𝔹w w(t) + 𝔹v v(t+1)`,
//! and the steady-state cost `J = tr(𝕎 Σz)` and its sensitivity to the
//! measurement-noise covariance follow from one dual Lyapunov solve.

mod optimize;
pub use optimize::BfgsOptions;
mod reference;
mod tracking;
mod tradeoff;

pub use reference::{demo_course, reference_from_waypoints, Reference, Waypoint};
pub use tracking::{rmse_sweep, sign_changes, tracking_simulate, RmseRow, TrackingRun};
pub use tradeoff::{
    closed_loop_tradeoff, closed_loop_tradeoff_with, frontier_point_for_cost,
    ClosedLoopTradeoffPoint, TradeoffMode, TradeoffOptions,
};

use crate::error::{Error, Result};
use crate::filterdesign::{FilterGain, SystemModel};
use crate::matops::{
    check_finite, check_shape, check_square, is_stabilizable, require_positive_definite,
    solve_dual_lyapunov, solve_lqr_riccati, spectral_radius, Matrix, SolverTolerances,
};
use crate::presets::vehicle;

/// Plant with control input:
/// `x(t+1) = A x(t) + B u(t) + w(t)`, `y(t) = C x(t) + v(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantWithInput {
    b: Matrix,
    ts: f64,
    model: SystemModel,
}

impl PlantWithInput {
    /// `(A, B)` must be stabilizable and `(A, C)` detectable.
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        q: Matrix,
        r: Matrix,
        sigma0: Matrix,
        ts: f64,
    ) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::validation(
                "Ts",
                format!("must be positive and finite, got {ts}"),
            ));
        }
        let n = check_square("A", &a)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dimension(
                "B",
                format!("{n} x p"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        check_finite("B", &b)?;
        let model = if spectral_radius(&a)? < 1.0 {
            SystemModel::new(a, c, q, r, sigma0)?
        } else {
            SystemModel::with_unstable_dynamics(a, c, q, r, sigma0)?
        };
        if !is_stabilizable(model.a(), &b)? {
            return Err(Error::validation("A, B", "pair is not stabilizable"));
        }
        Ok(Self { b, ts, model })
    }

    pub fn a(&self) -> &Matrix {
        self.model.a()
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        self.model.c()
    }
    pub fn q(&self) -> &Matrix {
        self.model.q()
    }
    pub fn r(&self) -> &Matrix {
        self.model.r()
    }
    pub fn sigma0(&self) -> &Matrix {
        self.model.sigma0()
    }
    pub fn ts(&self) -> f64 {
        self.ts
    }
    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.model.output_dim()
    }
    pub fn tolerances(&self) -> &SolverTolerances {
        self.model.tolerances()
    }

    /// The estimation problem `(A, C, Q, R, Σ₀)` seen by the filter designer.
    pub fn estimation_model(&self) -> &SystemModel {
        &self.model
    }

    pub fn with_measurement_covariance(&self, r: Matrix) -> Result<Self> {
        Ok(Self {
            model: self.model.with_measurement_covariance(r)?,
            ..self.clone()
        })
    }
}

fn vehicle_dynamics(ts: f64) -> (Matrix, Matrix) {
    let mut a = Matrix::identity(4, 4);
    a[(0, 1)] = ts;
    a[(2, 3)] = ts;
    let mut b = Matrix::zeros(4, 2);
    b[(1, 0)] = ts;
    b[(3, 1)] = ts;
    (a, b)
}

/// Planar double integrator with state `(p_x, v_x, p_y, v_y)`, position
/// measurements, `Q = 0.1 I₄`, `R = 0.1 I₂` and `Σ₀ = Q`.
pub fn vehicle_preset(ts: f64) -> Result<PlantWithInput> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::validation(
            "Ts",
            format!("must be positive and finite, got {ts}"),
        ));
    }
    let (a, b) = vehicle_dynamics(ts);
    let mut c = Matrix::zeros(2, 4);
    c[(0, 0)] = 1.0;
    c[(1, 2)] = 1.0;
    let q = Matrix::identity(4, 4) * vehicle::PROCESS_NOISE_SCALE;
    let r = Matrix::identity(2, 2) * vehicle::MEASUREMENT_NOISE_SCALE;
    PlantWithInput::new(a, b, c, q.clone(), r, q, ts)
}

/// Infinite-horizon LQR gain for weights `(Wx, Wu)`.
pub fn lqr_gain(plant: &PlantWithInput, wx: &Matrix, wu: &Matrix) -> Result<Matrix> {
    Ok(solve_lqr_riccati(plant.a(), plant.b(), wx, wu, plant.tolerances())?.l)
}

fn check_weights(plant: &PlantWithInput, wx: &Matrix, wu: &Matrix) -> Result<()> {
    check_shape("Wx", wx, plant.state_dim(), plant.state_dim())?;
    check_shape("Wu", wu, plant.input_dim(), plant.input_dim())?;
    require_positive_definite("Wx", wx)?;
    require_positive_definite("Wu", wu)
}

/// Plant, gains, weights and (optionally) a reference to track.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    plant: PlantWithInput,
    k: FilterGain,
    l: Matrix,
    wx: Matrix,
    wu: Matrix,
    reference: Option<Reference>,
    spectral_radius: f64,
}

impl ClosedLoopConfig {
    pub fn new(
        plant: PlantWithInput,
        k: FilterGain,
        l: Matrix,
        wx: Matrix,
        wu: Matrix,
    ) -> Result<Self> {
        check_shape("K", k.matrix(), plant.state_dim(), plant.output_dim())?;
        check_shape("L", &l, plant.input_dim(), plant.state_dim())?;
        check_finite("L", &l)?;
        check_weights(&plant, &wx, &wu)?;
        let aug = augment(&plant, k.matrix(), &l, &wx, &wu);
        let rho = spectral_radius(&aug.a)?;
        if rho >= 1.0 {
            return Err(Error::unstable("closed-loop matrix", rho));
        }
        Ok(Self {
            plant,
            k,
            l,
            wx,
            wu,
            reference: None,
            spectral_radius: rho,
        })
    }

    pub fn with_reference(mut self, reference: Reference) -> Result<Self> {
        reference.check_dimensions(&self.plant)?;
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn plant(&self) -> &PlantWithInput {
        &self.plant
    }
    pub fn k(&self) -> &FilterGain {
        &self.k
    }
    pub fn l(&self) -> &Matrix {
        &self.l
    }
    pub fn wx(&self) -> &Matrix {
        &self.wx
    }
    pub fn wu(&self) -> &Matrix {
        &self.wu
    }
    pub fn reference(&self) -> Option<&Reference> {
        self.reference.as_ref()
    }
    /// `ρ(𝔸)`.
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
}

/// Augmented regulation-form matrices for `z = (x − x_d, x_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    /// `[[A, −BL], [KCA, A − BL − KCA]]`.
    pub a: Matrix,
    /// `[[I], [KC]]`.
    pub bw: Matrix,
    /// `[[0], [K]]`.
    pub bv: Matrix,
    /// `blockdiag(Wx, Lᵀ Wu L)`.
    pub w: Matrix,
}

fn augment(
    plant: &PlantWithInput,
    k: &Matrix,
    l: &Matrix,
    wx: &Matrix,
    wu: &Matrix,
) -> AugmentedSystem {
    let n = plant.state_dim();
    let m = plant.output_dim();
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let bl = b * l;
    let kca = k * c * a;
    let mut big_a = Matrix::zeros(2 * n, 2 * n);
    big_a.view_mut((0, 0), (n, n)).copy_from(a);
    big_a.view_mut((0, n), (n, n)).copy_from(&(-&bl));
    big_a.view_mut((n, 0), (n, n)).copy_from(&kca);
    big_a.view_mut((n, n), (n, n)).copy_from(&(a - &bl - &kca));
    let mut bw = Matrix::zeros(2 * n, n);
    bw.view_mut((0, 0), (n, n)).fill_with_identity();
    bw.view_mut((n, 0), (n, n)).copy_from(&(k * c));
    let mut bv = Matrix::zeros(2 * n, m);
    bv.view_mut((n, 0), (n, m)).copy_from(k);
    let mut w = Matrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n)).copy_from(wx);
    w.view_mut((n, n), (n, n))
        .copy_from(&(l.transpose() * wu * l));
    AugmentedSystem {
        a: big_a,
        bw,
        bv,
        w,
    }
}

pub fn augmented_closed_loop(cfg: &ClosedLoopConfig) -> Result<AugmentedSystem> {
    Ok(augment(
        &cfg.plant,
        cfg.k.matrix(),
        &cfg.l,
        &cfg.wx,
        &cfg.wu,
    ))
}

/// `(J, 𝒮_J)` for raw gains; errors when the closed loop is not stable.
pub(crate) fn evaluate(
    plant: &PlantWithInput,
    k: &Matrix,
    l: &Matrix,
    wx: &Matrix,
    wu: &Matrix,
) -> Result<(f64, f64)> {
    let aug = augment(plant, k, l, wx, wu);
    let m = solve_dual_lyapunov(&aug.a, &aug.w, plant.tolerances())?;
    let sv = aug.bv.transpose() * &m * &aug.bv;
    let sw = aug.bw.transpose() * &m * &aug.bw;
    let cost = (sw * plant.q()).trace() + (&sv * plant.r()).trace();
    Ok((cost, sv.trace()))
}

/// Steady-state cost `J = tr(𝔹wᵀ𝕄𝔹w Q) + tr(𝔹vᵀ𝕄𝔹v R)` with `𝕄 = 𝔸ᵀ𝕄𝔸 + 𝕎`,
/// equal to `tr(𝕎 Σz)` for the stationary covariance `Σz`.
pub fn closed_loop_cost(cfg: &ClosedLoopConfig) -> Result<f64> {
    Ok(cost_and_sensitivity(cfg)?.0)
}

/// `𝒮_J = tr(∂J/∂R) = tr(𝔹vᵀ𝕄𝔹v)`.
pub fn cost_sensitivity(cfg: &ClosedLoopConfig) -> Result<f64> {
    Ok(cost_and_sensitivity(cfg)?.1)
}

pub fn cost_and_sensitivity(cfg: &ClosedLoopConfig) -> Result<(f64, f64)> {
    evaluate(&cfg.plant, cfg.k.matrix(), &cfg.l, &cfg.wx, &cfg.wu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterdesign::kalman_gain;
    use crate::matops::from_rows;
    use crate::presets::vehicle::{input_weight, state_weight};

    #[test]
    fn vehicle_matrices() {
        let p = vehicle_preset(1.0).unwrap();
        assert_eq!(
            p.a(),
            &from_rows(&[
                &[1.0, 1.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 1.0],
                &[0.0, 0.0, 0.0, 1.0]
            ])
        );
        assert_eq!(
            p.c(),
            &from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]])
        );
        let half = vehicle_preset(0.5).unwrap();
        assert_eq!(
            half.b(),
            &from_rows(&[&[0.0, 0.0], &[0.5, 0.0], &[0.0, 0.0], &[0.0, 0.5]])
        );
        assert!(vehicle_preset(0.0).is_err());
    }

    #[test]
    fn zero_gains_give_block_diagonal() {
        let sys = crate::presets::example1();
        let plant = PlantWithInput::new(
            sys.a().clone(),
            Matrix::identity(2, 2),
            sys.c().clone(),
            sys.q().clone(),
            sys.r().clone(),
            sys.sigma0().clone(),
            1.0,
        )
        .unwrap();
        let cfg = ClosedLoopConfig::new(
            plant,
            FilterGain::zero(&sys).unwrap(),
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let aug = augmented_closed_loop(&cfg).unwrap();
        let mut expected = Matrix::zeros(4, 4);
        expected.view_mut((0, 0), (2, 2)).copy_from(sys.a());
        expected.view_mut((2, 2), (2, 2)).copy_from(sys.a());
        assert_eq!(aug.a, expected);
        assert_eq!(cost_sensitivity(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn lqg_on_vehicle_is_stable() {
        let plant = vehicle_preset(1.0).unwrap();
        let l = lqr_gain(&plant, &state_weight(), &input_weight()).unwrap();
        let k = kalman_gain(plant.estimation_model()).unwrap();
        let cfg =
            ClosedLoopConfig::new(plant.clone(), k, l.clone(), state_weight(), input_weight())
                .unwrap();
        assert!(cfg.spectral_radius() < 1.0);
        let aug = augmented_closed_loop(&cfg).unwrap();
        assert_eq!(aug.a.view((0, 0), (4, 4)), plant.a().view((0, 0), (4, 4)));
        let (j, s) = cost_and_sensitivity(&cfg).unwrap();
        assert!(j > 0.0 && s > 0.0);
    }

    #[test]
    fn open_loop_vehicle_without_estimator_is_rejected() {
        let plant = vehicle_preset(1.0).unwrap();
        let l = lqr_gain(&plant, &state_weight(), &input_weight()).unwrap();
        // K = 0 leaves the plant in open loop
        let unstable = ClosedLoopConfig::new(
            plant.clone(),
            kalman_gain(plant.estimation_model()).unwrap(),
            Matrix::zeros(2, 4),
            state_weight(),
            input_weight(),
        );
        assert!(matches!(unstable, Err(Error::Instability { .. })));
        assert!(evaluate(
            &plant,
            &Matrix::zeros(4, 2),
            &l,
            &state_weight(),
            &input_weight()
        )
        .is_err());
    }
}
