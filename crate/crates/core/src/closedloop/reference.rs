use super::{vehicle_dynamics, PlantWithInput};
use crate::error::{Error, Result};
use crate::matops::{check_finite, check_shape, Matrix, Vector};

/// A planar position to be reached at a given step.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub step: usize,
    pub position: [f64; 2],
}

/// Desired states `x_d(0..=len)` and inputs `u_d(0..len)`, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    states: Matrix,
    inputs: Matrix,
}

impl Reference {
    pub fn new(states: Matrix, inputs: Matrix) -> Result<Self> {
        if states.ncols() != inputs.ncols() + 1 {
            return Err(Error::dimension(
                "reference states",
                format!("{} columns", inputs.ncols() + 1),
                states.ncols(),
            ));
        }
        check_finite("reference states", &states)?;
        check_finite("reference inputs", &inputs)?;
        Ok(Self { states, inputs })
    }

    /// Number of steps covered (inputs available for `t < len`).
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub(crate) fn check_dimensions(&self, plant: &PlantWithInput) -> Result<()> {
        check_shape(
            "reference states",
            &self.states,
            plant.state_dim(),
            self.len() + 1,
        )?;
        check_shape(
            "reference inputs",
            &self.inputs,
            plant.input_dim(),
            self.len(),
        )
    }

    /// `max_t ‖x_d(t+1) − A x_d(t) − B u_d(t)‖`; zero for a reference the
    /// plant can follow exactly.
    pub fn dynamics_residual(&self, plant: &PlantWithInput) -> Result<f64> {
        self.check_dimensions(plant)?;
        Ok((0..self.len())
            .map(|t| {
                (self.states.column(t + 1)
                    - plant.a() * self.states.column(t)
                    - plant.b() * self.inputs.column(t))
                .norm()
            })
            .fold(0.0, f64::max))
    }
}

/// Piecewise-constant-velocity course through the waypoints on the planar
/// double integrator. Velocity changes are produced by a single input step
/// one sample before each waypoint, so the positions pass through every
/// waypoint and the course ends at rest. States are generated by forward
/// simulation, so `x_d(t+1) = A x_d(t) + B u_d(t)` holds to rounding.
pub fn reference_from_waypoints(
    plant: &PlantWithInput,
    waypoints: &[Waypoint],
) -> Result<Reference> {
    let ts = plant.ts();
    let (a, b) = vehicle_dynamics(ts);
    if plant.a() != &a || plant.b() != &b {
        return Err(Error::validation(
            "plant",
            "reference generation needs the planar double integrator",
        ));
    }
    if waypoints.len() < 2 {
        return Err(Error::validation("waypoints", "need at least two"));
    }
    if waypoints[0].step != 0 {
        return Err(Error::validation(
            "waypoints",
            "first waypoint must be at step 0",
        ));
    }
    for (i, w) in waypoints.iter().enumerate() {
        if w.position.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation(
                "waypoints",
                format!("waypoint {i} is not finite"),
            ));
        }
    }
    for (i, pair) in waypoints.windows(2).enumerate() {
        if pair[1].step <= pair[0].step {
            return Err(Error::validation(
                "waypoints",
                format!(
                    "steps must strictly increase (waypoint {} at {} after {})",
                    i + 1,
                    pair[1].step,
                    pair[0].step
                ),
            ));
        }
    }

    let velocity = |k: usize| -> [f64; 2] {
        if k + 1 >= waypoints.len() {
            return [0.0, 0.0];
        }
        let dt = (waypoints[k + 1].step - waypoints[k].step) as f64 * ts;
        [
            (waypoints[k + 1].position[0] - waypoints[k].position[0]) / dt,
            (waypoints[k + 1].position[1] - waypoints[k].position[1]) / dt,
        ]
    };
    let len = waypoints[waypoints.len() - 1].step;
    let mut inputs = Matrix::zeros(2, len);
    for k in 1..waypoints.len() {
        let (before, after) = (velocity(k - 1), velocity(k));
        let t = waypoints[k].step - 1;
        inputs[(0, t)] = (after[0] - before[0]) / ts;
        inputs[(1, t)] = (after[1] - before[1]) / ts;
    }
    let v0 = velocity(0);
    let p0 = waypoints[0].position;
    let mut states = Matrix::zeros(4, len + 1);
    states.set_column(0, &Vector::from_vec(vec![p0[0], v0[0], p0[1], v0[1]]));
    for t in 0..len {
        let next = &a * states.column(t) + &b * inputs.column(t);
        states.set_column(t + 1, &next);
    }
    Reference::new(states, inputs)
}

/// Laps of a rounded-rectangle course (300 m × 150 m, 30 m corner radius)
/// at about 3 m/s, long enough to cover `horizon` steps.
pub fn demo_course(ts: f64, horizon: usize) -> Vec<Waypoint> {
    const WIDTH: f64 = 300.0;
    const HEIGHT: f64 = 150.0;
    const RADIUS: f64 = 30.0;
    const SPEED: f64 = 3.0;
    const ARC_POINTS: usize = 4;

    let corners = [
        (WIDTH - RADIUS, RADIUS, -std::f64::consts::FRAC_PI_2),
        (WIDTH - RADIUS, HEIGHT - RADIUS, 0.0),
        (RADIUS, HEIGHT - RADIUS, std::f64::consts::FRAC_PI_2),
        (RADIUS, RADIUS, std::f64::consts::PI),
    ];
    let mut lap = Vec::new();
    for (cx, cy, start) in corners {
        for i in 0..=ARC_POINTS {
            let angle = start + std::f64::consts::FRAC_PI_2 * i as f64 / ARC_POINTS as f64;
            lap.push([cx + RADIUS * angle.cos(), cy + RADIUS * angle.sin()]);
        }
    }

    let mut out = vec![Waypoint {
        step: 0,
        position: lap[0],
    }];
    let mut i = 0;
    while out.last().unwrap().step < horizon {
        let from = lap[i % lap.len()];
        let to = lap[(i + 1) % lap.len()];
        let dist = ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt();
        let steps = ((dist / (SPEED * ts)).round() as usize).max(1);
        out.push(Waypoint {
            step: out.last().unwrap().step + steps,
            position: to,
        });
        i += 1;
    }
    out
}
