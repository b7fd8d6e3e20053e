//! Synthetic ground-truth simulator of the arm.
//!
//! Each axis is a linearized pendulum with first-order torque dynamics driven
//! by the decoupled pressure difference, giving the third-order structure
//! η/((T s + 1)(J s² + d s + k)) per axis. Stiffness, damping, torque gain
//! and torque time constant are polynomial functions of the lower pressure
//! level p̄. An inner pressure loop is abstracted as a first-order lag per
//! actuator; the torque dynamics see the differences of the lagged pressure
//! states, not the commanded setpoints. Configurable repeatable disturbances
//! (cross-coupling, gravity nonlinearity, p̄-rate kicks, the deposit impulse)
//! provide the errors the learning controller is meant to remove.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::allocation::{self, AbsolutePressures, DeltaRepresentation};
use crate::config::{Config, PressureSection};
use crate::error::{Error, Result};
use crate::poly::Polynomial;

pub use crate::config::DisturbanceSection as DisturbanceConfig;

/// Axis index: 0 = α, 1 = β.
pub const ALPHA: usize = 0;
pub const BETA: usize = 1;

#[derive(Debug, Clone, Copy)]
pub struct MechanicalParams {
    /// Radius from pivot to load at rest, m.
    pub r0: f64,
    /// Mass of the movable link, kg.
    pub link_mass: f64,
    /// Attached load mass, kg.
    pub load_mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl MechanicalParams {
    pub fn new(r0: f64, link_mass: f64, load_mass: f64, gravity: f64) -> Result<Self> {
        let p = Self {
            r0,
            link_mass,
            load_mass,
            gravity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r0 <= 0.0 || self.link_mass <= 0.0 || self.load_mass < 0.0 || self.gravity <= 0.0 {
            return Err(Error::invalid(
                "mechanical parameters require R0 > 0, M > 0, m ≥ 0, g > 0",
            ));
        }
        if self.inertia() <= 0.0 {
            return Err(Error::invalid("inertia must be positive"));
        }
        Ok(())
    }

    /// (m + M/4)·R0².
    pub fn inertia(&self) -> f64 {
        (self.load_mass + self.link_mass / 4.0) * self.r0 * self.r0
    }

    /// Gravity torque magnitude M·g·R0/2 + m·g·R0.
    pub fn gravity_torque(&self) -> f64 {
        self.link_mass * self.gravity * self.r0 / 2.0 + self.load_mass * self.gravity * self.r0
    }

    pub fn with_load(&self, load_mass: f64) -> Self {
        Self { load_mass, ..*self }
    }
}

/// Evaluated axis coefficients at one p̄.
#[derive(Debug, Clone, Copy)]
pub struct AxisCoefficients {
    pub k: f64,
    pub d: f64,
    pub eta: f64,
    pub t: f64,
}

/// p̄-scheduled parameter polynomials of one axis.
#[derive(Debug, Clone)]
pub struct AxisParams {
    pub k: Polynomial,
    pub d: Polynomial,
    pub eta: Polynomial,
    pub t: Polynomial,
}

impl AxisParams {
    pub fn eval(&self, p_bar: f64) -> AxisCoefficients {
        AxisCoefficients {
            k: self.k.eval(p_bar),
            d: self.d.eval(p_bar),
            eta: self.eta.eval(p_bar),
            t: self.t.eval(p_bar),
        }
    }
}

/// Scheduled parameters of both axes.
#[derive(Debug, Clone)]
pub struct JointParameters {
    pub axes: [AxisParams; 2],
}

impl JointParameters {
    pub fn from_config(cfg: &Config) -> Self {
        let mk = |s: &crate::config::AxisPolySection| AxisParams {
            k: s.k.clone(),
            d: s.d.clone(),
            eta: s.eta.clone(),
            t: s.t.clone(),
        };
        Self {
            axes: [mk(&cfg.joint.alpha), mk(&cfg.joint.beta)],
        }
    }

    /// Strict positivity of every parameter over [lo, hi], with k additionally
    /// non-decreasing.
    pub fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        for (i, axis) in self.axes.iter().enumerate() {
            let name = if i == ALPHA { "alpha" } else { "beta" };
            for (pname, poly) in [
                ("k", &axis.k),
                ("d", &axis.d),
                ("eta", &axis.eta),
                ("t", &axis.t),
            ] {
                if !poly.positive_on(lo, hi) {
                    return Err(Error::invalid(format!(
                        "{name}.{pname} not strictly positive over [{lo}, {hi}]"
                    )));
                }
            }
            if !axis.k.increasing_on(lo, hi) {
                return Err(Error::invalid(format!(
                    "{name}.k must be non-decreasing over [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Full continuous simulation state: per axis angle, rate and torque-lag
/// state, plus the three inner pressure-loop states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub angle: [f64; 2],
    pub rate: [f64; 2],
    pub torque: [f64; 2],
    pub pressure: [f64; 3],
}

impl PlantState {
    /// At rest with all actuators at p̄.
    pub fn at_rest(p_bar: f64) -> Self {
        Self {
            angle: [0.0; 2],
            rate: [0.0; 2],
            torque: [0.0; 2],
            pressure: [p_bar; 3],
        }
    }

    pub fn pressures(&self) -> AbsolutePressures {
        AbsolutePressures::new(self.pressure[0], self.pressure[1], self.pressure[2])
    }

    pub fn is_finite(&self) -> bool {
        self.angle.iter().all(|v| v.is_finite())
            && self.rate.iter().all(|v| v.is_finite())
            && self.torque.iter().all(|v| v.is_finite())
            && self.pressure.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for v in self
            .angle
            .iter()
            .chain(self.rate.iter())
            .chain(self.torque.iter())
            .chain(self.pressure.iter())
        {
            m = m.max(v.abs());
        }
        m
    }

    fn axpy(&self, h: f64, d: &StateDerivative) -> Self {
        Self {
            angle: [self.angle[0] + h * d.angle[0], self.angle[1] + h * d.angle[1]],
            rate: [self.rate[0] + h * d.rate[0], self.rate[1] + h * d.rate[1]],
            torque: [
                self.torque[0] + h * d.torque[0],
                self.torque[1] + h * d.torque[1],
            ],
            pressure: [
                self.pressure[0] + h * d.pressure[0],
                self.pressure[1] + h * d.pressure[1],
                self.pressure[2] + h * d.pressure[2],
            ],
        }
    }
}

/// Time derivative of [`PlantState`].
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub angle: [f64; 2],
    pub rate: [f64; 2],
    pub torque: [f64; 2],
    pub pressure: [f64; 3],
}

impl StateDerivative {
    fn weighted(k1: &Self, k2: &Self, k3: &Self, k4: &Self) -> Self {
        let w = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
        Self {
            angle: [
                w(k1.angle[0], k2.angle[0], k3.angle[0], k4.angle[0]),
                w(k1.angle[1], k2.angle[1], k3.angle[1], k4.angle[1]),
            ],
            rate: [
                w(k1.rate[0], k2.rate[0], k3.rate[0], k4.rate[0]),
                w(k1.rate[1], k2.rate[1], k3.rate[1], k4.rate[1]),
            ],
            torque: [
                w(k1.torque[0], k2.torque[0], k3.torque[0], k4.torque[0]),
                w(k1.torque[1], k2.torque[1], k3.torque[1], k4.torque[1]),
            ],
            pressure: [
                w(k1.pressure[0], k2.pressure[0], k3.pressure[0], k4.pressure[0]),
                w(k1.pressure[1], k2.pressure[1], k3.pressure[1], k4.pressure[1]),
                w(k1.pressure[2], k2.pressure[2], k3.pressure[2], k4.pressure[2]),
            ],
        }
    }
}

/// The simulated arm.
#[derive(Debug, Clone)]
pub struct Plant {
    pub mech: MechanicalParams,
    pub joint: JointParameters,
    pub dist: DisturbanceConfig,
    pub pressure: PressureSection,
    /// Mechanical angle stop, rad.
    pub angle_limit: f64,
    pub divergence_limit: f64,
}

impl Plant {
    pub fn from_config(cfg: &Config, load_mass: f64) -> Result<Self> {
        let mech = MechanicalParams::new(
            cfg.mechanical.r0,
            cfg.mechanical.link_mass,
            load_mass,
            cfg.mechanical.gravity,
        )?;
        let joint = JointParameters::from_config(cfg);
        joint.validate(cfg.pressure.p_bar_min, cfg.pressure.p_bar_max)?;
        Ok(Self {
            mech,
            joint,
            dist: cfg.disturbance.clone(),
            pressure: cfg.pressure.clone(),
            angle_limit: cfg.simulation.angle_limit,
            divergence_limit: cfg.simulation.divergence_limit,
        })
    }

    pub fn axis(&self, axis: usize, p_bar: f64) -> AxisCoefficients {
        self.joint.axes[axis].eval(p_bar)
    }

    /// Clamp pressure setpoints into the actuator envelope; flags saturation.
    pub fn clamp_setpoints(&self, sp: &AbsolutePressures) -> (AbsolutePressures, bool) {
        let clamp = |p: f64| p.clamp(0.0, self.pressure.actuator_max);
        let clamped = AbsolutePressures::new(clamp(sp.p_a), clamp(sp.p_b), clamp(sp.p_c));
        (clamped, clamped != *sp)
    }

    /// Continuous dynamics. `ext_torque` carries event disturbances such as
    /// the deposit impulse.
    pub fn eval_dynamics(
        &self,
        state: &PlantState,
        cmd: &DeltaRepresentation,
        ext_torque: [f64; 2],
    ) -> Result<StateDerivative> {
        if !state.is_finite() {
            return Err(Error::SimulationDiverged { t: f64::NAN });
        }
        if !cmd.is_finite() {
            return Err(Error::invalid("non-finite plant input"));
        }

        // Inner pressure loops: first-order lag toward the (clamped) setpoints.
        let (sp, _) = self.clamp_setpoints(&allocation::xi(cmd)?);
        let tc = self.pressure.inner_time_constant;
        let dp_press = [
            (sp.p_a - state.pressure[0]) / tc,
            (sp.p_b - state.pressure[1]) / tc,
            (sp.p_c - state.pressure[2]) / tc,
        ];

        // The torque dynamics see the lagged pressures, not the setpoints.
        let actual = state.pressures();
        let (diffs, p_bar_act) = allocation::differences_from_absolute(&actual)?;
        let (dp_alpha, dp_beta) = allocation::decouple(&diffs)?;

        // Rate of the lower pressure level, for the p̄-step kick.
        let argmin = (0..3).min_by(|&a, &b| {
            state.pressure[a]
                .partial_cmp(&state.pressure[b])
                .expect("finite pressures")
        });
        let p_bar_rate = dp_press[argmin.unwrap()];

        let c = self.dist.cross_coupling;
        let dp_eff = [dp_alpha + c * dp_beta, dp_beta + c * dp_alpha];

        let inertia = self.mech.inertia();
        let mut deriv = StateDerivative {
            angle: [state.rate[0], state.rate[1]],
            rate: [0.0; 2],
            torque: [0.0; 2],
            pressure: dp_press,
        };
        for axis in [ALPHA, BETA] {
            let cf = self.axis(axis, p_bar_act);
            deriv.torque[axis] = (cf.eta * dp_eff[axis] - state.torque[axis]) / cf.t;

            let mut torque = state.torque[axis] + ext_torque[axis];
            torque += self.dist.pbar_kick * p_bar_rate * cf.k;
            if axis == BETA && self.dist.gravity_nonlinearity {
                torque -= self.mech.gravity_torque() * state.angle[BETA].cos();
            }
            deriv.rate[axis] = (torque - cf.d * state.rate[axis] - cf.k * state.angle[axis])
                / inertia;
        }
        Ok(deriv)
    }

    /// One fixed RK4 step with the command held constant (zero-order hold).
    pub fn step(&self, state: &PlantState, cmd: &DeltaRepresentation, dt: f64) -> Result<PlantState> {
        let c = *cmd;
        self.step_with(state, 0.0, dt, &|_| c, [0.0; 2])
    }

    /// One fixed RK4 step with a time-varying command, evaluated at the RK4
    /// stage times. Used by identification so a sinusoidal excitation is not
    /// staircased at the integration rate.
    pub fn step_with(
        &self,
        state: &PlantState,
        t: f64,
        dt: f64,
        cmd: &dyn Fn(f64) -> DeltaRepresentation,
        ext_torque: [f64; 2],
    ) -> Result<PlantState> {
        if !(dt > 0.0 && dt <= 1e-3 + 1e-12) {
            return Err(Error::invalid("step size must be in (0, 1 ms]"));
        }
        let k1 = self.eval_dynamics(state, &cmd(t), ext_torque)?;
        let mid = cmd(t + dt / 2.0);
        let k2 = self.eval_dynamics(&state.axpy(dt / 2.0, &k1), &mid, ext_torque)?;
        let k3 = self.eval_dynamics(&state.axpy(dt / 2.0, &k2), &mid, ext_torque)?;
        let k4 = self.eval_dynamics(&state.axpy(dt, &k3), &cmd(t + dt), ext_torque)?;
        let mut next = state.axpy(dt, &StateDerivative::weighted(&k1, &k2, &k3, &k4));

        // Mechanical stop: clamp the angle and kill the rate into the stop.
        for axis in [ALPHA, BETA] {
            if next.angle[axis] > self.angle_limit {
                next.angle[axis] = self.angle_limit;
                next.rate[axis] = next.rate[axis].min(0.0);
            } else if next.angle[axis] < -self.angle_limit {
                next.angle[axis] = -self.angle_limit;
                next.rate[axis] = next.rate[axis].max(0.0);
            }
        }

        if !next.is_finite() || next.max_abs() > self.divergence_limit {
            return Err(Error::SimulationDiverged { t: t + dt });
        }
        Ok(next)
    }

    /// Advance only the inner pressure-loop states by `dt` using the exact
    /// discrete solution of the first-order lag. Returns the updated state and
    /// whether the setpoints had to be saturated.
    pub fn inner_pressure_loop(
        &self,
        setpoint: &AbsolutePressures,
        state: &PlantState,
        dt: f64,
    ) -> Result<(PlantState, bool)> {
        if !setpoint.is_finite() || dt <= 0.0 {
            return Err(Error::invalid("non-finite setpoint or non-positive dt"));
        }
        let (sp, saturated) = self.clamp_setpoints(setpoint);
        let decay = (-dt / self.pressure.inner_time_constant).exp();
        let mut next = *state;
        for (i, target) in [sp.p_a, sp.p_b, sp.p_c].into_iter().enumerate() {
            next.pressure[i] = target + (state.pressure[i] - target) * decay;
        }
        Ok((next, saturated))
    }

    /// Static elongation map R(p̄): affine between the anchored endpoints,
    /// clamped (with a flag) outside the admissible interval.
    pub fn radius_from_pbar(&self, p_bar: f64) -> (f64, bool) {
        let lo = self.pressure.p_bar_min;
        let hi = self.pressure.p_bar_max;
        let clamped = p_bar.clamp(lo, hi);
        let slope = self.pressure.radius_span / (hi - lo);
        (self.mech.r0 + slope * (clamped - lo), clamped != p_bar)
    }

    /// Noisy angle measurement.
    pub fn measure<R: Rng>(&self, state: &PlantState, rng: &mut R) -> [f64; 2] {
        let sigma = self.dist.measurement_noise_std;
        if sigma == 0.0 {
            return state.angle;
        }
        let normal = Normal::new(0.0, sigma).expect("valid noise std");
        [
            state.angle[ALPHA] + normal.sample(rng),
            state.angle[BETA] + normal.sample(rng),
        ]
    }
}
