//! Experiment configuration: a single TOML file describing the plant, the
//! controller, the ILC weights and the trajectory generator. Identification
//! writes its fitted joint parameters in the same format, so an identified
//! model file can be merged back into a plant config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mechanical: MechanicalSection,
    pub joint: JointSection,
    pub pressure: PressureSection,
    pub disturbance: DisturbanceSection,
    pub simulation: SimulationSection,
    pub controller: ControllerSection,
    pub ilc: IlcSection,
    pub sysid: SysidSection,
    pub trajectory: TrajectorySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanicalSection {
    /// Radius from pivot to load at p̄ = p̄_min, in m.
    pub r0: f64,
    /// Mass of the movable link, kg.
    pub link_mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for MechanicalSection {
    fn default() -> Self {
        Self {
            r0: 0.3479,
            link_mass: 0.2,
            gravity: 9.81,
        }
    }
}

/// Per-axis parameter polynomials in p̄ (ascending coefficients).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisPolySection {
    pub k: Polynomial,
    pub d: Polynomial,
    pub eta: Polynomial,
    pub t: Polynomial,
}

impl Default for AxisPolySection {
    fn default() -> Self {
        Self {
            k: Polynomial::new(vec![-1.0, 4.0]),
            d: Polynomial::new(vec![0.05, 0.03]),
            eta: Polynomial::new(vec![2.0, 0.2]),
            t: Polynomial::new(vec![0.06, -0.02]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSection {
    pub alpha: AxisPolySection,
    pub beta: AxisPolySection,
}

impl Default for JointSection {
    fn default() -> Self {
        Self {
            alpha: AxisPolySection::default(),
            beta: Self::default_beta(),
        }
    }
}

impl JointSection {
    /// Default β parameters are the α ones perturbed by ±5% so the axes are
    /// distinguishable in identification.
    fn default_beta() -> AxisPolySection {
        let a = AxisPolySection::default();
        let scale =
            |p: &Polynomial, s: f64| Polynomial::new(p.coeffs.iter().map(|c| c * s).collect());
        AxisPolySection {
            k: scale(&a.k, 1.05),
            d: scale(&a.d, 0.95),
            eta: scale(&a.eta, 1.05),
            t: scale(&a.t, 0.95),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureSection {
    /// Admissible stiffness interval for p̄, bar.
    pub p_bar_min: f64,
    pub p_bar_max: f64,
    /// Actuator pressure ceiling, bar.
    pub actuator_max: f64,
    /// Closed-loop time constant of the abstracted inner PID loops, s.
    pub inner_time_constant: f64,
    /// Radius increase over the full p̄ interval, m.
    pub radius_span: f64,
}

impl Default for PressureSection {
    fn default() -> Self {
        Self {
            p_bar_min: 1.0,
            p_bar_max: 1.2,
            actuator_max: 3.0,
            inner_time_constant: 0.02,
            radius_span: 0.006,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSection {
    /// Fraction of each axis' drive leaking into the other axis.
    pub cross_coupling: f64,
    /// Apply the cos(β) gravity torque instead of the linearized model.
    pub gravity_nonlinearity: bool,
    /// Angular kick per unit p̄ rate, rad/(bar/s).
    pub pbar_kick: f64,
    /// Angular impulse on the β axis when depositing the object, N·m·s.
    pub deposit_impulse: f64,
    /// Standard deviation of the angle measurement noise, rad.
    pub measurement_noise_std: f64,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            cross_coupling: 0.05,
            gravity_nonlinearity: true,
            pbar_kick: 0.25,
            deposit_impulse: 0.005,
            measurement_noise_std: 0.05f64.to_radians(),
        }
    }
}

impl DisturbanceSection {
    /// Disturbance- and noise-free variant, used for identification and for
    /// nominal-plant checks.
    pub fn quiet() -> Self {
        Self {
            cross_coupling: 0.0,
            gravity_nonlinearity: false,
            pbar_kick: 0.0,
            deposit_impulse: 0.0,
            measurement_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Inner integration step, s (≤ 1 ms).
    pub dt: f64,
    /// Outer controller sample time, s.
    pub ts_outer: f64,
    /// Mechanical angle limit, rad.
    pub angle_limit: f64,
    /// Any state beyond this magnitude counts as divergence.
    pub divergence_limit: f64,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            ts_outer: 0.02,
            angle_limit: 75f64.to_radians(),
            divergence_limit: 1e6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kappa_alpha: f64,
    pub kappa_beta: f64,
    /// Integrator clamp, bar.
    pub antiwindup_limit: f64,
    /// Schedule with the plan's true mass; otherwise use `user_mass`.
    pub schedule_true_mass: bool,
    pub user_mass: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        // κ places the slow closed-loop pole of T s² + s + κη near 2 Hz at
        // p̄ = 1.1 with the default joint parameters.
        Self {
            kappa_alpha: 3.0,
            kappa_beta: 3.0,
            antiwindup_limit: 2.0,
            schedule_true_mass: true,
            user_mass: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlcSection {
    /// Scalar weights; the lifted matrices are these times the identity.
    pub w_e: f64,
    pub w_du: f64,
    pub w_udot: f64,
    /// p̄ used for the nominal closed-loop model behind the lifted system.
    pub nominal_p_bar: f64,
    /// Iteration budget (number of rollouts, counting iteration 0).
    pub iterations: usize,
    /// Optional plateau stop: halt when the total RMS improves by less than
    /// `plateau_tol` (relative) over `plateau_window` consecutive iterations.
    pub plateau_stop: bool,
    pub plateau_tol: f64,
    pub plateau_window: usize,
}

impl Default for IlcSection {
    fn default() -> Self {
        Self {
            w_e: 1.0,
            w_du: 1e-2,
            w_udot: 1e-6,
            nominal_p_bar: 1.10,
            iterations: 25,
            plateau_stop: false,
            plateau_tol: 0.01,
            plateau_window: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SysidSection {
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub n_frequencies: usize,
    /// Excitation amplitude in the Delta Representation space, bar.
    pub amplitude: f64,
    pub periods: usize,
    pub discard: usize,
    pub p_bar_levels: Vec<f64>,
    pub k_degree: usize,
    pub d_degree: usize,
    pub eta_degree: usize,
    pub t_degree: usize,
}

impl Default for SysidSection {
    fn default() -> Self {
        Self {
            freq_min_hz: 0.2,
            freq_max_hz: 8.0,
            n_frequencies: 15,
            amplitude: 0.1,
            periods: 10,
            discard: 4,
            p_bar_levels: vec![1.0, 1.05, 1.10, 1.15, 1.20],
            k_degree: 1,
            d_degree: 2,
            eta_degree: 2,
            t_degree: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    /// Object mass carried in phase II, kg.
    pub load_mass: f64,
    /// Pick-and-place phase I (pick: p̄ ramp at constant angles).
    pub phase1_duration: f64,
    pub pbar_rise_delay: f64,
    pub pbar_rise_time: f64,
    /// Phase II (carry): transition plus dwell.
    pub phase2_transition: f64,
    pub phase2_dwell: f64,
    /// Phase III (return): transition plus dwell.
    pub phase3_transition: f64,
    pub phase3_dwell: f64,
    /// Pick / place poses, degrees.
    pub pick_alpha_deg: f64,
    pub pick_beta_deg: f64,
    pub place_alpha_deg: f64,
    pub place_beta_deg: f64,
    /// Extra β clearance bump during the carry transition, degrees.
    pub beta_clearance_deg: f64,
    /// Duration of the ejection impulse between phases II and III, s.
    pub eject_window: f64,
    /// Aggressive single-transition task used for ILC training.
    pub aggressive_duration: f64,
    pub aggressive_hold: f64,
    pub aggressive_transition_no_mass: f64,
    pub aggressive_transition_with_mass: f64,
    pub aggressive_p_bar: f64,
    /// Multi-step reference for feedback-only tracking.
    pub track_alpha_steps_deg: Vec<f64>,
    pub track_beta_steps_deg: Vec<f64>,
    pub track_hold: f64,
    pub track_transition: f64,
    pub track_p_bar: f64,
    /// Validator: largest allowed per-sample setpoint change, degrees.
    pub max_step_deg: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            load_mass: 0.2,
            phase1_duration: 1.0,
            pbar_rise_delay: 0.3,
            pbar_rise_time: 0.4,
            phase2_transition: 0.6,
            phase2_dwell: 0.28,
            phase3_transition: 0.3,
            phase3_dwell: 0.6,
            pick_alpha_deg: -30.0,
            pick_beta_deg: -10.0,
            place_alpha_deg: 30.0,
            place_beta_deg: 10.0,
            beta_clearance_deg: 8.0,
            eject_window: 0.1,
            aggressive_duration: 3.0,
            aggressive_hold: 0.7,
            aggressive_transition_no_mass: 0.3,
            aggressive_transition_with_mass: 0.6,
            aggressive_p_bar: 1.1,
            track_alpha_steps_deg: vec![0.0, 25.0, -25.0, 15.0, 0.0],
            track_beta_steps_deg: vec![0.0, 10.0, -15.0, 10.0, 0.0],
            track_hold: 1.2,
            track_transition: 0.4,
            track_p_bar: 1.1,
            max_step_deg: 8.0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mechanical;
        if m.r0 <= 0.0 || m.link_mass <= 0.0 || m.gravity <= 0.0 {
            return Err(Error::Config("mechanical parameters must be positive".into()));
        }
        let p = &self.pressure;
        if !(p.p_bar_min < p.p_bar_max) || p.p_bar_min < 0.0 {
            return Err(Error::Config("invalid p̄ interval".into()));
        }
        if p.actuator_max <= p.p_bar_max || p.inner_time_constant <= 0.0 {
            return Err(Error::Config("invalid pressure limits".into()));
        }
        for (name, axis) in [("alpha", &self.joint.alpha), ("beta", &self.joint.beta)] {
            for (pname, poly, must_increase) in [
                ("k", &axis.k, true),
                ("d", &axis.d, false),
                ("eta", &axis.eta, false),
                ("t", &axis.t, false),
            ] {
                if !poly.positive_on(p.p_bar_min, p.p_bar_max) {
                    return Err(Error::Config(format!(
                        "joint.{name}.{pname} must be strictly positive over the p̄ interval"
                    )));
                }
                if must_increase && !poly.increasing_on(p.p_bar_min, p.p_bar_max) {
                    return Err(Error::Config(format!(
                        "joint.{name}.{pname} must be non-decreasing over the p̄ interval"
                    )));
                }
            }
        }
        let d = &self.disturbance;
        if d.cross_coupling < 0.0
            || d.pbar_kick < 0.0
            || d.deposit_impulse < 0.0
            || d.measurement_noise_std < 0.0
        {
            return Err(Error::Config("disturbance gains must be non-negative".into()));
        }
        let s = &self.simulation;
        if s.dt <= 0.0 || s.dt > 1e-3 + 1e-12 {
            return Err(Error::Config("simulation.dt must be in (0, 1 ms]".into()));
        }
        if s.ts_outer < s.dt {
            return Err(Error::Config("ts_outer must be at least dt".into()));
        }
        if self.controller.kappa_alpha <= 0.0 || self.controller.kappa_beta <= 0.0 {
            return Err(Error::Config("controller gains must be positive".into()));
        }
        if self.ilc.w_du <= 0.0 || self.ilc.w_e < 0.0 || self.ilc.w_udot < 0.0 {
            return Err(Error::Config("ilc weights need w_du > 0, w_e ≥ 0, w_udot ≥ 0".into()));
        }
        let sy = &self.sysid;
        if sy.periods <= sy.discard {
            return Err(Error::Config("sysid.periods must exceed sysid.discard".into()));
        }
        if !sy.p_bar_levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("sysid.p_bar_levels must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Standalone joint-parameter file, as written by the identification
/// pipeline. Contains only the `[joint]` tables of the full config.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct JointFile {
    pub joint: JointSection,
}

impl JointFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read joint file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize joint file: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back.joint.alpha.k.coeffs, cfg.joint.alpha.k.coeffs);
        assert_eq!(back.trajectory.track_alpha_steps_deg, cfg.trajectory.track_alpha_steps_deg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg: Config = toml::from_str("[simulation]\nseed = 7\n").unwrap();
        assert_eq!(cfg.simulation.seed, 7);
        assert_eq!(cfg.mechanical.r0, 0.3479);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = Config::default();
        cfg.simulation.dt = 0.01;
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.joint.alpha.k = Polynomial::new(vec![1.0, -2.0]);
        assert!(cfg.validate().is_err());
    }
}
