//! Gain-scheduled feedback control with gravity feedforward.
//!
//! Per axis the controller is C_i(s, p̄, m) = κ_i (J s² + d_i s + k_i)/s with
//! J = (m + M/4) R0², which cancels the pendulum pair of the plant and leaves
//! the loop transfer κ_i η_i / (s (T_i s + 1)) — stable for any κ_i > 0 and
//! independent of the load mass. The controller runs at the outer rate; its
//! parameters are re-evaluated from (p̄, m) every step. The improper s²
//! numerator is realized with a first-order derivative filter and the whole
//! law is discretized with the bilinear transform.

use num_complex::Complex64;

use crate::allocation::{self, AbsolutePressures, DeltaRepresentation};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::plant::{JointParameters, MechanicalParams, ALPHA, BETA};

/// Outer-loop controller parameters.
#[derive(Debug, Clone)]
pub struct Controller {
    /// Loop gain κ per axis.
    pub kappa: [f64; 2],
    /// Outer sample time, s.
    pub ts: f64,
    /// Derivative filter time constant, s.
    pub derivative_filter_tc: f64,
    /// Integrator clamp, bar.
    pub antiwindup_limit: f64,
}

impl Controller {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            kappa: [cfg.controller.kappa_alpha, cfg.controller.kappa_beta],
            ts: cfg.simulation.ts_outer,
            derivative_filter_tc: cfg.simulation.ts_outer,
            antiwindup_limit: cfg.controller.antiwindup_limit,
        }
    }
}

/// Discrete controller memory.
#[derive(Debug, Clone, Copy, Default)]
pub struct ControllerState {
    pub integrator: [f64; 2],
    pub prev_error: [f64; 2],
    pub derivative: [f64; 2],
    /// Hold the integrator for one step after actuator saturation.
    pub freeze_integrator: bool,
}

impl ControllerState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One discrete step of the gain-scheduled law. `error` is the angle error
/// per axis in rad; returns the Δp correction per axis in bar.
pub fn controller_step(
    ctrl: &Controller,
    state: &mut ControllerState,
    error: [f64; 2],
    p_bar: f64,
    mass: f64,
    mech: &MechanicalParams,
    joint: &JointParameters,
) -> Result<[f64; 2]> {
    if !error.iter().all(|e| e.is_finite()) {
        state.reset();
        return Err(Error::ControllerFault(
            "non-finite tracking error; controller output zeroed".into(),
        ));
    }
    let inertia = mech.with_load(mass).inertia();
    let ts = ctrl.ts;
    let tf = ctrl.derivative_filter_tc;
    let mut out = [0.0; 2];
    for axis in [ALPHA, BETA] {
        let cf = joint.axes[axis].eval(p_bar);
        let kappa = ctrl.kappa[axis];
        let e = error[axis];
        let e_prev = state.prev_error[axis];

        // κ·k/s, trapezoidal.
        if !state.freeze_integrator {
            state.integrator[axis] += kappa * cf.k * ts * (e + e_prev) / 2.0;
            state.integrator[axis] =
                state.integrator[axis].clamp(-ctrl.antiwindup_limit, ctrl.antiwindup_limit);
        }

        // κ·J·s behind a first-order filter, Tustin.
        state.derivative[axis] = ((2.0 * tf - ts) * state.derivative[axis]
            + 2.0 * kappa * inertia * (e - e_prev))
            / (2.0 * tf + ts);

        out[axis] = state.integrator[axis] + kappa * cf.d * e + state.derivative[axis];
        state.prev_error[axis] = e;
    }
    Ok(out)
}

/// Gravity feedforward on the β axis: (M g R0/2 + m g R0) cos(β_SP) / η_β.
pub fn feedforward_beta(
    beta_sp: f64,
    p_bar: f64,
    mass: f64,
    mech: &MechanicalParams,
    joint: &JointParameters,
) -> f64 {
    let eta = joint.axes[BETA].eval(p_bar).eta;
    mech.with_load(mass).gravity_torque() * beta_sp.cos() / eta
}

/// Setpoints entering the cascade at one outer step.
#[derive(Debug, Clone, Copy)]
pub struct CascadeSetpoints {
    pub alpha: f64,
    pub beta: f64,
    pub p_bar: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CascadeOutput {
    pub pressures: AbsolutePressures,
    pub delta: DeltaRepresentation,
    pub saturated: bool,
}

/// One outer step of the cascaded architecture: serial ILC corrections are
/// added to the angle references, feedback and feedforward act in the Delta
/// Representation space, and p̄ passes through untouched so the controller
/// never alters the compliance.
#[allow(clippy::too_many_arguments)]
pub fn cascade_step(
    ctrl: &Controller,
    state: &mut ControllerState,
    sp: &CascadeSetpoints,
    measured: [f64; 2],
    ilc_correction: [f64; 2],
    use_gravity_ff: bool,
    mech: &MechanicalParams,
    joint: &JointParameters,
    actuator_max: f64,
) -> Result<CascadeOutput> {
    let error = [
        sp.alpha + ilc_correction[ALPHA] - measured[ALPHA],
        sp.beta + ilc_correction[BETA] - measured[BETA],
    ];
    let fb = controller_step(ctrl, state, error, sp.p_bar, sp.mass, mech, joint)?;
    let ff = if use_gravity_ff {
        feedforward_beta(sp.beta, sp.p_bar, sp.mass, mech, joint)
    } else {
        0.0
    };
    let delta = DeltaRepresentation::new(sp.p_bar, fb[ALPHA], fb[BETA] + ff);
    let raw = allocation::xi(&delta)?;
    let clamp = |p: f64| p.clamp(0.0, actuator_max);
    let pressures = AbsolutePressures::new(clamp(raw.p_a), clamp(raw.p_b), clamp(raw.p_c));
    let saturated = pressures != raw;
    state.freeze_integrator = saturated;
    Ok(CascadeOutput {
        pressures,
        delta,
        saturated,
    })
}

/// Roots of the design characteristic polynomial T s² + s + κη.
pub fn design_poles(t_lag: f64, kappa_eta: f64) -> [Complex64; 2] {
    quadratic_roots(t_lag, 1.0, kappa_eta)
}

/// Roots of a real quadratic a s² + b s + c.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = Complex64::new(b * b - 4.0 * a * c, 0.0).sqrt();
    [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
}

/// All closed-loop characteristic roots of one axis: the cancelled pendulum
/// pair (J s² + d s + k) together with the design pair (T s² + s + κη).
pub fn closed_loop_poles(
    kappa: f64,
    p_bar: f64,
    mass: f64,
    mech: &MechanicalParams,
    joint: &JointParameters,
    axis: usize,
) -> [Complex64; 4] {
    let cf = joint.axes[axis].eval(p_bar);
    let inertia = mech.with_load(mass).inertia();
    let pendulum = quadratic_roots(inertia, cf.d, cf.k);
    let design = design_poles(cf.t, kappa * cf.eta);
    [pendulum[0], pendulum[1], design[0], design[1]]
}

/// Closed-loop frequency response reference → angle of one axis, evaluated
/// without symbolic pole-zero cancellation: CL = C·G / (1 + C·G).
pub fn closed_loop_response(
    kappa: f64,
    p_bar: f64,
    mass: f64,
    mech: &MechanicalParams,
    joint: &JointParameters,
    axis: usize,
    omega: f64,
) -> Complex64 {
    let cf = joint.axes[axis].eval(p_bar);
    let inertia = mech.with_load(mass).inertia();
    let s = Complex64::new(0.0, omega);
    let pendulum = inertia * s * s + cf.d * s + cf.k;
    let g = cf.eta / ((cf.t * s + 1.0) * pendulum);
    let c = kappa * pendulum / s;
    let l = c * g;
    l / (1.0 + l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup() -> (Controller, MechanicalParams, JointParameters) {
        let cfg = Config::default();
        let ctrl = Controller::from_config(&cfg);
        let mech = MechanicalParams::new(
            cfg.mechanical.r0,
            cfg.mechanical.link_mass,
            0.0,
            cfg.mechanical.gravity,
        )
        .unwrap();
        let joint = JointParameters::from_config(&cfg);
        (ctrl, mech, joint)
    }

    #[test]
    fn zero_error_gives_zero_output() {
        let (ctrl, mech, joint) = setup();
        let mut st = ControllerState::default();
        let out = controller_step(&ctrl, &mut st, [0.0, 0.0], 1.1, 0.0, &mech, &joint).unwrap();
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn integrator_grows_by_kappa_k_e_ts_per_step() {
        let (ctrl, mech, joint) = setup();
        let mut st = ControllerState::default();
        let e = 0.01;
        let p_bar = 1.1;
        let k = joint.axes[ALPHA].eval(p_bar).k;
        controller_step(&ctrl, &mut st, [e, 0.0], p_bar, 0.0, &mech, &joint).unwrap();
        // Trapezoid: half a step from zero history.
        assert_abs_diff_eq!(
            st.integrator[ALPHA],
            ctrl.kappa[ALPHA] * k * e * ctrl.ts / 2.0,
            epsilon = 1e-15
        );
        for _ in 0..5 {
            let before = st.integrator[ALPHA];
            controller_step(&ctrl, &mut st, [e, 0.0], p_bar, 0.0, &mech, &joint).unwrap();
            assert_abs_diff_eq!(
                st.integrator[ALPHA] - before,
                ctrl.kappa[ALPHA] * k * e * ctrl.ts,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn non_finite_error_faults_and_zeroes() {
        let (ctrl, mech, joint) = setup();
        let mut st = ControllerState::default();
        controller_step(&ctrl, &mut st, [0.1, 0.0], 1.1, 0.0, &mech, &joint).unwrap();
        let err = controller_step(&ctrl, &mut st, [f64::NAN, 0.0], 1.1, 0.0, &mech, &joint);
        assert!(matches!(err, Err(Error::ControllerFault(_))));
        assert_eq!(st.integrator, [0.0, 0.0]);
    }

    #[test]
    fn design_pole_example() {
        let roots = design_poles(0.05, 1.0);
        let mut re: Vec<f64> = roots.iter().map(|r| r.re).collect();
        re.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(re[0], -1.0557, epsilon = 5e-4);
        assert_abs_diff_eq!(re[1], -18.9443, epsilon = 5e-4);
        assert!(roots.iter().all(|r| r.im == 0.0));
    }

    #[test]
    fn stability_grid_all_left_half_plane() {
        let (_, mech, joint) = setup();
        for &m in &[0.0, 0.1, 0.2] {
            for &p_bar in &[1.0, 1.1, 1.2] {
                for &kappa_eta in &[0.5, 1.0, 2.0, 5.0, 10.0] {
                    for axis in [ALPHA, BETA] {
                        let eta = joint.axes[axis].eval(p_bar).eta;
                        let kappa = kappa_eta / eta;
                        for pole in closed_loop_poles(kappa, p_bar, m, &mech, &joint, axis) {
                            assert!(
                                pole.re < 0.0,
                                "pole {pole} unstable at m={m}, p̄={p_bar}, κη={kappa_eta}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn closed_loop_independent_of_mass() {
        let (ctrl, mech, joint) = setup();
        let omegas: Vec<f64> = (0..60).map(|i| 0.1 * 1.15f64.powi(i)).collect();
        for axis in [ALPHA, BETA] {
            for &w in &omegas {
                let g0 = closed_loop_response(ctrl.kappa[axis], 1.1, 0.0, &mech, &joint, axis, w);
                let g1 = closed_loop_response(ctrl.kappa[axis], 1.1, 0.2, &mech, &joint, axis, w);
                assert!(
                    (g0 - g1).norm() < 1e-9,
                    "CL response differs with mass at ω={w}: {g0} vs {g1}"
                );
            }
        }
    }

    #[test]
    fn feedforward_examples() {
        let (_, mech, _) = setup();
        // Unit η so the hand value is exact.
        let mut joint = JointParameters::from_config(&Config::default());
        joint.axes[BETA].eta = crate::poly::Polynomial::constant(1.0);

        assert_abs_diff_eq!(
            feedforward_beta(90f64.to_radians(), 1.1, 0.0, &mech, &joint),
            0.0,
            epsilon = 1e-15
        );
        let ff = feedforward_beta(0.0, 1.1, 0.0, &mech, &joint);
        assert_abs_diff_eq!(ff, 0.3413, epsilon = 5e-5);

        // Doubling (M/2 + m) doubles the output: m = 0 → m = M/2.
        let doubled = feedforward_beta(0.0, 1.1, mech.link_mass / 2.0, &mech, &joint);
        assert_abs_diff_eq!(doubled / ff, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cascade_zero_error_passes_pbar_through() {
        let (ctrl, mech, joint) = setup();
        let mut st = ControllerState::default();
        let sp = CascadeSetpoints {
            alpha: 0.0,
            beta: 90f64.to_radians(),
            p_bar: 1.07,
            mass: 0.0,
        };
        let out = cascade_step(
            &ctrl,
            &mut st,
            &sp,
            [sp.alpha, sp.beta],
            [0.0, 0.0],
            true,
            &mech,
            &joint,
            3.0,
        )
        .unwrap();
        // cos(90°) kills the feedforward; zero error kills the feedback.
        assert_abs_diff_eq!(out.pressures.p_a, 1.07, epsilon = 1e-12);
        assert_abs_diff_eq!(out.pressures.p_b, 1.07, epsilon = 1e-12);
        assert_abs_diff_eq!(out.pressures.p_c, 1.07, epsilon = 1e-12);
        assert!(!out.saturated);
    }

    #[test]
    fn cascade_floor_is_pbar() {
        let (ctrl, mech, joint) = setup();
        let mut st = ControllerState::default();
        for i in 0..50 {
            let sp = CascadeSetpoints {
                alpha: 0.3 * ((i as f64) * 0.7).sin(),
                beta: 0.2 * ((i as f64) * 1.3).cos(),
                p_bar: 1.0 + 0.2 * ((i as f64) * 0.31).sin().abs(),
                mass: 0.1,
            };
            let out = cascade_step(
                &ctrl,
                &mut st,
                &sp,
                [0.0, 0.0],
                [0.0, 0.0],
                true,
                &mech,
                &joint,
                3.0,
            )
            .unwrap();
            if !out.saturated {
                assert_eq!(out.pressures.min(), sp.p_bar);
            }
        }
    }
}
