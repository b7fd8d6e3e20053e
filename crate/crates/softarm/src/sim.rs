//! Closed-loop rollout engine: outer-rate cascade (feedback + feedforward +
//! serial ILC correction) over the inner-rate plant, with the plan's mass
//! schedule, grip/eject events and seeded measurement noise.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation;
use crate::config::Config;
use crate::control::{self, Controller, ControllerState};
use crate::error::{Error, Result};
use crate::plant::{Plant, PlantState, ALPHA, BETA};
use crate::trajectory::Plan;

/// Rollout harness: everything fixed across iterations of an experiment.
#[derive(Debug, Clone)]
pub struct Harness {
    pub plant: Plant,
    pub ctrl: Controller,
    /// Schedule the controller with the plan's true mass, or with a fixed one.
    pub schedule_true_mass: bool,
    pub user_mass: f64,
    /// Inner integration step, s.
    pub dt: f64,
    /// Closed-loop settling time before the task starts, s.
    pub settle_duration: f64,
    /// Gravity feedforward; defaults to the plant's gravity switch.
    pub use_gravity_ff: bool,
}

impl Harness {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let plant = Plant::from_config(cfg, 0.0)?;
        let use_gravity_ff = plant.dist.gravity_nonlinearity;
        let h = Self {
            plant,
            ctrl: Controller::from_config(cfg),
            schedule_true_mass: cfg.controller.schedule_true_mass,
            user_mass: cfg.controller.user_mass,
            dt: cfg.simulation.dt,
            settle_duration: 1.5,
            use_gravity_ff,
        };
        h.inner_steps()?;
        Ok(h)
    }

    fn inner_steps(&self) -> Result<usize> {
        let ratio = self.ctrl.ts / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::Config(format!(
                "outer sample time {} must be an integer multiple of dt {}",
                self.ctrl.ts, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Run one closed-loop rollout of `plan`. `ilc_u` is the serial reference
    /// correction interleaved as [α(0), β(0), …]; it must have length 2N.
    pub fn rollout(&self, plan: &Plan, ilc_u: Option<&[f64]>, seed: u64) -> Result<Rollout> {
        let n = plan.len();
        if n == 0 {
            return Err(Error::invalid("empty plan"));
        }
        if let Some(u) = ilc_u {
            if u.len() != 2 * n {
                return Err(Error::DimensionMismatch {
                    expected: 2 * n,
                    got: u.len(),
                });
            }
        }
        let inner = self.inner_steps()?;
        let mut plant = self.plant.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctrl_state = ControllerState::default();

        // Settle under feedback at the initial setpoints so the task starts
        // from the operating point, as a real trial would.
        let sp0 = plan.setpoints_at(0);
        plant.mech.load_mass = sp0.mass;
        let mut state = PlantState::at_rest(sp0.p_bar);
        let settle_steps = (self.settle_duration / self.ctrl.ts).round() as usize;
        let mut t = -(settle_steps as f64) * self.ctrl.ts;
        for _ in 0..settle_steps {
            let y = plant.measure(&state, &mut rng);
            let out = control::cascade_step(
                &self.ctrl,
                &mut ctrl_state,
                &sp0,
                y,
                [0.0; 2],
                self.use_gravity_ff,
                &plant.mech,
                &plant.joint,
                plant.pressure.actuator_max,
            )?;
            for _ in 0..inner {
                state = plant.step_with(&state, t, self.dt, &|_| out.delta, [0.0; 2])?;
                t += self.dt;
            }
        }

        let eject_samples = (plan.eject_window / self.ctrl.ts).round() as usize;
        let eject_torque = if plan.eject_window > 0.0 {
            plant.dist.deposit_impulse / plan.eject_window
        } else {
            0.0
        };

        let mut out = Rollout {
            y: Vec::with_capacity(n),
            error: Vec::with_capacity(n),
            cmd: Vec::with_capacity(n),
            saturated_steps: 0,
            trace: Vec::with_capacity(n + 1),
        };
        let mut y_now = plant.measure(&state, &mut rng);
        t = 0.0;
        for k in 0..n {
            let mut sp = plan.setpoints_at(k);
            plant.mech.load_mass = sp.mass;
            if !self.schedule_true_mass {
                sp.mass = self.user_mass;
            }
            let corr = match ilc_u {
                Some(u) => [u[2 * k], u[2 * k + 1]],
                None => [0.0; 2],
            };
            let step_out = control::cascade_step(
                &self.ctrl,
                &mut ctrl_state,
                &sp,
                y_now,
                corr,
                self.use_gravity_ff,
                &plant.mech,
                &plant.joint,
                plant.pressure.actuator_max,
            )?;
            if step_out.saturated {
                out.saturated_steps += 1;
            }
            out.cmd.push(step_out);
            out.trace.push(TraceRow::from_state(&plant, t, &state));

            let ext = match plan.eject_index {
                Some(e) if k >= e && k < e + eject_samples => [0.0, eject_torque],
                _ => [0.0; 2],
            };
            for _ in 0..inner {
                state = plant.step_with(&state, t, self.dt, &|_| step_out.delta, ext)?;
                t += self.dt;
            }
            y_now = plant.measure(&state, &mut rng);
            out.y.push(y_now);
            out.error.push([
                plan.alpha_sp[k] - y_now[ALPHA],
                plan.beta_sp[k] - y_now[BETA],
            ]);
        }
        out.trace.push(TraceRow::from_state(&plant, t, &state));
        Ok(out)
    }
}

/// Result of one closed-loop rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Measurements at t_1 … t_N (sample k sees the effect of step k).
    pub y: Vec<[f64; 2]>,
    /// Tracking error r_k − y_{k+1} per axis.
    pub error: Vec<[f64; 2]>,
    /// Cascade output at each outer step.
    pub cmd: Vec<control::CascadeOutput>,
    pub saturated_steps: usize,
    /// State snapshots at the outer instants t_0 … t_N.
    pub trace: Vec<TraceRow>,
}

impl Rollout {
    pub fn rms_error(&self) -> [f64; 2] {
        let n = self.error.len().max(1) as f64;
        let mut acc = [0.0; 2];
        for e in &self.error {
            acc[ALPHA] += e[ALPHA] * e[ALPHA];
            acc[BETA] += e[BETA] * e[BETA];
        }
        [(acc[ALPHA] / n).sqrt(), (acc[BETA] / n).sqrt()]
    }

    pub fn max_error(&self) -> [f64; 2] {
        let mut m = [0.0f64; 2];
        for e in &self.error {
            m[ALPHA] = m[ALPHA].max(e[ALPHA].abs());
            m[BETA] = m[BETA].max(e[BETA].abs());
        }
        m
    }

    /// Largest per-axis error within the sample window [start, end).
    pub fn max_error_in(&self, start: usize, end: usize) -> [f64; 2] {
        let mut m = [0.0f64; 2];
        for e in &self.error[start.min(self.error.len())..end.min(self.error.len())] {
            m[ALPHA] = m[ALPHA].max(e[ALPHA].abs());
            m[BETA] = m[BETA].max(e[BETA].abs());
        }
        m
    }

    /// Error interleaved as [e_α(0), e_β(0), …, e_α(N−1), e_β(N−1)].
    pub fn interleaved_error(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.error.len());
        for e in &self.error {
            v.push(e[ALPHA]);
            v.push(e[BETA]);
        }
        v
    }
}

/// One line of the standard trace schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dp_alpha: f64,
    pub dp_beta: f64,
    pub p_bar: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_c: f64,
    pub radius: f64,
    pub mass: f64,
}

impl TraceRow {
    pub fn from_state(plant: &Plant, time: f64, state: &PlantState) -> Self {
        let pressures = state.pressures();
        let delta = allocation::xi_inverse(&pressures).expect("finite state");
        let (radius, _) = plant.radius_from_pbar(delta.p_bar);
        Self {
            time,
            alpha: state.angle[ALPHA],
            beta: state.angle[BETA],
            dp_alpha: delta.dp_alpha,
            dp_beta: delta.dp_beta,
            p_bar: delta.p_bar,
            p_a: pressures.p_a,
            p_b: pressures.p_b,
            p_c: pressures.p_c,
            radius,
            mass: plant.mech.load_mass,
        }
    }
}

/// Open-loop response of the plant to a Delta Representation input signal,
/// sampled at the integration rate.
pub fn open_loop_trace(
    plant: &Plant,
    cmd: &dyn Fn(f64) -> crate::allocation::DeltaRepresentation,
    duration: f64,
    dt: f64,
) -> Result<Vec<(f64, [f64; 2])>> {
    let mut state = PlantState::at_rest(cmd(0.0).p_bar);
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps);
    let mut t = 0.0;
    for _ in 0..steps {
        state = plant.step_with(&state, t, dt, cmd, [0.0; 2])?;
        t += dt;
        out.push((t, state.angle));
    }
    Ok(out)
}

/// Zero-lag normalized cross-correlation of two equally long signals.
pub fn normalized_cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

/// CSV writer whose first line records the seed, for reproducibility audits.
/// Readers made by [`csv_reader`] skip `#` comment lines.
pub fn csv_writer_with_seed(path: &Path, seed: u64) -> Result<csv::Writer<File>> {
    let mut file = File::create(path)?;
    writeln!(file, "# seed={seed}")?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?)
}

/// Write a rollout trace in the standard schema.
pub fn write_trace_csv(path: &Path, seed: u64, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv_writer_with_seed(path, seed)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Export a plan in the trace schema (angles are setpoints, pressures are the
/// rest pressures of the commanded p̄). Events are recoverable from the mass
/// column, which changes only at the grip and eject markers.
pub fn write_plan_csv(path: &Path, seed: u64, plant: &Plant, plan: &Plan) -> Result<()> {
    let mut w = csv_writer_with_seed(path, seed)?;
    for k in 0..plan.len() {
        let p_bar = plan.p_bar_sp[k];
        let (radius, _) = plant.radius_from_pbar(p_bar);
        w.serialize(TraceRow {
            time: k as f64 * plan.ts,
            alpha: plan.alpha_sp[k],
            beta: plan.beta_sp[k],
            dp_alpha: 0.0,
            dp_beta: 0.0,
            p_bar,
            p_a: p_bar,
            p_b: p_bar,
            p_c: p_bar,
            radius,
            mass: plan.mass[k],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Import an externally authored plan from the trace schema. Grip and eject
/// markers are recovered from the mass transitions.
pub fn read_plan_csv(path: &Path, eject_window: f64) -> Result<Plan> {
    let mut reader = csv_reader(path)?;
    let mut rows: Vec<TraceRow> = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    if rows.len() < 2 {
        return Err(Error::invalid("plan CSV needs at least two rows"));
    }
    let ts = rows[1].time - rows[0].time;
    if ts <= 0.0 {
        return Err(Error::invalid("plan CSV time column must increase"));
    }
    let mut plan = Plan {
        ts,
        alpha_sp: rows.iter().map(|r| r.alpha).collect(),
        beta_sp: rows.iter().map(|r| r.beta).collect(),
        p_bar_sp: rows.iter().map(|r| r.p_bar).collect(),
        mass: rows.iter().map(|r| r.mass).collect(),
        grip_index: None,
        eject_index: None,
        eject_window,
    };
    for k in 1..plan.mass.len() {
        if plan.mass[k] > plan.mass[k - 1] && plan.grip_index.is_none() {
            plan.grip_index = Some(k);
        }
        if plan.mass[k] < plan.mass[k - 1] && plan.eject_index.is_none() {
            plan.eject_index = Some(k);
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DisturbanceSection;
    use crate::trajectory;

    fn quiet_config() -> Config {
        let mut cfg = Config::default();
        cfg.disturbance = DisturbanceSection::quiet();
        cfg
    }

    #[test]
    fn constant_reference_reaches_steady_state_accuracy() {
        let cfg = quiet_config();
        let harness = Harness::from_config(&cfg).unwrap();
        // 5 s constant reference after the settle window.
        let n = (5.0 / cfg.simulation.ts_outer) as usize;
        let plan = Plan {
            ts: cfg.simulation.ts_outer,
            alpha_sp: vec![20f64.to_radians(); n],
            beta_sp: vec![-10f64.to_radians(); n],
            p_bar_sp: vec![1.1; n],
            mass: vec![0.0; n],
            grip_index: None,
            eject_index: None,
            eject_window: 0.0,
        };
        let roll = harness.rollout(&plan, None, 1).unwrap();
        let tail = &roll.error[n - 10..];
        for e in tail {
            assert!(e[ALPHA].abs() < 0.05f64.to_radians(), "α error {}", e[ALPHA]);
            assert!(e[BETA].abs() < 0.05f64.to_radians(), "β error {}", e[BETA]);
        }
    }

    #[test]
    fn step_response_has_no_steady_state_error_with_gravity() {
        // Gravity nonlinearity on, feedforward on: integral action still
        // removes the residual.
        let mut cfg = Config::default();
        cfg.disturbance = DisturbanceSection::quiet();
        cfg.disturbance.gravity_nonlinearity = true;
        let harness = Harness::from_config(&cfg).unwrap();
        let n = (6.0 / cfg.simulation.ts_outer) as usize;
        let mut alpha = vec![0.0; n];
        for (k, a) in alpha.iter_mut().enumerate() {
            let t = k as f64 * cfg.simulation.ts_outer;
            *a = trajectory::quintic(0.0, 25f64.to_radians(), 0.4, t - 1.0);
        }
        let plan = Plan {
            ts: cfg.simulation.ts_outer,
            alpha_sp: alpha,
            beta_sp: vec![5f64.to_radians(); n],
            p_bar_sp: vec![1.1; n],
            mass: vec![0.2; n],
            grip_index: None,
            eject_index: None,
            eject_window: 0.0,
        };
        let roll = harness.rollout(&plan, None, 3).unwrap();
        for e in &roll.error[n - 10..] {
            assert!(e[ALPHA].abs() < 0.05f64.to_radians());
            assert!(e[BETA].abs() < 0.05f64.to_radians());
        }
    }

    #[test]
    fn rollouts_are_bit_deterministic() {
        let cfg = Config::default();
        let harness = Harness::from_config(&cfg).unwrap();
        let plan = trajectory::aggressive_plan(&cfg, false).unwrap();
        let a = harness.rollout(&plan, None, 42).unwrap();
        let b = harness.rollout(&plan, None, 42).unwrap();
        assert_eq!(a.y, b.y);
        let c = harness.rollout(&plan, None, 43).unwrap();
        assert_ne!(a.y, c.y, "different seeds must differ through noise");
    }

    #[test]
    fn compliance_passthrough_pbar_never_altered_by_feedback() {
        let cfg = quiet_config();
        let harness = Harness::from_config(&cfg).unwrap();
        let plan = trajectory::build_pick_place_plan(&cfg).unwrap();
        let roll = harness.rollout(&plan, None, 5).unwrap();
        // The commanded pressure floor equals the p̄ setpoint bit-exactly at
        // every unsaturated outer step.
        for k in 0..plan.len() {
            if !roll.cmd[k].saturated {
                assert_eq!(
                    roll.cmd[k].pressures.min(),
                    plan.p_bar_sp[k],
                    "commanded floor differs from p̄ setpoint at sample {k}"
                );
            }
        }
        // And the lagged plant pressures settle onto it during dwells.
        let last = roll.trace.last().unwrap();
        assert!(
            (last.p_bar - plan.p_bar_sp[plan.len() - 1]).abs() < 2e-3,
            "settled p̄ {} vs setpoint {}",
            last.p_bar,
            plan.p_bar_sp[plan.len() - 1]
        );
    }

    #[test]
    fn cross_correlation_basics() {
        let a: Vec<f64> = (0..100).map(|i| (0.1 * i as f64).sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((normalized_cross_correlation(&a, &a) - 1.0).abs() < 1e-12);
        assert!((normalized_cross_correlation(&a, &b) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((normalized_cross_correlation(&a, &c) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_csv_round_trip() {
        let cfg = Config::default();
        let plant = Plant::from_config(&cfg, 0.0).unwrap();
        let plan = trajectory::build_pick_place_plan(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        write_plan_csv(&path, 42, &plant, &plan).unwrap();
        let back = read_plan_csv(&path, cfg.trajectory.eject_window).unwrap();
        assert_eq!(back.len(), plan.len());
        assert_eq!(back.grip_index, plan.grip_index);
        assert_eq!(back.eject_index, plan.eject_index);
        for k in 0..plan.len() {
            assert!((back.alpha_sp[k] - plan.alpha_sp[k]).abs() < 1e-12);
            assert!((back.p_bar_sp[k] - plan.p_bar_sp[k]).abs() < 1e-12);
            assert_eq!(back.mass[k], plan.mass[k]);
        }
    }
}
