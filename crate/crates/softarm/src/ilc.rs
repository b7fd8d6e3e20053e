//! Norm-optimal iterative learning control, serial architecture.
//!
//! One iteration rolls the whole cascade out over a finite horizon; the
//! correction signal u (a reference correction, interleaved per sample as
//! [α(0), β(0), …, α(N−1), β(N−1)]) is then updated in closed form,
//!
//!   u⁺ = Q u + L e,
//!   Q = M⁻¹ (Pᵀ W_e P + W_Δu),   L = M⁻¹ Pᵀ W_e,
//!   M = Pᵀ W_e P + W_Δu + Dᵀ W_u̇ D,
//!
//! which minimizes the quadratic cost in the next-iteration error, the
//! iteration-to-iteration change of u, and the rate of u. P is the lifted
//! matrix of the nominal closed loop κη/(T s² + s + κη) per axis (two states
//! each), ZOH-discretized at the outer rate with the p̄-dependence frozen at
//! a nominal level. Q is computed as I − M⁻¹(Dᵀ W_u̇ D), which coincides with
//! the printed form and is exact when W_u̇ = 0.

use nalgebra::{DMatrix, DVector};

use crate::config::IlcSection;
use crate::error::{Error, Result};
use crate::plant::{JointParameters, ALPHA, BETA};
use crate::sim::{Harness, Rollout};
use crate::trajectory::Plan;

/// Continuous-time nominal closed-loop model of both axes: block-diagonal
/// (A, B, C) with 2 states per axis.
pub fn nominal_closed_loop(
    kappa: [f64; 2],
    joint: &JointParameters,
    p_bar: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(4, 4);
    let mut b = DMatrix::zeros(4, 2);
    let mut c = DMatrix::zeros(2, 4);
    for axis in [ALPHA, BETA] {
        let cf = joint.axes[axis].eval(p_bar);
        let ke = kappa[axis] * cf.eta;
        let i0 = 2 * axis;
        a[(i0, i0 + 1)] = 1.0;
        a[(i0 + 1, i0)] = -ke / cf.t;
        a[(i0 + 1, i0 + 1)] = -1.0 / cf.t;
        b[(i0 + 1, axis)] = ke / cf.t;
        c[(axis, i0)] = 1.0;
    }
    (a, b, c)
}

/// Exact zero-order-hold discretization via the augmented matrix exponential.
pub fn zoh_discretize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || ts <= 0.0 {
        return Err(Error::invalid("inconsistent state-space dimensions"));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = aug.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalConditioning {
            condition: f64::INFINITY,
        });
    }
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Lifted closed-loop dynamics over a horizon of N samples.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
    pub ts: f64,
    /// 2N × 2N lower block-triangular, block-Toeplitz matrix.
    pub p: DMatrix<f64>,
    /// False when the discrete A is not Schur stable (construction is still
    /// valid; downstream callers may warn).
    pub schur_stable: bool,
}

impl LiftedSystem {
    /// Build from the continuous nominal model, ZOH-discretized at `ts`.
    pub fn from_continuous(
        a_c: &DMatrix<f64>,
        b_c: &DMatrix<f64>,
        c: &DMatrix<f64>,
        n: usize,
        ts: f64,
    ) -> Result<Self> {
        let (a_d, b_d) = zoh_discretize(a_c, b_c, ts)?;
        Self::from_discrete(a_d, b_d, c.clone(), n, ts)
    }

    pub fn from_discrete(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        n: usize,
        ts: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if c.nrows() != 2 || b.ncols() != 2 {
            return Err(Error::invalid("lifted system expects 2 inputs and 2 outputs"));
        }
        let schur_stable = a.complex_eigenvalues().iter().all(|l| l.norm() < 1.0);
        let p = build_lifted_matrix(&a, &b, &c, n);
        Ok(Self {
            a,
            b,
            c,
            n,
            ts,
            p,
            schur_stable,
        })
    }
}

/// Assemble the lifted matrix with blocks C A^{r−c} B.
pub fn build_lifted_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    n: usize,
) -> DMatrix<f64> {
    let ny = c.nrows();
    let nu = b.ncols();
    let mut blocks = Vec::with_capacity(n);
    let mut x = b.clone();
    blocks.push(c * &x);
    for _ in 1..n {
        x = a * &x;
        blocks.push(c * &x);
    }
    let mut p = DMatrix::zeros(ny * n, nu * n);
    for r in 0..n {
        for col in 0..=r {
            p.view_mut((ny * r, nu * col), (ny, nu))
                .copy_from(&blocks[r - col]);
        }
    }
    p
}

/// Discrete first-order derivative operator: (1/Ts)·D̃ ⊗ I₂ with +1 on the
/// superdiagonal, −1 on the diagonal, and an all-zero final row.
pub fn build_derivative_operator(n: usize, ts: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    let inv = 1.0 / ts;
    for r in 0..n.saturating_sub(1) {
        for axis in 0..2 {
            d[(2 * r + axis, 2 * r + axis)] = -inv;
            d[(2 * r + axis, 2 * (r + 1) + axis)] = inv;
        }
    }
    d
}

/// Weighting matrices of the quadratic cost.
#[derive(Debug, Clone)]
pub struct IlcWeights {
    pub w_e: DMatrix<f64>,
    pub w_du: DMatrix<f64>,
    pub w_udot: DMatrix<f64>,
}

impl IlcWeights {
    pub fn scaled_identity(two_n: usize, w_e: f64, w_du: f64, w_udot: f64) -> Result<Self> {
        if w_du <= 0.0 || w_e < 0.0 || w_udot < 0.0 {
            return Err(Error::invalid("weights need W_Δu ≻ 0, W_e ⪰ 0, W_u̇ ⪰ 0"));
        }
        let eye = DMatrix::identity(two_n, two_n);
        Ok(Self {
            w_e: &eye * w_e,
            w_du: &eye * w_du,
            w_udot: eye * w_udot,
        })
    }

    pub fn validate(&self, two_n: usize) -> Result<()> {
        for (name, m) in [
            ("W_e", &self.w_e),
            ("W_du", &self.w_du),
            ("W_udot", &self.w_udot),
        ] {
            if m.nrows() != two_n || m.ncols() != two_n {
                return Err(Error::DimensionMismatch {
                    expected: two_n,
                    got: m.nrows(),
                });
            }
            if (m - m.transpose()).amax() > 1e-10 {
                return Err(Error::invalid(format!("{name} must be symmetric")));
            }
        }
        Ok(())
    }
}

/// The closed-form update gains.
#[derive(Debug, Clone)]
pub struct IlcGains {
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// Closed-form gain computation through a symmetric positive-definite
/// factorization of M = PᵀW_eP + W_Δu + DᵀW_u̇D. Q is formed as
/// I − M⁻¹(DᵀW_u̇D), so W_u̇ = 0 yields the identity exactly.
pub fn compute_gains(p: &DMatrix<f64>, d: &DMatrix<f64>, w: &IlcWeights) -> Result<IlcGains> {
    let two_n = p.nrows();
    w.validate(two_n)?;
    if d.nrows() != two_n || d.ncols() != two_n {
        return Err(Error::DimensionMismatch {
            expected: two_n,
            got: d.nrows(),
        });
    }
    let pt_we = p.transpose() * &w.w_e;
    let rate = d.transpose() * &w.w_udot * d;
    let m = &pt_we * p + &w.w_du + &rate;
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => {
            let eig = m.symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.iter().cloned().fold(f64::MAX, f64::min);
            return Err(Error::NumericalConditioning {
                condition: if min.abs() > 0.0 {
                    max / min
                } else {
                    f64::INFINITY
                },
            });
        }
    };
    let q = DMatrix::identity(two_n, two_n) - chol.solve(&rate);
    let l = chol.solve(&pt_we);
    Ok(IlcGains { q, l })
}

/// Spectral radius of the u-iteration map Q − L·P = M⁻¹ W_Δu, which governs
/// convergence of the correction signal on the nominal model.
pub fn u_iteration_spectral_radius(
    p: &DMatrix<f64>,
    d: &DMatrix<f64>,
    w: &IlcWeights,
) -> Result<f64> {
    let m = p.transpose() * &w.w_e * p + &w.w_du + d.transpose() * &w.w_udot * d;
    let chol = m.cholesky().ok_or(Error::NumericalConditioning {
        condition: f64::NAN,
    })?;
    let iter_map = chol.solve(&w.w_du);
    Ok(iter_map
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// u⁺ = Q u + L e.
pub fn ilc_update(gains: &IlcGains, u: &DVector<f64>, e: &DVector<f64>) -> Result<DVector<f64>> {
    let n = gains.q.nrows();
    if u.len() != n || e.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if u.len() != n { u.len() } else { e.len() },
        });
    }
    Ok(&gains.q * u + &gains.l * e)
}

/// Per-axis RMS and maximum of an interleaved error vector.
pub fn error_metrics(e: &DVector<f64>) -> ([f64; 2], [f64; 2]) {
    let n = e.len() / 2;
    let mut acc = [0.0f64; 2];
    let mut max = [0.0f64; 2];
    for k in 0..n {
        for axis in [ALPHA, BETA] {
            let v = e[2 * k + axis];
            acc[axis] += v * v;
            max[axis] = max[axis].max(v.abs());
        }
    }
    let n = n.max(1) as f64;
    ([(acc[0] / n).sqrt(), (acc[1] / n).sqrt()], max)
}

/// One ILC iteration record.
#[derive(Debug, Clone)]
pub struct IlcIterate {
    pub iteration: usize,
    pub u: DVector<f64>,
    pub e: DVector<f64>,
    pub rms: [f64; 2],
    pub max: [f64; 2],
    pub saturated_steps: usize,
}

impl IlcIterate {
    pub fn total_rms(&self) -> f64 {
        ((self.rms[0] * self.rms[0] + self.rms[1] * self.rms[1]) / 2.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct IlcHistory {
    pub iterates: Vec<IlcIterate>,
    /// Iteration at which the plateau stop triggered, if it did.
    pub plateau_stop: Option<usize>,
    /// True when a rollout diverged and the run was aborted.
    pub diverged: bool,
    /// Rollout of the final iterate (for traces/plots).
    pub final_rollout: Option<Rollout>,
}

impl IlcHistory {
    pub fn first(&self) -> &IlcIterate {
        &self.iterates[0]
    }

    pub fn last(&self) -> &IlcIterate {
        self.iterates.last().expect("non-empty history")
    }
}

/// Run configuration for the iteration loop.
#[derive(Debug, Clone)]
pub struct IlcRunConfig {
    pub w_e: f64,
    pub w_du: f64,
    pub w_udot: f64,
    pub nominal_p_bar: f64,
    pub iterations: usize,
    pub plateau_stop: bool,
    pub plateau_tol: f64,
    pub plateau_window: usize,
}

impl From<&IlcSection> for IlcRunConfig {
    fn from(s: &IlcSection) -> Self {
        Self {
            w_e: s.w_e,
            w_du: s.w_du,
            w_udot: s.w_udot,
            nominal_p_bar: s.nominal_p_bar,
            iterations: s.iterations,
            plateau_stop: s.plateau_stop,
            plateau_tol: s.plateau_tol,
            plateau_window: s.plateau_window,
        }
    }
}

/// Serial-architecture ILC: roll out the full cascade, measure, update.
/// Iteration j uses the correction u^j; u^0 is `initial_u` (zero when absent,
/// a warm start otherwise). The nominal model behind P is built at the
/// configured p̄ regardless of the plan's p̄ profile.
pub fn run_ilc(
    harness: &Harness,
    plan: &Plan,
    rc: &IlcRunConfig,
    initial_u: Option<DVector<f64>>,
    seed: u64,
) -> Result<IlcHistory> {
    let n = plan.len();
    if n == 0 {
        return Err(Error::invalid("empty plan"));
    }
    let (a, b, c) = nominal_closed_loop(harness.ctrl.kappa, &harness.plant.joint, rc.nominal_p_bar);
    let lifted = LiftedSystem::from_continuous(&a, &b, &c, n, plan.ts)?;
    let d = build_derivative_operator(n, plan.ts);
    let w = IlcWeights::scaled_identity(2 * n, rc.w_e, rc.w_du, rc.w_udot)?;
    let gains = compute_gains(&lifted.p, &d, &w)?;

    let mut u = match initial_u {
        Some(u0) => {
            if u0.len() != 2 * n {
                return Err(Error::DimensionMismatch {
                    expected: 2 * n,
                    got: u0.len(),
                });
            }
            u0
        }
        None => DVector::zeros(2 * n),
    };

    let mut history = IlcHistory {
        iterates: Vec::with_capacity(rc.iterations),
        plateau_stop: None,
        diverged: false,
        final_rollout: None,
    };
    for j in 0..rc.iterations {
        let iter_seed = seed.wrapping_add((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let rollout = match harness.rollout(plan, Some(u.as_slice()), iter_seed) {
            Ok(r) => r,
            Err(Error::SimulationDiverged { .. }) => {
                history.diverged = true;
                return Ok(history);
            }
            Err(e) => return Err(e),
        };
        let e = DVector::from_vec(rollout.interleaved_error());
        let (rms, max) = error_metrics(&e);
        history.iterates.push(IlcIterate {
            iteration: j,
            u: u.clone(),
            e: e.clone(),
            rms,
            max,
            saturated_steps: rollout.saturated_steps,
        });
        history.final_rollout = Some(rollout);

        if rc.plateau_stop && history.iterates.len() > rc.plateau_window {
            let now = history.last().total_rms();
            let before =
                history.iterates[history.iterates.len() - 1 - rc.plateau_window].total_rms();
            if before > 0.0 && (before - now) / before < rc.plateau_tol {
                history.plateau_stop = Some(j);
                break;
            }
        }
        u = ilc_update(&gains, &u, &e)?;
    }
    Ok(history)
}

/// Truncate per-phase correction signals to their phase windows and
/// concatenate them in time order, preserving the interleaving convention.
pub fn warm_start_concatenate(
    signals: &[DVector<f64>],
    phase_lens: &[usize],
) -> Result<DVector<f64>> {
    if signals.len() != phase_lens.len() {
        return Err(Error::DimensionMismatch {
            expected: phase_lens.len(),
            got: signals.len(),
        });
    }
    let total: usize = phase_lens.iter().sum();
    let mut out = DVector::zeros(2 * total);
    let mut offset = 0;
    for (sig, &len) in signals.iter().zip(phase_lens.iter()) {
        if sig.len() < 2 * len {
            return Err(Error::DimensionMismatch {
                expected: 2 * len,
                got: sig.len(),
            });
        }
        out.rows_mut(2 * offset, 2 * len)
            .copy_from(&sig.rows(0, 2 * len));
        offset += len;
    }
    Ok(out)
}

/// Write per-iteration metrics: iteration, RMS_α, RMS_β, max_α, max_β.
pub fn write_history_csv(path: &std::path::Path, seed: u64, history: &IlcHistory) -> Result<()> {
    let mut w = crate::sim::csv_writer_with_seed(path, seed)?;
    w.write_record(["iteration", "rms_alpha", "rms_beta", "max_alpha", "max_beta"])?;
    for it in &history.iterates {
        w.write_record([
            it.iteration.to_string(),
            it.rms[0].to_string(),
            it.rms[1].to_string(),
            it.max[0].to_string(),
            it.max[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Correction signal file: sample, u_alpha, u_beta.
pub fn write_correction_csv(path: &std::path::Path, seed: u64, u: &DVector<f64>) -> Result<()> {
    let mut w = crate::sim::csv_writer_with_seed(path, seed)?;
    w.write_record(["sample", "u_alpha", "u_beta"])?;
    for k in 0..u.len() / 2 {
        w.write_record([
            k.to_string(),
            u[2 * k].to_string(),
            u[2 * k + 1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_correction_csv(path: &std::path::Path) -> Result<DVector<f64>> {
    let mut reader = crate::sim::csv_reader(path)?;
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::invalid("correction CSV needs sample,u_alpha,u_beta"));
        }
        let ua: f64 = rec[1].parse().map_err(|_| Error::invalid("bad u_alpha"))?;
        let ub: f64 = rec[2].parse().map_err(|_| Error::invalid("bad u_beta"))?;
        values.push(ua);
        values.push(ub);
    }
    if values.is_empty() {
        return Err(Error::invalid("empty correction file"));
    }
    Ok(DVector::from_vec(values))
}
