//! Frequency-domain identification pipeline.
//!
//! Sine sweeps in the Delta Representation space excite one axis at a time;
//! the fundamental of the response is extracted per period by sinusoidal
//! correlation, averaged over the retained periods, and the per-frequency
//! spread doubles as an uncertainty estimate. A rational transfer function is
//! then fitted by iteratively reweighted complex least squares
//! (Sanathanan–Koerner), the third-order denominator is factored into the
//! torque lag and the pendulum pair using the known inertia, and polynomials
//! in p̄ are fitted through the per-level parameter estimates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::allocation::DeltaRepresentation;
use crate::config::SysidSection;
use crate::error::{Error, Result};
use crate::plant::{AxisCoefficients, AxisParams, MechanicalParams, Plant, PlantState, ALPHA};
use crate::poly::Polynomial;

/// One sine-sweep campaign at a fixed p̄ level on one axis.
#[derive(Debug, Clone)]
pub struct SineExperiment {
    /// Strictly increasing excitation frequencies, Hz. Each is snapped to an
    /// integer number of samples per period before use.
    pub frequencies_hz: Vec<f64>,
    /// Excitation amplitude in Delta Representation space, bar.
    pub amplitude: f64,
    /// Periods applied per frequency.
    pub periods: usize,
    /// Leading periods discarded as transient.
    pub discard: usize,
    pub p_bar: f64,
    /// 0 = α, 1 = β.
    pub axis: usize,
}

impl SineExperiment {
    pub fn from_config(cfg: &SysidSection, p_bar: f64, axis: usize) -> Self {
        let n = cfg.n_frequencies.max(2);
        let ratio = cfg.freq_max_hz / cfg.freq_min_hz;
        let frequencies_hz = (0..n)
            .map(|i| cfg.freq_min_hz * ratio.powf(i as f64 / (n - 1) as f64))
            .collect();
        Self {
            frequencies_hz,
            amplitude: cfg.amplitude,
            periods: cfg.periods,
            discard: cfg.discard,
            p_bar,
            axis,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies_hz.is_empty()
            || !self.frequencies_hz.windows(2).all(|w| w[0] < w[1])
            || self.frequencies_hz.iter().any(|&f| f <= 0.0)
        {
            return Err(Error::invalid("frequencies must be strictly increasing and > 0"));
        }
        if self.periods <= self.discard {
            return Err(Error::invalid("periods must exceed the discard count"));
        }
        if self.amplitude <= 0.0 {
            return Err(Error::invalid("amplitude must be positive"));
        }
        Ok(())
    }
}

/// Complex response estimate per excitation frequency, with the variance of
/// the per-period estimates as an uncertainty proxy.
#[derive(Debug, Clone)]
pub struct FrequencyPoint {
    pub frequency_hz: f64,
    pub response: Complex64,
    pub variance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FrequencyResponseData {
    pub points: Vec<FrequencyPoint>,
}

impl FrequencyResponseData {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Anything that can be driven with a scalar input signal and sampled at a
/// fixed rate. `simulate` returns (realized input, output), both sampled at
/// t = 0, dt, …, (n−1)·dt. Returning the realized input lets the response be
/// estimated from what actually reached the system — for the arm, the
/// decoupled difference of the lagged actuator pressures rather than the
/// commanded setpoint.
pub trait FrequencyProbe {
    fn simulate(
        &mut self,
        input: &dyn Fn(f64) -> f64,
        n_samples: usize,
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Probe of the simulated plant: drives one Delta Representation channel
/// around the rest point at the experiment's p̄ and reads the same axis'
/// angle through the measurement path.
pub struct PlantProbe<'a> {
    plant: &'a Plant,
    p_bar: f64,
    axis: usize,
    rng: ChaCha8Rng,
}

impl<'a> PlantProbe<'a> {
    pub fn new(plant: &'a Plant, p_bar: f64, axis: usize, seed: u64) -> Self {
        Self {
            plant,
            p_bar,
            axis,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl PlantProbe<'_> {
    fn realized_input(&self, state: &PlantState) -> Result<f64> {
        let (diffs, _) = crate::allocation::differences_from_absolute(&state.pressures())?;
        let (dp_alpha, dp_beta) = crate::allocation::decouple(&diffs)?;
        Ok(if self.axis == ALPHA { dp_alpha } else { dp_beta })
    }
}

impl FrequencyProbe for PlantProbe<'_> {
    fn simulate(
        &mut self,
        input: &dyn Fn(f64) -> f64,
        n_samples: usize,
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let p_bar = self.p_bar;
        let axis = self.axis;
        let cmd = move |t: f64| {
            let u = input(t);
            if axis == ALPHA {
                DeltaRepresentation::new(p_bar, u, 0.0)
            } else {
                DeltaRepresentation::new(p_bar, 0.0, u)
            }
        };
        let mut state = PlantState::at_rest(p_bar);
        let mut us = Vec::with_capacity(n_samples);
        let mut ys = Vec::with_capacity(n_samples);
        us.push(self.realized_input(&state)?);
        ys.push(self.plant.measure(&state, &mut self.rng)[axis]);
        let mut t = 0.0;
        for _ in 1..n_samples {
            state = self.plant.step_with(&state, t, dt, &cmd, [0.0; 2])?;
            t += dt;
            us.push(self.realized_input(&state)?);
            ys.push(self.plant.measure(&state, &mut self.rng)[axis]);
        }
        Ok((us, ys))
    }
}

/// Fundamental Fourier coefficient of `signal` at `frequency_hz` by
/// correlation with sine and cosine references. `signal[j]` is the sample at
/// t = j·dt; the signal must cover an integer number of periods.
/// Returns (amplitude, phase) of the component a·sin(ωt + φ).
pub fn sine_correlate(signal: &[f64], frequency_hz: f64, dt: f64) -> Result<(f64, f64)> {
    let cycles = signal.len() as f64 * frequency_hz * dt;
    let rounded = cycles.round();
    if rounded < 1.0 || (cycles - rounded).abs() > 1e-6 * cycles.max(1.0) {
        return Err(Error::SpectralLeakage {
            samples: signal.len(),
            frequency_hz,
        });
    }
    let omega = 2.0 * std::f64::consts::PI * frequency_hz;
    let mut in_phase = 0.0;
    let mut quadrature = 0.0;
    for (j, &y) in signal.iter().enumerate() {
        let t = j as f64 * dt;
        in_phase += y * (omega * t).sin();
        quadrature += y * (omega * t).cos();
    }
    let scale = 2.0 / signal.len() as f64;
    in_phase *= scale;
    quadrature *= scale;
    Ok((in_phase.hypot(quadrature), quadrature.atan2(in_phase)))
}

/// Run a sine-sweep experiment against a probe. For each frequency the
/// excitation runs `periods` snapped periods (amplitude ramping over the
/// first discarded period to limit transient excitation), the first `discard`
/// periods are dropped, and the retained periods are correlated one by one —
/// the response estimate per period is the complex ratio of the output to
/// the realized-input correlation. Their mean is the frequency-response
/// estimate and their spread the variance proxy.
pub fn run_sine_experiment(
    spec: &SineExperiment,
    probe: &mut dyn FrequencyProbe,
    dt: f64,
) -> Result<FrequencyResponseData> {
    spec.validate()?;
    let mut data = FrequencyResponseData::default();
    for &f in &spec.frequencies_hz {
        let samples_per_period = (1.0 / (f * dt)).round() as usize;
        if samples_per_period < 4 {
            return Err(Error::invalid(format!(
                "{f} Hz is too fast for the sample time {dt}"
            )));
        }
        let f_act = 1.0 / (samples_per_period as f64 * dt);
        let omega = 2.0 * std::f64::consts::PI * f_act;
        let n_total = spec.periods * samples_per_period;
        let ramp = if spec.discard >= 1 {
            samples_per_period as f64 * dt
        } else {
            0.0
        };
        let amplitude = spec.amplitude;
        let input = move |t: f64| {
            let w = if ramp > 0.0 { (t / ramp).min(1.0) } else { 1.0 };
            amplitude * w * (omega * t).sin()
        };
        let (u, y) = probe.simulate(&input, n_total, dt)?;

        let retained = spec.periods - spec.discard;
        let mut estimates = Vec::with_capacity(retained);
        for r in spec.discard..spec.periods {
            let range = r * samples_per_period..(r + 1) * samples_per_period;
            let (u_amp, u_phase) = sine_correlate(&u[range.clone()], f_act, dt)?;
            let (y_amp, y_phase) = sine_correlate(&y[range], f_act, dt)?;
            if u_amp <= 0.0 {
                return Err(Error::invalid("excitation vanished from the realized input"));
            }
            let c_u = Complex64::from_polar(u_amp, u_phase);
            let c_y = Complex64::from_polar(y_amp, y_phase);
            estimates.push(c_y / c_u);
        }
        let mean = estimates.iter().sum::<Complex64>() / retained as f64;
        let variance = if retained > 1 {
            estimates.iter().map(|c| (c - mean).norm_sqr()).sum::<f64>() / (retained - 1) as f64
        } else {
            0.0
        };
        data.points.push(FrequencyPoint {
            frequency_hz: f_act,
            response: mean,
            variance,
        });
    }
    Ok(data)
}

/// Rational transfer-function model with ascending real coefficients and a
/// monic denominator.
#[derive(Debug, Clone)]
pub struct RationalModel {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Weighted RMS residual of the final fit, using the same weights as the
    /// solve.
    pub weighted_residual: f64,
}

impl RationalModel {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let horner = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * s + v)
        };
        horner(&self.num) / horner(&self.den)
    }

    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }
}

/// Weighted complex curve fit with iterative denominator reweighting
/// (Sanathanan–Koerner). Weights are inverse variance with a relative floor;
/// frequencies are normalized by their geometric mean for conditioning.
pub fn fit_transfer_function(
    data: &FrequencyResponseData,
    order: (usize, usize),
) -> Result<RationalModel> {
    let (nb, nd) = order;
    let n_unknowns = nb + 1 + nd;
    if data.len() < n_unknowns + 1 {
        return Err(Error::invalid(format!(
            "need at least {} frequency points for order ({nb}, {nd})",
            n_unknowns + 1
        )));
    }
    let omega: Vec<f64> = data
        .points
        .iter()
        .map(|p| 2.0 * std::f64::consts::PI * p.frequency_hz)
        .collect();
    let scale = omega.iter().map(|w| w.ln()).sum::<f64>() / omega.len() as f64;
    let omega0 = scale.exp();

    // Inverse-variance base weights. The floor (1% of the response
    // magnitude) keeps noise-free campaigns from starving the resonance
    // region, where the per-period spread is orders of magnitude above the
    // quasi-static points but still far below any real measurement noise.
    let base_w: Vec<f64> = data
        .points
        .iter()
        .map(|p| {
            let floor = (1e-2 * p.response.norm()).powi(2) + 1e-300;
            1.0 / (p.variance + floor).sqrt()
        })
        .collect();

    let mut den_prev: Vec<f64> = vec![0.0; nd + 1];
    den_prev[nd] = 1.0;
    let mut solution: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut prev_x: Option<DVector<f64>> = None;
    for _iter in 0..50 {
        let mut a = DMatrix::zeros(2 * data.len(), n_unknowns);
        let mut rhs = DVector::zeros(2 * data.len());
        for (k, p) in data.points.iter().enumerate() {
            let nu = Complex64::new(0.0, omega[k] / omega0);
            let dprev = den_prev
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * nu + v);
            let w = base_w[k] / dprev.norm().max(1e-12);

            // Σ b̂_t ν^t − G Σ_{t<nd} â_t ν^t = G ν^nd, row-stacked re/im.
            let mut pow = Complex64::new(1.0, 0.0);
            for t in 0..=nb {
                a[(2 * k, t)] = w * pow.re;
                a[(2 * k + 1, t)] = w * pow.im;
                pow *= nu;
            }
            let mut pow = Complex64::new(1.0, 0.0);
            for t in 0..nd {
                let coeff = -p.response * pow;
                a[(2 * k, nb + 1 + t)] = w * coeff.re;
                a[(2 * k + 1, nb + 1 + t)] = w * coeff.im;
                pow *= nu;
            }
            let target = p.response * pow; // pow = ν^nd here
            rhs[2 * k] = w * target.re;
            rhs[2 * k + 1] = w * target.im;
        }
        let svd = a.svd(true, true);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let condition = sigma_max / sigma_min.max(f64::MIN_POSITIVE);
        if condition > 1e13 {
            return Err(Error::FitFailed { condition });
        }
        let x = svd
            .solve(&rhs, 1e-14)
            .map_err(|_| Error::FitFailed { condition })?;

        let mut den_hat = vec![0.0; nd + 1];
        den_hat[nd] = 1.0;
        den_hat[..nd].copy_from_slice(&x.as_slice()[nb + 1..]);
        let num_hat = x.as_slice()[..=nb].to_vec();

        let converged = match &prev_x {
            Some(prev) => (&x - prev).norm() <= 1e-8 * x.norm().max(1e-30),
            None => false,
        };
        den_prev = den_hat.clone();
        solution = Some((num_hat, den_hat, omega0));
        prev_x = Some(x);
        if converged {
            break;
        }
    }
    let (num_hat, den_hat, omega0) = solution.expect("at least one SK iteration ran");

    // Undo the frequency normalization.
    let num: Vec<f64> = num_hat
        .iter()
        .enumerate()
        .map(|(t, &b)| b * omega0.powi((nd - t) as i32))
        .collect();
    let den: Vec<f64> = den_hat
        .iter()
        .enumerate()
        .map(|(t, &a)| a * omega0.powi((nd - t) as i32))
        .collect();
    let mut model = RationalModel {
        num,
        den,
        weighted_residual: 0.0,
    };
    let mut num_acc = 0.0;
    let mut den_acc = 0.0;
    for (k, p) in data.points.iter().enumerate() {
        let err = (model.eval(Complex64::new(0.0, omega[k])) - p.response).norm_sqr();
        let w2 = base_w[k] * base_w[k];
        num_acc += w2 * err;
        den_acc += w2;
    }
    model.weighted_residual = (num_acc / den_acc).sqrt();
    Ok(model)
}

/// Factor a fitted third-order model b₀/(s³ + a₂s² + a₁s + a₀) into
/// η/((T s + 1)(J s² + d s + k)) using the known inertia J. The torque-lag
/// root 1/T is a real root of x³ − a₂x² + a₁x − a₀; with several admissible
/// factorizations the fastest lag is chosen.
pub fn extract_physical_parameters(
    model: &RationalModel,
    mech: &MechanicalParams,
) -> Result<AxisCoefficients> {
    if model.num_degree() != 0 || model.den_degree() != 3 {
        return Err(Error::StructureMismatch(format!(
            "expected order (0, 3), got ({}, {})",
            model.num_degree(),
            model.den_degree()
        )));
    }
    let lead = model.den[3];
    if lead.abs() < 1e-300 {
        return Err(Error::StructureMismatch("denominator not third order".into()));
    }
    let a0 = model.den[0] / lead;
    let a1 = model.den[1] / lead;
    let a2 = model.den[2] / lead;
    let b0 = model.num[0] / lead;
    let inertia = mech.inertia();

    // Companion matrix of s³ + a₂s² + a₁s + a₀.
    let companion = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2]);
    let roots = companion.complex_eigenvalues();
    let mut best: Option<AxisCoefficients> = None;
    for root in roots.iter() {
        if root.im.abs() > 1e-6 * root.norm().max(1.0) || root.re >= 0.0 {
            continue;
        }
        let x = -root.re;
        let t = 1.0 / x;
        let d = inertia * (a2 - x);
        let k = inertia * (a1 - a2 * x + x * x);
        let eta = b0 * t * inertia;
        if t > 0.0 && d > 0.0 && k > 0.0 && eta > 0.0 {
            let candidate = AxisCoefficients { k, d, eta, t };
            best = match best {
                // Prefer the fastest real pole as the torque lag.
                Some(prev) if prev.t < candidate.t => Some(prev),
                _ => Some(candidate),
            };
        }
    }
    best.ok_or_else(|| {
        Error::StructureMismatch(
            "no factorization with positive T, d, k and η exists".into(),
        )
    })
}

/// Per-parameter polynomial degrees for the p̄ fits.
#[derive(Debug, Clone, Copy)]
pub struct PolynomialDegrees {
    pub k: usize,
    pub d: usize,
    pub eta: usize,
    pub t: usize,
}

impl From<&SysidSection> for PolynomialDegrees {
    fn from(s: &SysidSection) -> Self {
        Self {
            k: s.k_degree,
            d: s.d_degree,
            eta: s.eta_degree,
            t: s.t_degree,
        }
    }
}

/// Least-squares polynomials through per-level parameter estimates.
pub fn fit_parameter_polynomials(
    p_bar_levels: &[f64],
    estimates: &[AxisCoefficients],
    degrees: PolynomialDegrees,
) -> Result<AxisParams> {
    if p_bar_levels.len() != estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: p_bar_levels.len(),
            got: estimates.len(),
        });
    }
    let grab = |f: fn(&AxisCoefficients) -> f64| -> Vec<f64> { estimates.iter().map(f).collect() };
    Ok(AxisParams {
        k: Polynomial::fit(p_bar_levels, &grab(|c| c.k), degrees.k)?,
        d: Polynomial::fit(p_bar_levels, &grab(|c| c.d), degrees.d)?,
        eta: Polynomial::fit(p_bar_levels, &grab(|c| c.eta), degrees.eta)?,
        t: Polynomial::fit(p_bar_levels, &grab(|c| c.t), degrees.t)?,
    })
}

/// Analytic frequency response of the third-order axis model.
pub fn analytic_response(cf: &AxisCoefficients, inertia: f64, omega: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    cf.eta / ((cf.t * s + 1.0) * (inertia * s * s + cf.d * s + cf.k))
}

/// Assemble the rational model of known physical parameters (the inverse of
/// [`extract_physical_parameters`]).
pub fn model_from_physical(cf: &AxisCoefficients, inertia: f64) -> RationalModel {
    // η/((T s + 1)(J s² + d s + k)) = (η/TJ) / (s³ + …), monic denominator.
    let tj = cf.t * inertia;
    RationalModel {
        num: vec![cf.eta / tj],
        den: vec![
            cf.k / tj,
            (cf.t * cf.k + cf.d) / tj,
            (cf.t * cf.d + inertia) / tj,
            1.0,
        ],
        weighted_residual: 0.0,
    }
}

/// One identified axis: per-level estimates plus the fitted polynomials.
#[derive(Debug, Clone)]
pub struct IdentifiedAxis {
    pub axis: usize,
    pub p_bar_levels: Vec<f64>,
    pub per_level: Vec<AxisCoefficients>,
    pub frd: Vec<FrequencyResponseData>,
    pub models: Vec<RationalModel>,
    pub params: AxisParams,
}

/// Full identification campaign for one axis: sweep every p̄ level, fit a
/// third-order model per level, extract physical parameters with the m = 0
/// inertia, and fit the parameter polynomials.
pub fn identify_axis(
    plant: &Plant,
    axis: usize,
    cfg: &SysidSection,
    dt: f64,
    seed: u64,
) -> Result<IdentifiedAxis> {
    let mech_id = plant.mech.with_load(0.0);
    let mut per_level = Vec::new();
    let mut frds = Vec::new();
    let mut models = Vec::new();
    for (i, &p_bar) in cfg.p_bar_levels.iter().enumerate() {
        let spec = SineExperiment::from_config(cfg, p_bar, axis);
        let mut probe = PlantProbe::new(plant, p_bar, axis, seed.wrapping_add(i as u64));
        let frd = run_sine_experiment(&spec, &mut probe, dt)?;
        let model = fit_transfer_function(&frd, (0, 3))?;
        per_level.push(extract_physical_parameters(&model, &mech_id)?);
        frds.push(frd);
        models.push(model);
    }
    let params = fit_parameter_polynomials(&cfg.p_bar_levels, &per_level, cfg.into())?;
    Ok(IdentifiedAxis {
        axis,
        p_bar_levels: cfg.p_bar_levels.clone(),
        per_level,
        frd: frds,
        models,
        params,
    })
}

/// CSV export of frequency-response data: frequency, real, imag, variance.
pub fn write_frd_csv(
    path: &std::path::Path,
    seed: u64,
    frd: &FrequencyResponseData,
) -> Result<()> {
    let mut w = crate::sim::csv_writer_with_seed(path, seed)?;
    w.write_record(["frequency_hz", "real", "imag", "variance"])?;
    for p in &frd.points {
        w.write_record([
            p.frequency_hz.to_string(),
            p.response.re.to_string(),
            p.response.im.to_string(),
            p.variance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Multiplicative complex noise on a frequency response, for robustness
/// studies: each point is scaled by (1 + σ·(n_re + i·n_im)).
pub fn perturb_frd(frd: &FrequencyResponseData, sigma: f64, seed: u64) -> FrequencyResponseData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, sigma).expect("valid sigma");
    FrequencyResponseData {
        points: frd
            .points
            .iter()
            .map(|p| {
                let factor = Complex64::new(
                    1.0 + rand_distr::Distribution::sample(&normal, &mut rng),
                    rand_distr::Distribution::sample(&normal, &mut rng),
                );
                FrequencyPoint {
                    frequency_hz: p.frequency_hz,
                    response: p.response * factor,
                    variance: (sigma * p.response.norm()).powi(2),
                }
            })
            .collect(),
    }
}
