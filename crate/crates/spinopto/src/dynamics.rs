//! Time-domain integration of the coupled spin-cavity system: deterministic
//! evolution via a norm-preserving splitting scheme, and semiclassical
//! Langevin evolution with Gaussian input noise.
//!
//! One step is a Strang splitting:
//!   (a) half-step exact spin rotation about Omega_eff(n+, n-),
//!   (b) full-step exact update of each cavity mode as a linear
//!       (Ornstein-Uhlenbeck when noisy) process with frozen S_k,
//!   (c) half-step spin rotation with the updated fields.
//! |S| is conserved exactly by construction, and the cavity step is the exact
//! exponential solution, so kappa >> Omega_L stiffness costs nothing.
//!
//! Noise normalization: the amplitude/phase input noises are independent white
//! Gaussians with delta-correlation strength 1/(2 kappa), which makes the
//! empty-cavity intracavity quadrature variance exactly 1/4 (half a quantum
//! per quadrature). Undriven modes evolve noiselessly. Per-trajectory RNG is
//! ChaCha8 keyed by the seed with the trajectory index as the stream.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{analytic_signal, fft_forward};
use crate::model::{effective_field, rotate_about, CavityState, SpinState, SystemParams};

/// Piecewise-linear schedule; values are held at the ends outside the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Ramp {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Ramp {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Domain(
                "ramp needs equal, nonempty times/values".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("ramp times must be increasing".into()));
        }
        Ok(Ramp { times, values })
    }

    pub fn linear(t0: f64, v0: f64, t1: f64, v1: f64) -> Self {
        Ramp {
            times: vec![t0, t1],
            values: vec![v0, v1],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let f = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + f * (self.values[i + 1] - self.values[i])
    }

    fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Optional schedules for the probe detunings and drive amplitudes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RampSchedule {
    pub delta_p_plus: Option<Ramp>,
    pub delta_p_minus: Option<Ramp>,
    pub eta_plus: Option<Ramp>,
    pub eta_minus: Option<Ramp>,
}

impl RampSchedule {
    pub fn is_empty(&self) -> bool {
        self.delta_p_plus.is_none()
            && self.delta_p_minus.is_none()
            && self.eta_plus.is_none()
            && self.eta_minus.is_none()
    }
}

/// Integration configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Step (s); must satisfy the stability guard, see [`SimConfig::validate`].
    pub dt: f64,
    /// Total integration time (s).
    pub duration: f64,
    /// Keep one sample every `record_stride` steps.
    pub record_stride: usize,
    pub noise_enabled: bool,
    pub seed: u64,
    pub ramp: Option<RampSchedule>,
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64, record_stride: usize, noise_enabled: bool, seed: u64) -> Self {
        SimConfig {
            dt,
            duration,
            record_stride,
            noise_enabled,
            seed,
            ramp: None,
        }
    }

    pub fn with_ramp(mut self, ramp: RampSchedule) -> Self {
        self.ramp = Some(ramp);
        self
    }

    /// Stability guard: dt <= 0.05 / max(kappa, |Omega_L|, |Omega_c| S,
    /// |Dp±| + |Omega_c| S), with ramped maxima where schedules are present.
    pub fn validate(&self, p: &SystemParams) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration > 0.0) || self.record_stride == 0 {
            return Err(Error::Domain(
                "dt, duration must be > 0 and record_stride >= 1".into(),
            ));
        }
        let cs = p.omega_cpl.abs() * p.s_tot;
        let mut dp_max = p.delta_p_plus.abs().max(p.delta_p_minus.abs());
        if let Some(r) = &self.ramp {
            if let Some(rp) = &r.delta_p_plus {
                dp_max = dp_max.max(rp.max_abs_value());
            }
            if let Some(rm) = &r.delta_p_minus {
                dp_max = dp_max.max(rm.max_abs_value());
            }
        }
        let rate = p
            .kappa
            .max(p.omega_l.abs())
            .max(cs)
            .max(dp_max + cs);
        let dt_max = 0.05 / rate;
        if self.dt > dt_max {
            return Err(Error::Domain(format!(
                "dt = {} violates the stability guard (max {})",
                self.dt, dt_max
            )));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Per-step Gaussian increments for the amplitude and phase quadratures of the
/// driven modes, white with per-step variance 1/(2 kappa dt) each.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseInput {
    pub xi_a_plus: f64,
    pub xi_p_plus: f64,
    pub xi_a_minus: f64,
    pub xi_p_minus: f64,
}

impl NoiseInput {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, kappa: f64, dt: f64) -> Self {
        let sigma = (1.0 / (2.0 * kappa * dt)).sqrt();
        NoiseInput {
            xi_a_plus: sigma * rng.sample::<f64, _>(StandardNormal),
            xi_p_plus: sigma * rng.sample::<f64, _>(StandardNormal),
            xi_a_minus: sigma * rng.sample::<f64, _>(StandardNormal),
            xi_p_minus: sigma * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

fn cavity_mode_step(
    kappa: f64,
    delta_eff: f64,
    eta: f64,
    c: Complex64,
    dt: f64,
    xi: Option<(f64, f64)>,
) -> Complex64 {
    let a = Complex64::new(-kappa, delta_eff);
    let propagator = (a * dt).exp();
    let c_ss = if eta != 0.0 {
        kappa * eta / Complex64::new(kappa, -delta_eff)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let mut next = c_ss + (c - c_ss) * propagator;
    if let Some((xi_a, xi_p)) = xi {
        // exact OU increment: per-quadrature variance (1 - e^{-2 kappa dt})/4,
        // mapped from the white-noise inputs of variance 1/(2 kappa dt)
        let v = 0.25 * (1.0 - (-2.0 * kappa * dt).exp());
        let scale = (v * 2.0 * kappa * dt).sqrt();
        next += Complex64::new(xi_a, xi_p) * scale;
    }
    next
}

/// One Strang step. Drives and detunings are taken from `p`; the noise input,
/// when given, is applied to driven modes only.
pub fn step(
    p: &SystemParams,
    spin: &SpinState,
    cavity: &CavityState,
    dt: f64,
    noise: Option<&NoiseInput>,
) -> (SpinState, CavityState) {
    let field = effective_field(p, cavity.n_plus(), cavity.n_minus());
    let spin_half = rotate_about(spin, &field, 0.5 * dt);

    let s_k = spin_half.z;
    let eta_p = p.eta_plus();
    let eta_m = p.eta_minus();
    let c_plus = cavity_mode_step(
        p.kappa,
        p.delta_eff_plus(s_k),
        eta_p,
        cavity.c_plus,
        dt,
        noise.and_then(|n| (eta_p > 0.0).then_some((n.xi_a_plus, n.xi_p_plus))),
    );
    let c_minus = cavity_mode_step(
        p.kappa,
        p.delta_eff_minus(s_k),
        eta_m,
        cavity.c_minus,
        dt,
        noise.and_then(|n| (eta_m > 0.0).then_some((n.xi_a_minus, n.xi_p_minus))),
    );
    let cavity_next = CavityState::new(c_plus, c_minus);

    let field_next = effective_field(p, cavity_next.n_plus(), cavity_next.n_minus());
    let spin_next = rotate_about(&spin_half, &field_next, 0.5 * dt);
    (spin_next, cavity_next)
}

/// Uniformly sampled time series of spin, field and photon numbers.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub spins: Vec<SpinState>,
    pub c_plus: Vec<Complex64>,
    pub c_minus: Vec<Complex64>,
    pub params: SystemParams,
    pub config: SimConfig,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Recording interval (s).
    pub fn dt_record(&self) -> f64 {
        self.config.dt * self.config.record_stride as f64
    }

    pub fn n_plus(&self, i: usize) -> f64 {
        self.c_plus[i].norm_sqr()
    }

    pub fn n_minus(&self, i: usize) -> f64 {
        self.c_minus[i].norm_sqr()
    }

    /// Indices whose times fall in [t0, t1].
    pub fn window_indices(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.times.partition_point(|&t| t < t0);
        let hi = self.times.partition_point(|&t| t <= t1);
        lo..hi
    }

    /// Mean of S_i/S over [t0, t1].
    pub fn windowed_mean_s_i(&self, t0: f64, t1: f64) -> f64 {
        let r = self.window_indices(t0, t1);
        let n = r.len().max(1) as f64;
        self.spins[r].iter().map(|s| s.x).sum::<f64>() / (n * self.params.s_tot)
    }
}

fn ramped_params(p: &SystemParams, ramp: Option<&RampSchedule>, t: f64) -> SystemParams {
    let mut pt = *p;
    if let Some(r) = ramp {
        if let Some(rr) = &r.delta_p_plus {
            pt.delta_p_plus = rr.eval(t);
        }
        if let Some(rr) = &r.delta_p_minus {
            pt.delta_p_minus = rr.eval(t);
        }
        if let Some(rr) = &r.eta_plus {
            let eta = rr.eval(t);
            pt.nmax_plus = eta * eta;
        }
        if let Some(rr) = &r.eta_minus {
            let eta = rr.eval(t);
            pt.nmax_minus = eta * eta;
        }
    }
    pt
}

fn simulate_with_rng(
    p: &SystemParams,
    init_spin: SpinState,
    init_cavity: CavityState,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryRecord> {
    cfg.validate(p)?;
    let n_steps = cfg.n_steps();
    let n_records = n_steps / cfg.record_stride + 1;
    let mut traj = TrajectoryRecord {
        times: Vec::with_capacity(n_records),
        spins: Vec::with_capacity(n_records),
        c_plus: Vec::with_capacity(n_records),
        c_minus: Vec::with_capacity(n_records),
        params: *p,
        config: cfg.clone(),
    };

    let mut spin = init_spin;
    let mut cavity = init_cavity;
    let record = |traj: &mut TrajectoryRecord, t: f64, s: &SpinState, c: &CavityState| {
        traj.times.push(t);
        traj.spins.push(*s);
        traj.c_plus.push(c.c_plus);
        traj.c_minus.push(c.c_minus);
    };
    record(&mut traj, 0.0, &spin, &cavity);

    let ramp = cfg.ramp.as_ref();
    for i in 0..n_steps {
        let t_mid = (i as f64 + 0.5) * cfg.dt;
        let pt = ramped_params(p, ramp, t_mid);
        let noise = cfg
            .noise_enabled
            .then(|| NoiseInput::sample(rng, pt.kappa, cfg.dt));
        let (s2, c2) = step(&pt, &spin, &cavity, cfg.dt, noise.as_ref());
        spin = s2;
        cavity = c2;
        if (i + 1) % cfg.record_stride == 0 {
            let t = (i + 1) as f64 * cfg.dt;
            if !(spin.x.is_finite() && cavity.c_plus.is_finite() && cavity.c_minus.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            record(&mut traj, t, &spin, &cavity);
        }
    }
    Ok(traj)
}

/// Integrates one trajectory; deterministic given (params, init, cfg, seed).
pub fn simulate(
    p: &SystemParams,
    init_spin: SpinState,
    init_cavity: CavityState,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with_rng(p, init_spin, init_cavity, cfg, &mut rng)
}

/// Integrates `n_traj` independent trajectories in parallel. Trajectory `i`
/// uses the ChaCha8 stream `i` of the seed, so results are independent of
/// worker scheduling.
pub fn simulate_ensemble(
    p: &SystemParams,
    init_spin: SpinState,
    init_cavity: CavityState,
    cfg: &SimConfig,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            simulate_with_rng(p, init_spin, init_cavity, cfg, &mut rng)
        })
        .collect()
}

/// Default initial condition helper: spin tilted from +i by `polar_offset`
/// (rad, toward +k) and rotated by `azimuth` about i; cavity at the
/// frozen-spin steady state.
pub fn default_initial_state(
    p: &SystemParams,
    polar_offset: f64,
    azimuth: f64,
) -> (SpinState, CavityState) {
    let spin = p.s_tot
        * Vector3::new(
            polar_offset.cos(),
            -azimuth.sin() * polar_offset.sin(),
            azimuth.cos() * polar_offset.sin(),
        );
    let cavity = CavityState::steady(p, spin.z);
    (spin, cavity)
}

/// Ringdown fit of a small-amplitude precession segment.
#[derive(Debug, Clone, Copy)]
pub struct Ringdown {
    /// Precession frequency (rad/s) from the interpolated FFT peak of S_j(t).
    pub frequency: f64,
    /// Envelope rate (1/s) from a line fit to the log analytic-signal
    /// magnitude; positive = growth, negative = decay.
    pub envelope_rate: f64,
    pub n_cycles: f64,
    /// Standard deviation of the log-envelope fit residuals.
    pub residual_std: f64,
}

/// Estimates precession frequency and envelope rate over `window` = (t0, t1).
/// The window must contain at least 20 precession cycles.
pub fn measure_ringdown(traj: &TrajectoryRecord, window: (f64, f64)) -> Result<Ringdown> {
    let range = traj.window_indices(window.0, window.1);
    let n = range.len();
    if n < 64 {
        return Err(Error::FitQuality {
            reason: format!("window holds only {n} samples"),
            n_cycles: 0.0,
            residual_std: f64::NAN,
        });
    }
    let dt = traj.dt_record();
    let series: Vec<f64> = traj.spins[range].iter().map(|s| s.y).collect();
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();

    // frequency: FFT peak refined by quadratic interpolation of log magnitude
    let mut buf: Vec<Complex64> = centered.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let half = n / 2;
    let (mut k_peak, mut mag_peak) = (1usize, 0.0f64);
    for (k, v) in buf.iter().enumerate().take(half + 1).skip(1) {
        let m = v.norm();
        if m > mag_peak {
            mag_peak = m;
            k_peak = k;
        }
    }
    if mag_peak == 0.0 {
        return Err(Error::FitQuality {
            reason: "no oscillatory content".into(),
            n_cycles: 0.0,
            residual_std: f64::NAN,
        });
    }
    let delta = if k_peak > 1 && k_peak < half {
        let la = buf[k_peak - 1].norm().max(1e-300).ln();
        let lb = mag_peak.ln();
        let lc = buf[k_peak + 1].norm().max(1e-300).ln();
        let denom = la - 2.0 * lb + lc;
        if denom.abs() > 1e-300 {
            (0.5 * (la - lc) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let frequency = 2.0 * std::f64::consts::PI * (k_peak as f64 + delta) / (n as f64 * dt);

    let duration = n as f64 * dt;
    let n_cycles = duration * frequency / (2.0 * std::f64::consts::PI);
    if n_cycles < 20.0 {
        return Err(Error::FitQuality {
            reason: "window shorter than 20 precession cycles".into(),
            n_cycles,
            residual_std: f64::NAN,
        });
    }

    // envelope rate: line fit to the log analytic-signal magnitude, edges trimmed
    let envelope: Vec<f64> = analytic_signal(&centered).iter().map(|z| z.norm()).collect();
    let trim = (n as f64 * 0.05).ceil() as usize;
    let idx = trim..(n - trim);
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut m = 0.0;
    for i in idx.clone() {
        let x = i as f64 * dt;
        let y = envelope[i].max(1e-300).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1.0;
    }
    let denom = m * sxx - sx * sx;
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let mut ss = 0.0;
    for i in idx {
        let x = i as f64 * dt;
        let y = envelope[i].max(1e-300).ln();
        let r = y - (intercept + slope * x);
        ss += r * r;
    }
    let residual_std = (ss / m).sqrt();
    if residual_std > 0.5 {
        return Err(Error::FitQuality {
            reason: "amplitude nonstationary beyond the exponential model".into(),
            n_cycles,
            residual_std,
        });
    }
    Ok(Ringdown {
        frequency,
        envelope_rate: slope,
        n_cycles,
        residual_std,
    })
}

/// Time-domain detuning sweep: ramps Dp± together from `dp_from` to `dp_to`
/// over the configured duration. The ramp rate must satisfy
/// |d Dp / dt| <= 0.01 kappa^2.
pub fn dynamic_hysteresis(
    p: &SystemParams,
    dp_from: f64,
    dp_to: f64,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let rate = (dp_to - dp_from).abs() / cfg.duration;
    if rate > 0.01 * p.kappa * p.kappa {
        return Err(Error::Domain(format!(
            "ramp rate {rate} exceeds 0.01 kappa^2",
        )));
    }
    let ramp = RampSchedule {
        delta_p_plus: Some(Ramp::linear(0.0, dp_from, cfg.duration, dp_to)),
        delta_p_minus: Some(Ramp::linear(0.0, dp_from, cfg.duration, dp_to)),
        eta_plus: None,
        eta_minus: None,
    };
    let cfg_ramped = cfg.clone().with_ramp(ramp);
    let mut p0 = *p;
    p0.delta_p_plus = dp_from;
    p0.delta_p_minus = dp_from;
    let (spin, cavity) = default_initial_state(&p0, 0.0, 0.0);
    simulate(&p0, spin, cavity, &cfg_ramped)
}

/// Solves for the resonant drive strength nmax+ such that the fixed point
/// nearest `theta_ref` holds exactly `n_target` intracavity photons
/// (the "n photons at the operating point" convention, sigma+ only).
pub fn drive_for_photons_at_fixed_point(
    p: &SystemParams,
    n_target: f64,
    theta_ref: f64,
) -> Result<SystemParams> {
    let mut pp = *p;
    pp.nmax_plus = n_target;
    for _ in 0..200 {
        let fps = crate::steady::find_fixed_points(&pp, crate::steady::DEFAULT_GRID_N)?;
        let fp = fps
            .iter()
            .min_by(|a, b| {
                let da = (a.theta0 - theta_ref).abs();
                let db = (b.theta0 - theta_ref).abs();
                da.partial_cmp(&db).unwrap()
            })
            .ok_or_else(|| Error::Domain("no fixed point found".into()))?;
        let ratio = n_target / fp.n_plus;
        if (ratio - 1.0).abs() < 1e-12 {
            return Ok(pp);
        }
        pp.nmax_plus *= ratio;
    }
    Err(Error::Domain(
        "drive solve did not converge in 200 iterations".into(),
    ))
}
