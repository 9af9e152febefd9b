//! Physical parameters and the exact drift (right-hand-side) functions for the
//! coupled spin-cavity system, the microscopic-to-effective parameter
//! derivation, and the optomechanics analogy mapping.
//!
//! Conventions (the single source of truth for orientation):
//!   - hbar = 1; every energy is an angular frequency in rad/s.
//!   - basis (i, j, k) with k the cavity axis; the external field direction
//!     `b` defaults to i.
//!   - spin equation of motion: dS/dt = S x Omega_eff (cross product in that
//!     order), which with b = i and S ~ S*i gives
//!     dS_j/dt = Omega_L S_k - Omega_c S (n+ - n-),  dS_k/dt = -Omega_L S_j.
//!   - cavity drift: dc+/dt = (i Dp+ - kappa + i Omega_c S_k) c+ + kappa eta+
//!     and the sigma- mode with the opposite sign of the spin shift.
//!   - drive amplitudes are eta± = sqrt(nmax±), real and positive, so a
//!     resonant empty cavity holds exactly nmax± photons.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Classical collective spin, components (S_i, S_j, S_k) in hbar units.
pub type SpinState = Vector3<f64>;

/// Total effective precession vector Omega_eff (rad/s), components along (i, j, k).
pub type EffectiveField = Vector3<f64>;

/// Microscopic (single-atom) parameters of the dilute-gas realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroscopicParams {
    /// Atom-cavity coupling g0 (rad/s).
    pub g0: f64,
    /// Cavity-atom detuning Delta_ca (rad/s); must be nonzero.
    pub delta_ca: f64,
    /// Vector-shift fraction upsilon (dimensionless).
    pub upsilon: f64,
    /// Gyromagnetic ratio gamma (rad/s per field unit).
    pub gamma: f64,
    /// Magnetic field magnitude (field units).
    pub b_field: f64,
    /// Atom count.
    pub n_atoms: f64,
    /// Single-atom spin s (dimensionless).
    pub spin: f64,
    /// Bare cavity resonance omega_c (rad/s), bookkeeping only.
    pub omega_c_bare: f64,
}

/// Effective couplings derived from [`MicroscopicParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    /// Larmor frequency Omega_L = gamma * B (rad/s).
    pub omega_l: f64,
    /// Cavity-spin coupling Omega_c = -upsilon g0^2 / Delta_ca (rad/s per photon).
    pub omega_cpl: f64,
    /// Scalar dispersive shift N g0^2 / Delta_ca (rad/s). Probe detunings
    /// Delta_p,± are measured from omega_c + dispersive_shift.
    pub dispersive_shift: f64,
}

/// Omega_L = gamma B, Omega_c = -upsilon g0^2 / Delta_ca, and the scalar
/// dispersive shift N g0^2 / Delta_ca.
pub fn derive_couplings(mp: &MicroscopicParams) -> Result<Couplings> {
    if mp.delta_ca == 0.0 {
        return Err(Error::Domain("delta_ca must be nonzero".into()));
    }
    if mp.n_atoms < 1.0 {
        return Err(Error::Domain("n_atoms must be >= 1".into()));
    }
    if mp.spin <= 0.0 {
        return Err(Error::Domain("single-atom spin must be > 0".into()));
    }
    let g2_over_delta = mp.g0 * mp.g0 / mp.delta_ca;
    Ok(Couplings {
        omega_l: mp.gamma * mp.b_field,
        omega_cpl: -mp.upsilon * g2_over_delta,
        dispersive_shift: mp.n_atoms * g2_over_delta,
    })
}

/// Effective system parameters of the coupled spin-cavity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Larmor frequency Omega_L (rad/s).
    pub omega_l: f64,
    /// Cavity-spin coupling Omega_c (rad/s per photon).
    pub omega_cpl: f64,
    /// Cavity half-linewidth kappa (rad/s), > 0.
    pub kappa: f64,
    /// Probe detuning of the sigma+ drive from the dispersively shifted resonance (rad/s).
    pub delta_p_plus: f64,
    /// Probe detuning of the sigma- drive (rad/s).
    pub delta_p_minus: f64,
    /// Resonant intracavity photon number of the sigma+ drive.
    pub nmax_plus: f64,
    /// Resonant intracavity photon number of the sigma- drive.
    pub nmax_minus: f64,
    /// Collective spin magnitude S (hbar units), > 0.
    pub s_tot: f64,
    /// Unit vector along the external magnetic field; defaults to i.
    pub b: Vector3<f64>,
}

impl SystemParams {
    pub fn new(
        omega_l: f64,
        omega_cpl: f64,
        kappa: f64,
        delta_p_plus: f64,
        delta_p_minus: f64,
        nmax_plus: f64,
        nmax_minus: f64,
        s_tot: f64,
    ) -> Result<Self> {
        let p = SystemParams {
            omega_l,
            omega_cpl,
            kappa,
            delta_p_plus,
            delta_p_minus,
            nmax_plus,
            nmax_minus,
            s_tot,
            b: Vector3::new(1.0, 0.0, 0.0),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_b(mut self, b: Vector3<f64>) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::Domain("kappa must be > 0".into()));
        }
        if !(self.s_tot > 0.0) {
            return Err(Error::Domain("collective spin S must be > 0".into()));
        }
        if self.nmax_plus < 0.0 || self.nmax_minus < 0.0 {
            return Err(Error::Domain("nmax_± must be >= 0".into()));
        }
        if (self.b.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "|b| = {} must be 1 within 1e-12",
                self.b.norm()
            )));
        }
        Ok(())
    }

    /// Drive amplitude eta+ = sqrt(nmax+), real and positive.
    pub fn eta_plus(&self) -> f64 {
        self.nmax_plus.sqrt()
    }

    pub fn eta_minus(&self) -> f64 {
        self.nmax_minus.sqrt()
    }

    /// Whether b points along i (required by the fixed-point analysis).
    pub fn b_is_i(&self) -> bool {
        (self.b - Vector3::new(1.0, 0.0, 0.0)).norm() <= 1e-9
    }

    /// Effective sigma+ detuning at spin projection `s_k`: Dp+ + Omega_c S_k.
    pub fn delta_eff_plus(&self, s_k: f64) -> f64 {
        self.delta_p_plus + self.omega_cpl * s_k
    }

    /// Effective sigma- detuning at spin projection `s_k`: Dp- - Omega_c S_k.
    pub fn delta_eff_minus(&self, s_k: f64) -> f64 {
        self.delta_p_minus - self.omega_cpl * s_k
    }
}

/// Two complex intracavity amplitudes (sqrt photons) for the sigma± modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityState {
    pub c_plus: Complex64,
    pub c_minus: Complex64,
}

impl CavityState {
    pub fn new(c_plus: Complex64, c_minus: Complex64) -> Self {
        CavityState { c_plus, c_minus }
    }

    pub fn vacuum() -> Self {
        CavityState {
            c_plus: Complex64::new(0.0, 0.0),
            c_minus: Complex64::new(0.0, 0.0),
        }
    }

    /// Frozen-spin steady state of both modes at spin projection `s_k`.
    pub fn steady(p: &SystemParams, s_k: f64) -> Self {
        let css = |delta_eff: f64, eta: f64| {
            p.kappa * eta / Complex64::new(p.kappa, -delta_eff)
        };
        CavityState {
            c_plus: css(p.delta_eff_plus(s_k), p.eta_plus()),
            c_minus: css(p.delta_eff_minus(s_k), p.eta_minus()),
        }
    }

    pub fn n_plus(&self) -> f64 {
        self.c_plus.norm_sqr()
    }

    pub fn n_minus(&self) -> f64 {
        self.c_minus.norm_sqr()
    }
}

/// Omega_eff = Omega_L b + Omega_c (n+ - n-) k.
pub fn effective_field(p: &SystemParams, n_plus: f64, n_minus: f64) -> EffectiveField {
    p.omega_l * p.b + Vector3::new(0.0, 0.0, p.omega_cpl * (n_plus - n_minus))
}

/// dS/dt = S x Omega_eff.
pub fn spin_drift(spin: &SpinState, field: &EffectiveField) -> Vector3<f64> {
    spin.cross(field)
}

/// Deterministic cavity drift for both polarization modes at spin projection
/// `s_k`; noise is handled by the integrator, not here.
pub fn cavity_drift(
    p: &SystemParams,
    c: &CavityState,
    s_k: f64,
    eta_plus: f64,
    eta_minus: f64,
) -> (Complex64, Complex64) {
    let a_plus = Complex64::new(-p.kappa, p.delta_eff_plus(s_k));
    let a_minus = Complex64::new(-p.kappa, p.delta_eff_minus(s_k));
    (
        a_plus * c.c_plus + p.kappa * eta_plus,
        a_minus * c.c_minus + p.kappa * eta_minus,
    )
}

/// Mapping of the spin system onto the ideal optomechanical oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptomechAnalogue {
    /// Mechanical frequency omega_z = Omega_L (rad/s).
    pub omega_z: f64,
    /// Standard quantum limit for transverse spin, sqrt(S/2).
    pub ds_sql: f64,
    /// Harmonic-oscillator length, normalized to 1.
    pub z_ho: f64,
    /// Conjugate momentum scale, hbar/(2 z_ho) = 1/2.
    pub p_ho: f64,
    /// Coupling per unit photon imbalance, -Omega_c sqrt(S/2).
    pub g_om: f64,
    /// Equivalent mass hbar/(2 z_ho^2 omega_z).
    pub mass_equiv: f64,
}

/// Maps SystemParams onto the equivalent harmonic oscillator:
/// z -> -z_ho S_k / dS_sql, p -> p_ho S_j / dS_sql, omega_z = Omega_L.
pub fn analogy_map(p: &SystemParams) -> Result<OptomechAnalogue> {
    if p.omega_l <= 0.0 {
        return Err(Error::Domain(
            "Omega_L must be > 0 for an oscillator analogue".into(),
        ));
    }
    let z_ho = 1.0;
    Ok(OptomechAnalogue {
        omega_z: p.omega_l,
        ds_sql: (p.s_tot / 2.0).sqrt(),
        z_ho,
        p_ho: 0.5 / z_ho,
        g_om: -p.omega_cpl * (p.s_tot / 2.0).sqrt(),
        mass_equiv: 1.0 / (2.0 * z_ho * z_ho * p.omega_l),
    })
}

/// Integrates (a) the exact spin precession about the constant field
/// Omega_eff(delta_n) and (b) the mapped harmonic oscillator, and returns the
/// max over time of the deviation between mapped coordinates, relative to the
/// motion scale S*max(amplitude, tiny).
///
/// `amplitude` is the initial tilt (rad) of the spin from +i toward +k;
/// `delta_n` is a constant externally supplied photon imbalance. Both systems
/// are advanced by exact per-step updates so the residual reflects the model
/// difference (sphere vs line), not integrator error.
pub fn analogy_equivalence_check(
    p: &SystemParams,
    amplitude: f64,
    delta_n: f64,
    duration: f64,
    dt: f64,
) -> Result<f64> {
    let an = analogy_map(p)?;
    let field = effective_field(p, delta_n, 0.0);

    // spin on the sphere, tilted by `amplitude` from +i toward +k
    let mut spin: SpinState =
        p.s_tot * Vector3::new(amplitude.cos(), 0.0, amplitude.sin());

    // mapped oscillator: z = -z_ho S_k / dS_sql, p = p_ho S_j / dS_sql
    let mut z = -an.z_ho * spin.z / an.ds_sql;
    let mut mom = an.p_ho * spin.y / an.ds_sql;
    let m = an.mass_equiv;
    let f = an.g_om / an.z_ho; // force per unit photon imbalance
    let z_eq = f * delta_n / (m * an.omega_z * an.omega_z);

    let n_steps = (duration / dt).ceil() as usize;
    let scale = p.s_tot * amplitude.abs().max(1e-300);
    let mut max_dev: f64 = 0.0;
    let (cw, sw) = ((an.omega_z * dt).cos(), (an.omega_z * dt).sin());
    for _ in 0..n_steps {
        spin = rotate_about(&spin, &field, dt);
        // exact harmonic rotation about (z_eq, 0) in (z, p/(m w)) coordinates
        let u = z - z_eq;
        let v = mom / (m * an.omega_z);
        z = z_eq + u * cw + v * sw;
        mom = (v * cw - u * sw) * m * an.omega_z;

        let s_k_osc = -z * an.ds_sql / an.z_ho;
        let s_j_osc = mom * an.ds_sql / an.p_ho;
        let dev = ((spin.z - s_k_osc).powi(2) + (spin.y - s_j_osc).powi(2)).sqrt();
        max_dev = max_dev.max(dev / scale);
    }
    Ok(max_dev)
}

/// Rotates `v` under dv/dt = v x omega for time `dt` (Rodrigues formula about
/// the unit axis of `omega` by angle -|omega| dt). Exactly norm-preserving.
pub fn rotate_about(v: &Vector3<f64>, omega: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    let w = omega.norm();
    if w == 0.0 || dt == 0.0 {
        return *v;
    }
    let axis = omega / w;
    let angle = -w * dt;
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v)) * (1.0 - c)
}
