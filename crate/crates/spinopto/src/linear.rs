//! Frequency-domain linear response about a fixed point: shifted precession
//! frequencies, optical spring, the delay (RWA) damping/amplification rate,
//! susceptibility, the intracavity field transfer coefficient, the real
//! state-space linearization, and the linear-theory noise spectrum.
//!
//! The state space is exact at linear order and is the production route for
//! noise spectra; the adiabatic-elimination susceptibility and field-transfer
//! formulas are implemented verbatim as cross-checks. Their detuning symbol is
//! resolved as the *effective* sigma+ detuning at the fixed point,
//! Dt = Dp+ + Omega_c S cos(theta0), which is what makes them consistent with
//! the state space and with time-domain simulation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::steady::FixedPoint;

/// Relative pole-proximity guard for the adiabatic-elimination formulas.
const POLE_EPS: f64 = 1e-9;

/// Linear-response quantities at a fixed point.
#[derive(Debug, Clone, Copy)]
pub struct LinearResponse {
    /// Static-shift precession frequency Omega_L' = Omega_L |csc theta0| (rad/s).
    pub omega_lp: f64,
    /// Optical spring k_S = -lambda Omega_L S sin(theta0) (rad^2/s^2).
    pub k_s: f64,
    /// Overall precession frequency Omega_L'' = sqrt(Omega_L'^2 + k_S) (rad/s).
    pub omega_lpp: f64,
    /// Cavity delay phase phi = Omega_L''/kappa (rad).
    pub phi_delay: f64,
    /// Delay-induced rate -alpha lambda S sin^2(theta0) sin(phi)/2 (1/s);
    /// negative = decay toward the fixed point, positive = growth.
    pub rwa_rate: f64,
    /// The underlying fixed point.
    pub fp: FixedPoint,
}

/// Evaluates the Eq.-(6)/(7) response quantities at a fixed point.
pub fn response_at(fp: &FixedPoint, p: &SystemParams) -> Result<LinearResponse> {
    let sin_t = fp.theta0.sin();
    let omega_lp = p.omega_l / sin_t.abs();
    let k_s = -fp.lambda * p.omega_l * p.s_tot * sin_t;
    let omega_lpp_sq = omega_lp * omega_lp + k_s;
    if omega_lpp_sq < 0.0 {
        return Err(Error::SpringInstability { value: omega_lpp_sq });
    }
    let omega_lpp = omega_lpp_sq.sqrt();
    let phi_delay = omega_lpp / p.kappa;
    let rwa_rate = -fp.alpha * fp.lambda * p.s_tot * sin_t * sin_t * phi_delay.sin() / 2.0;
    Ok(LinearResponse {
        omega_lp,
        k_s,
        omega_lpp,
        phi_delay,
        rwa_rate,
        fp: *fp,
    })
}

fn single_mode_guard(p: &SystemParams) -> Result<()> {
    if p.nmax_minus != 0.0 {
        return Err(Error::UnsupportedConfiguration(
            "adiabatic response formulas assume a single driven sigma+ mode".into(),
        ));
    }
    if p.nmax_plus <= 0.0 {
        return Err(Error::UnsupportedConfiguration(
            "sigma+ mode must be driven".into(),
        ));
    }
    Ok(())
}

/// R(omega), Gamma_o(omega) and the spin susceptibility chi(omega) of the
/// adiabatic-elimination treatment (single driven sigma+ mode).
pub fn response_functions(
    p: &SystemParams,
    fp: &FixedPoint,
    omega: f64,
) -> Result<(f64, f64, Complex64)> {
    single_mode_guard(p)?;
    let lr = response_at(fp, p)?;
    let dt_eff = p.delta_eff_plus(fp.s_k(p));
    let pole = p.kappa * p.kappa + dt_eff * dt_eff;
    let denom = pole - omega * omega;
    if denom.abs() < POLE_EPS * pole {
        return Err(Error::PoleProximity { omega });
    }
    let r = pole / denom;
    let gamma_o = 2.0 * p.kappa * (lr.omega_lp * lr.omega_lp - omega * omega) / denom;
    let chi_den = Complex64::new(
        lr.omega_lp * lr.omega_lp + lr.k_s * r - omega * omega,
        omega * gamma_o,
    );
    let chi = -lr.omega_lp * p.omega_cpl * fp.n_plus.sqrt() / chi_den;
    Ok((r, gamma_o, chi))
}

/// Complex coefficient A(omega) of the intracavity field fluctuation
/// transfer c+(omega) = A(omega) xi_A + i xi_P (single driven sigma+ mode).
pub fn field_transfer_eq9(p: &SystemParams, fp: &FixedPoint, omega: f64) -> Result<Complex64> {
    single_mode_guard(p)?;
    let lr = response_at(fp, p)?;
    let dt_eff = p.delta_eff_plus(fp.s_k(p));
    if dt_eff == 0.0 {
        return Err(Error::Domain(
            "field transfer undefined at zero effective detuning".into(),
        ));
    }
    let pole = p.kappa * p.kappa + dt_eff * dt_eff;
    let denom = pole - omega * omega;
    if denom.abs() < POLE_EPS * pole {
        return Err(Error::PoleProximity { omega });
    }
    let r = pole / denom;
    let gamma_o = 2.0 * p.kappa * (lr.omega_lp * lr.omega_lp - omega * omega) / denom;
    let common = lr.omega_lp * lr.omega_lp - omega * omega;
    let num = Complex64::new(common, ((p.kappa + omega) / dt_eff) * lr.k_s * r + omega * gamma_o);
    let den = Complex64::new(common + lr.k_s * r, omega * gamma_o);
    Ok(num / den)
}

/// Real state-space linearization about a fixed point.
///
/// State layout: field quadratures (X, Y) of each driven mode in the frame of
/// its steady phase, then the two transverse spin coordinates (u2 along j,
/// u3 along k_r = -cos(theta0) i + sin(theta0) k). Noise inputs are the
/// amplitude/phase white noises of each driven mode, injected with gain kappa.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub j: DMatrix<f64>,
    pub bn: DMatrix<f64>,
    pub driven_plus: bool,
    pub driven_minus: bool,
    pub fp: FixedPoint,
    pub params: SystemParams,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    fn spin_offset(&self) -> usize {
        2 * (self.driven_plus as usize + self.driven_minus as usize)
    }

    /// Row vector selecting the sigma+ quadrature at angle phi_q
    /// (phi_q = 0 is the amplitude quadrature).
    pub fn output_quadrature(&self, phi_q: f64) -> Result<DVector<f64>> {
        if !self.driven_plus {
            return Err(Error::UnsupportedConfiguration(
                "sigma+ mode is undriven; no output quadrature".into(),
            ));
        }
        let mut c = DVector::zeros(self.dim());
        c[0] = phi_q.cos();
        c[1] = phi_q.sin();
        Ok(c)
    }

    /// Copy with the spin-cavity coupling removed (coherent light through the
    /// same cavity at the same operating point): the baseline system.
    pub fn decoupled(&self) -> StateSpace {
        let mut out = self.clone();
        let s = self.spin_offset();
        for r in 0..s {
            out.j[(r, s)] = 0.0;
            out.j[(r, s + 1)] = 0.0;
        }
        for r in s..self.dim() {
            for c in 0..s {
                out.j[(r, c)] = 0.0;
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.j.clone().complex_eigenvalues().iter().copied().collect()
    }

    pub fn max_re_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the analytic Jacobian and noise-input matrix at a fixed point.
pub fn build_state_space(p: &SystemParams, fp: &FixedPoint) -> Result<StateSpace> {
    if !p.b_is_i() {
        return Err(Error::UnsupportedConfiguration(
            "state-space linearization requires b = i".into(),
        ));
    }
    let driven_plus = p.nmax_plus > 0.0;
    let driven_minus = p.nmax_minus > 0.0;
    let n_modes = driven_plus as usize + driven_minus as usize;
    let dim = 2 * n_modes + 2;
    let s_k = fp.s_k(p);
    let sin_t = fp.theta0.sin();
    let alpha = fp.alpha;
    let omega_lp = p.omega_l / sin_t.abs();

    let mut j = DMatrix::zeros(dim, dim);
    let mut bn = DMatrix::zeros(dim, 2 * n_modes);
    let su = 2 * n_modes; // u2 row
    let mut row = 0;
    if driven_plus {
        let dte = p.delta_eff_plus(s_k);
        let g = p.omega_cpl * fp.n_plus.sqrt() * sin_t;
        j[(row, row)] = -p.kappa;
        j[(row, row + 1)] = -dte;
        j[(row + 1, row)] = dte;
        j[(row + 1, row + 1)] = -p.kappa;
        j[(row + 1, su + 1)] = g;
        // spin force from delta n+ = 2 sqrt(n+) X+
        j[(su, row)] = -2.0 * p.s_tot * p.omega_cpl * sin_t * fp.n_plus.sqrt();
        bn[(row, 0)] = p.kappa;
        bn[(row + 1, 1)] = p.kappa;
        row += 2;
    }
    if driven_minus {
        let dte = p.delta_eff_minus(s_k);
        let g = -p.omega_cpl * fp.n_minus.sqrt() * sin_t;
        j[(row, row)] = -p.kappa;
        j[(row, row + 1)] = -dte;
        j[(row + 1, row)] = dte;
        j[(row + 1, row + 1)] = -p.kappa;
        j[(row + 1, su + 1)] = g;
        // delta n- enters the imbalance with opposite sign
        j[(su, row)] = 2.0 * p.s_tot * p.omega_cpl * sin_t * fp.n_minus.sqrt();
        let col = 2 * (driven_plus as usize);
        bn[(row, col)] = p.kappa;
        bn[(row + 1, col + 1)] = p.kappa;
    }
    j[(su, su + 1)] = alpha * omega_lp;
    j[(su + 1, su)] = -alpha * omega_lp;

    Ok(StateSpace {
        j,
        bn,
        driven_plus,
        driven_minus,
        fp: *fp,
        params: *p,
    })
}

/// Power vs (angular frequency, quadrature angle) in dB relative to the
/// coherent-light baseline.
#[derive(Debug, Clone)]
pub struct NoiseSpectrum {
    pub omega_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    /// phi-major: power_db[i_phi * omega_grid.len() + i_omega]
    pub power_db: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn power(&self, i_phi: usize, i_omega: usize) -> f64 {
        self.power_db[i_phi * self.omega_grid.len() + i_omega]
    }

    /// (omega, phi_q, dB) of the global minimum.
    pub fn min_point(&self) -> (f64, f64, f64) {
        let mut best = (0usize, 0usize, f64::INFINITY);
        for ip in 0..self.phi_grid.len() {
            for io in 0..self.omega_grid.len() {
                let v = self.power(ip, io);
                if v < best.2 {
                    best = (ip, io, v);
                }
            }
        }
        (self.omega_grid[best.1], self.phi_grid[best.0], best.2)
    }
}

fn quadrature_power_at(
    ss: &StateSpace,
    omega: f64,
    phis: &[f64],
) -> Result<Vec<f64>> {
    let dim = ss.dim();
    let m = DMatrix::from_fn(dim, dim, |r, c| {
        Complex64::new(-ss.j[(r, c)], if r == c { omega } else { 0.0 })
    });
    let b = ss.bn.map(|v| Complex64::new(v, 0.0));
    let lu = m.lu();
    let h = lu
        .solve(&b)
        .ok_or(Error::SingularResolvent { omega })?;
    // power in the phi quadrature: sum over independent inputs of |C H|^2
    Ok(phis
        .iter()
        .map(|&phi| {
            let (c0, c1) = (phi.cos(), phi.sin());
            (0..ss.bn.ncols())
                .map(|col| (h[(0, col)] * c0 + h[(1, col)] * c1).norm_sqr())
                .sum()
        })
        .collect())
}

fn check_grids(omega_grid: &[f64], phi_grid: &[f64]) -> Result<()> {
    if omega_grid.is_empty() || phi_grid.is_empty() {
        return Err(Error::Domain("empty spectrum grid".into()));
    }
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) || omega_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "omega grid must be strictly increasing and finite".into(),
        ));
    }
    Ok(())
}

/// Relative noise power of the sigma+ quadratures from the state space:
/// 10 log10(S_out / S_baseline) with the baseline the decoupled system.
pub fn noise_spectrum_linear(
    ss: &StateSpace,
    omega_grid: &[f64],
    phi_grid: &[f64],
) -> Result<NoiseSpectrum> {
    check_grids(omega_grid, phi_grid)?;
    ss.output_quadrature(0.0)?; // sigma+ must be driven
    let base = ss.decoupled();
    let columns: Vec<Vec<f64>> = omega_grid
        .par_iter()
        .map(|&omega| {
            let sig = quadrature_power_at(ss, omega, phi_grid)?;
            let bas = quadrature_power_at(&base, omega, phi_grid)?;
            sig.iter()
                .zip(&bas)
                .map(|(s, b)| {
                    if *b <= 0.0 {
                        Err(Error::Spectral("baseline power vanished".into()))
                    } else {
                        Ok(10.0 * (s / b).log10())
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n_om = omega_grid.len();
    let mut power_db = vec![0.0; n_om * phi_grid.len()];
    for (io, col) in columns.iter().enumerate() {
        for (ip, v) in col.iter().enumerate() {
            power_db[ip * n_om + io] = *v;
        }
    }
    Ok(NoiseSpectrum {
        omega_grid: omega_grid.to_vec(),
        phi_grid: phi_grid.to_vec(),
        power_db,
    })
}

/// Like [`noise_spectrum_linear`] but with signal and baseline powers averaged
/// over ±`half_width` around each grid point (`n_sub` sub-points), matching
/// the bin smearing of an averaged-periodogram estimate.
pub fn noise_spectrum_linear_binned(
    ss: &StateSpace,
    omega_grid: &[f64],
    phi_grid: &[f64],
    half_width: f64,
    n_sub: usize,
) -> Result<NoiseSpectrum> {
    check_grids(omega_grid, phi_grid)?;
    ss.output_quadrature(0.0)?;
    let base = ss.decoupled();
    let n_sub = n_sub.max(1);
    let columns: Vec<Vec<f64>> = omega_grid
        .par_iter()
        .map(|&omega| {
            let mut sig_acc = vec![0.0; phi_grid.len()];
            let mut bas_acc = vec![0.0; phi_grid.len()];
            for k in 0..n_sub {
                let f = if n_sub == 1 {
                    0.0
                } else {
                    (k as f64 / (n_sub - 1) as f64) * 2.0 - 1.0
                };
                let om = (omega + f * half_width).max(omega_grid[0] * 1e-3);
                let sig = quadrature_power_at(ss, om, phi_grid)?;
                let bas = quadrature_power_at(&base, om, phi_grid)?;
                for i in 0..phi_grid.len() {
                    sig_acc[i] += sig[i];
                    bas_acc[i] += bas[i];
                }
            }
            sig_acc
                .iter()
                .zip(&bas_acc)
                .map(|(s, b)| {
                    if *b <= 0.0 {
                        Err(Error::Spectral("baseline power vanished".into()))
                    } else {
                        Ok(10.0 * (s / b).log10())
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n_om = omega_grid.len();
    let mut power_db = vec![0.0; n_om * phi_grid.len()];
    for (io, col) in columns.iter().enumerate() {
        for (ip, v) in col.iter().enumerate() {
            power_db[ip * n_om + io] = *v;
        }
    }
    Ok(NoiseSpectrum {
        omega_grid: omega_grid.to_vec(),
        phi_grid: phi_grid.to_vec(),
        power_db,
    })
}
