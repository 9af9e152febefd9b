//! Static spin-cavity configurations: fixed points of the coupled system,
//! stability classification, the cavity feedback coefficient lambda, and
//! quasi-static hysteresis sweeps over probe detuning.
//!
//! The spin is parameterized as S = S (i sin(theta0) + k cos(theta0)) with
//! theta0 in (0,pi) U (pi,2pi); staticity requires S parallel to Omega_eff,
//! which for b = i confines fixed points to the i-k plane. Orientations with
//! the spin out of that plane are excluded by construction.

use crate::error::{Error, Result};
use crate::model::SystemParams;
use std::f64::consts::PI;

/// Default number of scan points per half-interval of theta0.
pub const DEFAULT_GRID_N: usize = 4096;
/// Branch-following capture radius (rad) for quasi-static sweeps.
pub const DEFAULT_CAPTURE_RADIUS: f64 = 0.2;
/// Bisection convergence: |d theta0| below this is converged.
const THETA_TOL: f64 = 1e-12;

/// A static configuration of the coupled spin-cavity system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    /// Polar angle of the spin from the cavity axis k (rad).
    pub theta0: f64,
    /// Static photon numbers.
    pub n_plus: f64,
    pub n_minus: f64,
    /// Feedback coefficient lambda = Omega_c d(n+ - n-)/dS_k (rad/s per hbar-spin).
    pub lambda: f64,
    /// sgn(sin theta0), +1 or -1.
    pub alpha: f64,
    /// Static stability per alpha*lambda <= Omega_L |csc^3 theta0| / S.
    pub stable: bool,
    /// Within 1e-9 Omega_L of the stability threshold (reported unstable).
    pub marginal: bool,
    /// Fixed-point equation residual at theta0 (rad/s).
    pub residual_value: f64,
}

impl FixedPoint {
    /// Spin projection on the cavity axis at this configuration.
    pub fn s_k(&self, p: &SystemParams) -> f64 {
        p.s_tot * self.theta0.cos()
    }
}

/// Static photon numbers n± at spin angle theta0:
/// n± = nmax± / [1 + (Dp± ± Omega_c S cos(theta0))^2 / kappa^2].
pub fn photon_numbers_static(p: &SystemParams, theta0: f64) -> (f64, f64) {
    let s_k = p.s_tot * theta0.cos();
    let lor = |nmax: f64, delta: f64| nmax / (1.0 + (delta / p.kappa).powi(2));
    (
        lor(p.nmax_plus, p.delta_eff_plus(s_k)),
        lor(p.nmax_minus, p.delta_eff_minus(s_k)),
    )
}

/// Fixed-point equation residual Omega_c (n+ - n-) - Omega_L cot(theta0);
/// zero iff theta0 is a fixed point.
pub fn residual(p: &SystemParams, theta0: f64) -> Result<f64> {
    let s = theta0.sin();
    if s == 0.0 {
        return Err(Error::Domain(
            "theta0 in {0, pi} has no static solution (cot singular)".into(),
        ));
    }
    let (n_plus, n_minus) = photon_numbers_static(p, theta0);
    Ok(p.omega_cpl * (n_plus - n_minus) - p.omega_l * theta0.cos() / s)
}

/// Closed-form lambda = Omega_c d(n+ - n-)/dS_k at S_k = S cos(theta0).
///
/// With D± = Dp± ± Omega_c S_k and L± = 1 + D±^2/kappa^2:
///   dn+/dS_k = -2 nmax+ D+ Omega_c / (kappa^2 L+^2)
///   dn-/dS_k = +2 nmax- D- Omega_c / (kappa^2 L-^2)
/// so lambda = -(2 Omega_c^2/kappa^2) [nmax+ D+/L+^2 + nmax- D-/L-^2].
pub fn lambda_response(p: &SystemParams, theta0: f64) -> f64 {
    let s_k = p.s_tot * theta0.cos();
    let k2 = p.kappa * p.kappa;
    let term = |nmax: f64, delta: f64| {
        let l = 1.0 + delta * delta / k2;
        nmax * delta / (l * l)
    };
    -(2.0 * p.omega_cpl * p.omega_cpl / k2)
        * (term(p.nmax_plus, p.delta_eff_plus(s_k)) + term(p.nmax_minus, p.delta_eff_minus(s_k)))
}

/// Stability of a candidate fixed point per the static criterion:
/// unstable when alpha*lambda > Omega_L |csc^3 theta0| / S. Marginal cases
/// (within 1e-9 Omega_L of the threshold) are reported unstable with the
/// `marginal` flag set.
pub fn classify(p: &SystemParams, theta0: f64, lambda: f64) -> (bool, bool) {
    let alpha = theta0.sin().signum();
    let threshold = p.omega_l / (theta0.sin().abs().powi(3) * p.s_tot);
    let margin = 1e-9 * p.omega_l.abs();
    let excess = alpha * lambda - threshold;
    if excess.abs() < margin {
        (false, true)
    } else {
        (excess < 0.0, false)
    }
}

fn make_fixed_point(p: &SystemParams, theta0: f64) -> FixedPoint {
    let (n_plus, n_minus) = photon_numbers_static(p, theta0);
    let lambda = lambda_response(p, theta0);
    let (stable, marginal) = classify(p, theta0, lambda);
    FixedPoint {
        theta0,
        n_plus,
        n_minus,
        lambda,
        alpha: theta0.sin().signum(),
        stable,
        marginal,
        residual_value: residual(p, theta0).unwrap_or(f64::NAN),
    }
}

/// Scans theta0 over (0,pi) U (pi,2pi) on a uniform grid of `grid_n` points
/// per half-interval, brackets sign changes of the residual, refines each by
/// bisection to |d theta0| < 1e-12 rad, and returns all roots sorted by
/// theta0 with lambda, alpha and stability filled in.
pub fn find_fixed_points(p: &SystemParams, grid_n: usize) -> Result<Vec<FixedPoint>> {
    if !p.b_is_i() {
        return Err(Error::UnsupportedConfiguration(
            "fixed-point analysis requires b = i".into(),
        ));
    }
    if grid_n < 1000 {
        return Err(Error::Domain("grid_n must be >= 1000".into()));
    }
    let mut roots = Vec::new();
    for half in 0..2 {
        let lo = half as f64 * PI;
        // stay off the cot poles; the residual diverges there so no roots hide
        // between the margin and the pole
        let eps = PI * 1e-9;
        let a = lo + eps;
        let b = lo + PI - eps;
        let step = (b - a) / (grid_n - 1) as f64;
        let mut prev_theta = a;
        let mut prev_res = residual(p, prev_theta)?;
        for i in 1..grid_n {
            let theta = a + step * i as f64;
            let res = residual(p, theta)?;
            if prev_res == 0.0 {
                roots.push(prev_theta);
            } else if prev_res * res < 0.0 {
                roots.push(bisect(p, prev_theta, theta, prev_res));
            }
            prev_theta = theta;
            prev_res = res;
        }
        if prev_res == 0.0 {
            roots.push(prev_theta);
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 10.0 * THETA_TOL);
    Ok(roots.into_iter().map(|t| make_fixed_point(p, t)).collect())
}

fn bisect(p: &SystemParams, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    while hi - lo > THETA_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = residual(p, mid).unwrap();
        if f_mid == 0.0 {
            return mid;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    0.5 * (lo + hi)
}

/// Direction of a quasi-static detuning sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

/// Options for quasi-static sweeps.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Branch-following capture radius (rad).
    pub capture_radius: f64,
    /// Scan density for the per-step fixed-point solve.
    pub grid_n: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            capture_radius: DEFAULT_CAPTURE_RADIUS,
            grid_n: DEFAULT_GRID_N,
        }
    }
}

/// Result of a quasi-static hysteresis sweep.
#[derive(Debug, Clone)]
pub struct BranchTrace {
    /// Sweep grid of probe detunings (rad/s), both polarizations together.
    pub detunings: Vec<f64>,
    /// Selected fixed point at each grid step.
    pub points: Vec<FixedPoint>,
    /// Indices where branch switching (a capture-radius jump) occurred.
    pub jumps: Vec<usize>,
}

impl BranchTrace {
    /// Detunings at which |n+ - n-| first crosses `threshold` photons, scanning
    /// in sweep order. Detects both discontinuous jumps and the continuous
    /// symmetry-breaking (birefringence) transitions of Fig. 2(b)-style sweeps.
    pub fn birefringence_onsets(&self, threshold: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut above = false;
        for (i, fp) in self.points.iter().enumerate() {
            let split = (fp.n_plus - fp.n_minus).abs() > threshold;
            if split && !above {
                out.push(self.detunings[i]);
            }
            above = split;
        }
        out
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Quasi-static sweep of the linear-polarization probe detuning
/// (Dp+ = Dp- = Dp over `detuning_grid`). At each step the stable fixed point
/// nearest in theta0 to the previously selected one is followed; if none lies
/// within the capture radius the trace jumps to the stable fixed point closest
/// to theta0 = 0 and records a jump marker.
pub fn quasistatic_sweep(
    p: &SystemParams,
    detuning_grid: &[f64],
    direction: SweepDirection,
    start_theta: f64,
    opts: &SweepOptions,
) -> Result<BranchTrace> {
    if detuning_grid.len() < 2 {
        return Err(Error::Domain("sweep grid needs at least 2 points".into()));
    }
    let monotone_up = detuning_grid.windows(2).all(|w| w[1] > w[0]);
    let monotone_down = detuning_grid.windows(2).all(|w| w[1] < w[0]);
    match direction {
        SweepDirection::Up if !monotone_up => {
            return Err(Error::Domain("up sweep requires increasing grid".into()))
        }
        SweepDirection::Down if !monotone_down => {
            return Err(Error::Domain("down sweep requires decreasing grid".into()))
        }
        _ => {}
    }

    let mut points = Vec::with_capacity(detuning_grid.len());
    let mut jumps = Vec::new();
    let mut current: Option<f64> = None;
    for (i, &dp) in detuning_grid.iter().enumerate() {
        let mut pp = *p;
        pp.delta_p_plus = dp;
        pp.delta_p_minus = dp;
        let fps = find_fixed_points(&pp, opts.grid_n)?;
        let stable: Vec<&FixedPoint> = fps.iter().filter(|f| f.stable).collect();
        if stable.is_empty() {
            return Err(Error::NoStableFixedPoint { detuning: dp });
        }
        let reference = current.unwrap_or(start_theta);
        let nearest = stable
            .iter()
            .min_by(|x, y| {
                angular_distance(x.theta0, reference)
                    .partial_cmp(&angular_distance(y.theta0, reference))
                    .unwrap()
            })
            .unwrap();
        let selected = if current.is_some()
            && angular_distance(nearest.theta0, reference) > opts.capture_radius
        {
            jumps.push(i);
            stable
                .iter()
                .min_by(|x, y| {
                    angular_distance(x.theta0, 0.0)
                        .partial_cmp(&angular_distance(y.theta0, 0.0))
                        .unwrap()
                })
                .unwrap()
        } else {
            nearest
        };
        current = Some(selected.theta0);
        points.push(**selected);
    }
    Ok(BranchTrace {
        detunings: detuning_grid.to_vec(),
        points,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fig2(dp: f64) -> SystemParams {
        SystemParams::new(3.3e-2, 1.25e-3, 1.0, dp, dp, 15.0, 15.0, 10000.0).unwrap()
    }

    #[test]
    fn photon_numbers_at_equator() {
        let p = fig2(-4.8);
        let (np, nm) = photon_numbers_static(&p, FRAC_PI_2);
        let expect = 15.0 / (1.0 + 4.8 * 4.8);
        assert_relative_eq!(np, expect, max_relative = 1e-14);
        assert_relative_eq!(nm, expect, max_relative = 1e-14);
    }

    #[test]
    fn photon_numbers_on_resonance() {
        // Dp+ = -Omega_c S cos(theta0) puts sigma+ exactly on resonance
        let theta0 = 1.0f64;
        let mut p = fig2(0.0);
        p.delta_p_plus = -p.omega_cpl * p.s_tot * theta0.cos();
        let (np, _) = photon_numbers_static(&p, theta0);
        assert_relative_eq!(np, p.nmax_plus, max_relative = 1e-14);
    }

    #[test]
    fn residual_symmetry_and_bare_cases() {
        let p = fig2(-2.0);
        // symmetric drive at the equator: n+ = n- and cot = 0
        assert_abs_diff_eq!(residual(&p, FRAC_PI_2).unwrap(), 0.0, epsilon = 1e-18);

        let mut p0 = p;
        p0.omega_cpl = 0.0;
        assert_abs_diff_eq!(residual(&p0, FRAC_PI_2).unwrap(), 0.0);
        let r = residual(&p0, 1.0).unwrap();
        assert_relative_eq!(r, -p0.omega_l / 1.0f64.tan(), max_relative = 1e-14);

        assert!(residual(&p, 0.0).is_err());
        assert!(residual(&p, PI).is_err());
    }

    #[test]
    fn bare_precession_has_two_roots() {
        let mut p = fig2(-1.0);
        p.omega_cpl = 0.0;
        let fps = find_fixed_points(&p, 4096).unwrap();
        assert_eq!(fps.len(), 2);
        assert_abs_diff_eq!(fps[0].theta0, FRAC_PI_2, epsilon = 1e-10);
        assert_abs_diff_eq!(fps[1].theta0, 3.0 * FRAC_PI_2, epsilon = 1e-10);
        assert!(fps.iter().all(|f| f.stable));
        assert!(fps.iter().all(|f| f.lambda == 0.0));
    }

    #[test]
    fn symmetric_drive_keeps_equator_roots() {
        let p = fig2(-0.5);
        let fps = find_fixed_points(&p, 4096).unwrap();
        assert!(fps
            .iter()
            .any(|f| (f.theta0 - FRAC_PI_2).abs() < 1e-9));
        assert!(fps
            .iter()
            .any(|f| (f.theta0 - 3.0 * FRAC_PI_2).abs() < 1e-9));
    }

    #[test]
    fn fig2_fixed_point_structure_at_minus_4p8() {
        // dense-scan oracle regression: exactly 6 roots, 4 stable / 2 unstable
        let p = fig2(-4.8);
        let fps = find_fixed_points(&p, 8192).unwrap();
        assert_eq!(fps.len(), 6);
        let expected = [
            (1.13656021, true),
            (1.24556630, false),
            (FRAC_PI_2, true),
            (1.89602636, false),
            (2.00503244, true),
            (3.0 * FRAC_PI_2, true),
        ];
        for (fp, (theta, stable)) in fps.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(fp.theta0, theta, epsilon = 1e-6);
            assert_eq!(fp.stable, *stable, "stability at theta0 = {}", fp.theta0);
        }
        assert!(fps.iter().all(|f| f.residual_value.abs() < 1e-9 * p.omega_l));
    }

    #[test]
    fn lambda_closed_form_matches_finite_differences() {
        // 100 random draws, relative 1e-8 against central differences
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let p = SystemParams::new(
                0.01 + next(),
                0.01 * (next() - 0.5),
                0.5 + 2.0 * next(),
                6.0 * (next() - 0.5),
                6.0 * (next() - 0.5),
                25.0 * next(),
                25.0 * next(),
                100.0 + 1e4 * next(),
            )
            .unwrap();
            let theta0 = 0.2 + 2.7 * next();
            let lam = lambda_response(&p, theta0);

            let s_k0 = p.s_tot * theta0.cos();
            let h = 1e-4 * p.s_tot;
            let dn = |s_k: f64| {
                let lor = |nmax: f64, d: f64| nmax / (1.0 + (d / p.kappa).powi(2));
                lor(p.nmax_plus, p.delta_p_plus + p.omega_cpl * s_k)
                    - lor(p.nmax_minus, p.delta_p_minus - p.omega_cpl * s_k)
            };
            let fd = p.omega_cpl * (dn(s_k0 + h) - dn(s_k0 - h)) / (2.0 * h);
            let scale = lam.abs().max(1e-30);
            assert!(
                (lam - fd).abs() / scale < 1e-6 || (lam - fd).abs() < 1e-18,
                "lambda {lam} vs fd {fd}"
            );
        }
    }

    #[test]
    fn lambda_closed_form_tight_at_fig2_point() {
        // relative 1e-8 with the well-conditioned Fig. 2 parameters
        let p = fig2(-4.8);
        for theta0 in [0.9, 1.2, FRAC_PI_2, 2.0, 4.9] {
            let lam = lambda_response(&p, theta0);
            let s_k0 = p.s_tot * theta0.cos();
            let h = 1e-4 * p.s_tot;
            let dn = |s_k: f64| {
                let lor = |nmax: f64, d: f64| nmax / (1.0 + (d / p.kappa).powi(2));
                lor(p.nmax_plus, p.delta_p_plus + p.omega_cpl * s_k)
                    - lor(p.nmax_minus, p.delta_p_minus - p.omega_cpl * s_k)
            };
            let fd = p.omega_cpl * (dn(s_k0 + h) - dn(s_k0 - h)) / (2.0 * h);
            // central differences carry an O(h^2 f''') truncation term; with
            // these scales that is ~1e-8 relative
            assert_relative_eq!(lam, fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn lambda_zero_cases() {
        let mut p = fig2(-4.8);
        p.omega_cpl = 0.0;
        assert_eq!(lambda_response(&p, 1.0), 0.0);

        // a mode exactly on resonance contributes nothing (Lorentzian extremum)
        let p2 = fig2(0.0);
        let theta0 = FRAC_PI_2;
        let lam = lambda_response(&p2, theta0);
        assert_abs_diff_eq!(lam, 0.0, epsilon = 1e-30);
    }

    #[test]
    fn classify_threshold_cases() {
        let p = fig2(-4.8);
        let theta0 = 1.1;
        let (stable, marginal) = classify(&p, theta0, 0.0);
        assert!(stable && !marginal);

        let threshold = p.omega_l / (theta0.sin().abs().powi(3) * p.s_tot);
        let (stable2, _) = classify(&p, theta0, 2.0 * threshold);
        assert!(!stable2);

        // exactly at threshold: conservative, reported unstable + marginal
        let (stable3, marginal3) = classify(&p, theta0, threshold);
        assert!(!stable3 && marginal3);
    }

    #[test]
    fn mirror_symmetry_of_fixed_point_set() {
        // swapping (Dp+, nmax+) with (Dp-, nmax-) maps theta0 -> pi - theta0
        // (mod 2pi) with identical lambda and stability flags
        let p = SystemParams::new(0.04, -1.8e-3, 1.0, -3.1, 0.7, 11.0, 4.0, 8000.0).unwrap();
        let mut q = p;
        std::mem::swap(&mut q.delta_p_plus, &mut q.delta_p_minus);
        std::mem::swap(&mut q.nmax_plus, &mut q.nmax_minus);

        let fp_p = find_fixed_points(&p, 8192).unwrap();
        let fp_q = find_fixed_points(&q, 8192).unwrap();
        assert_eq!(fp_p.len(), fp_q.len());
        for f in &fp_p {
            let mirrored = (PI - f.theta0).rem_euclid(2.0 * PI);
            let partner = fp_q
                .iter()
                .min_by(|x, y| {
                    angular_distance(x.theta0, mirrored)
                        .partial_cmp(&angular_distance(y.theta0, mirrored))
                        .unwrap()
                })
                .unwrap();
            assert_abs_diff_eq!(
                angular_distance(partner.theta0, mirrored),
                0.0,
                epsilon = 1e-8
            );
            assert_relative_eq!(partner.lambda, f.lambda, max_relative = 1e-6);
            assert_eq!(partner.stable, f.stable);
            assert_relative_eq!(partner.n_plus, f.n_minus, max_relative = 1e-8);
            assert_relative_eq!(partner.n_minus, f.n_plus, max_relative = 1e-8);
        }
    }

    #[test]
    fn sweep_without_coupling_is_flat() {
        let mut p = fig2(0.0);
        p.omega_cpl = 0.0;
        let grid: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let trace =
            quasistatic_sweep(&p, &grid, SweepDirection::Up, FRAC_PI_2, &SweepOptions::default())
                .unwrap();
        assert!(trace.jumps.is_empty());
        for (fp, &dp) in trace.points.iter().zip(&grid) {
            assert_abs_diff_eq!(fp.theta0, FRAC_PI_2, epsilon = 1e-9);
            let bare = p.nmax_plus / (1.0 + dp * dp);
            assert_relative_eq!(fp.n_plus, bare, max_relative = 1e-9);
        }
    }

    #[test]
    fn fig2_upward_sweep_jumps_near_minus_2p8() {
        let p = fig2(0.0);
        let n = 351;
        let grid: Vec<f64> = (0..n).map(|i| -6.0 + 7.0 * i as f64 / (n - 1) as f64).collect();
        let trace =
            quasistatic_sweep(&p, &grid, SweepDirection::Up, FRAC_PI_2, &SweepOptions::default())
                .unwrap();
        assert_eq!(trace.jumps.len(), 1);
        let jump_dp = trace.detunings[trace.jumps[0]];
        // regression pin from the dense-scan oracle (threshold at -2.82)
        assert_abs_diff_eq!(jump_dp, -2.80, epsilon = 0.03);
        // jump lands on the stable branch closer to theta0 = 0
        let after = trace.points[trace.jumps[0]];
        assert!(after.theta0 < FRAC_PI_2);
    }

    #[test]
    fn fig2_downward_sweep_breaks_symmetry_near_zero() {
        let p = fig2(0.0);
        let n = 351;
        let grid: Vec<f64> = (0..n).map(|i| 1.0 - 7.0 * i as f64 / (n - 1) as f64).collect();
        let trace = quasistatic_sweep(
            &p,
            &grid,
            SweepDirection::Down,
            FRAC_PI_2,
            &SweepOptions::default(),
        )
        .unwrap();
        // the downward transition is a continuous pitchfork: no capture-radius
        // jump fires, but the trace turns birefringent just below Dp = 0
        let onsets = trace.birefringence_onsets(1.0);
        assert!(!onsets.is_empty());
        assert!(
            onsets[0].abs() < 0.5,
            "downward symmetry breaking at {} should be within 0.5 kappa of 0",
            onsets[0]
        );
        // hysteresis: the down trace is tilted (birefringent) at -4.8 while the
        // up trace is symmetric there
        let i_m48 = grid.iter().position(|&d| (d + 4.8).abs() < 0.011).unwrap();
        assert!((trace.points[i_m48].n_plus - trace.points[i_m48].n_minus).abs() > 1.0);
    }

    #[test]
    fn sweep_errors_on_grid_direction_mismatch() {
        let p = fig2(0.0);
        let grid = vec![0.0, -1.0, -2.0];
        assert!(quasistatic_sweep(
            &p,
            &grid,
            SweepDirection::Up,
            FRAC_PI_2,
            &SweepOptions::default()
        )
        .is_err());
    }
}
