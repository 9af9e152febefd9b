//! Thin wrappers around rustfft used by the ringdown and spectral estimators.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub fn fft_forward(data: &mut [Complex64]) {
    FftPlanner::new()
        .plan_fft_forward(data.len())
        .process(data);
}

pub fn fft_inverse_normalized(data: &mut [Complex64]) {
    let n = data.len();
    FftPlanner::new().plan_fft_inverse(n).process(data);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Discrete analytic signal of a real series via the FFT construction:
/// zero the negative frequencies, double the positive ones.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // DC and Nyquist stay
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft_inverse_normalized(&mut buf);
    buf
}
