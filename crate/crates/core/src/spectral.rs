//! Periodic grid utilities on [0, 2π): differentiation, interpolation, quadrature.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Fourier modes below this fraction of the largest are treated as round-off.
const MODE_CUTOFF: f64 = 1e-13;

/// Derivative of uniformly sampled periodic data by FFT.
pub fn spectral_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut buf);
    let largest = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for (k, c) in buf.iter_mut().enumerate() {
        let wavenumber = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        if c.norm() <= MODE_CUTOFF * largest {
            *c = Complex::new(0.0, 0.0);
        } else {
            *c *= Complex::new(0.0, wavenumber);
        }
    }
    inverse.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Second-order central differences on the periodic grid.
pub fn central_difference(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = TAU / n as f64;
    (0..n)
        .map(|i| (values[(i + 1) % n] - values[(i + n - 1) % n]) / (2.0 * h))
        .collect()
}

/// Uniform grid of `n` phases in [0, 2π).
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

/// Trapezoid rule for the mean over one period, i.e. ∫ f dθ / 2π.
pub fn periodic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Wraps an angle into [0, 2π).
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Periodic cubic Hermite interpolation from nodal values and derivatives.
#[inline]
pub fn periodic_hermite(values: &[f64], derivs: &[f64], theta: f64) -> f64 {
    let n = values.len();
    let h = TAU / n as f64;
    let u = wrap_phase(theta) / h;
    let i = (u.floor() as usize).min(n - 1);
    let s = u - i as f64;
    let j = (i + 1) % n;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * values[i]
        + (s3 - 2.0 * s2 + s) * h * derivs[i]
        + (-2.0 * s3 + 3.0 * s2) * values[j]
        + (s3 - s2) * h * derivs[j]
}
