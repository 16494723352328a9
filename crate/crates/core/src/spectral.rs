//! Square 2D FFTs on periodic grids.
//!
//! Layout is row-major `values[ix * n + iy]`, `x = ix·L/n`. The forward
//! transform returns Fourier coefficients `c_k` normalised so that
//! `f(x) = Σ_k c_k e^{i k·x}`; the inverse is the plain synthesis sum.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub use rustfft::num_complex::Complex64 as Complex;

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for iy in 0..n {
            for ix in 0..n {
                col[ix] = data[ix * n + iy];
            }
            plan.process_with_scratch(&mut col, &mut scratch);
            for ix in 0..n {
                data[ix * n + iy] = col[ix];
            }
        }
    }

    /// Real samples to normalised coefficients.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data);
        data
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    /// Coefficients to real samples (imaginary part discarded).
    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, &self.inverse);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }
}

/// Signed integer wavenumber of FFT index `i` (Nyquist mapped to `+n/2`).
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Angular wavenumbers `2πk/L` per FFT index; Nyquist zeroed when
/// `zero_nyquist` (used for odd-order derivatives).
pub fn angular_wavenumbers(n: usize, side: f64, zero_nyquist: bool) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if zero_nyquist && n % 2 == 0 && i == n / 2 {
                0.0
            } else {
                2.0 * std::f64::consts::PI * signed_index(i, n) as f64 / side
            }
        })
        .collect()
}

/// Periodic cross-correlation `(K ⋆ g)(x) = Σ_j K[j] g[x + j]` for real `K`, `g`.
pub fn periodic_correlate(fft: &Fft2, kernel: &[f64], g: &[f64]) -> Vec<f64> {
    let n2 = (fft.n() * fft.n()) as f64;
    let kh = fft.forward_real(kernel);
    let gh = fft.forward_real(g);
    let prod: Vec<Complex64> = kh.iter().zip(&gh).map(|(k, g)| k.conj() * g * n2).collect();
    fft.inverse_real(&prod)
}
