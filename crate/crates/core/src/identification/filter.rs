//! Zero-phase second-order Butterworth low-pass and finite differences.

use std::f64::consts::SQRT_2;

/// Biquad coefficients (b0, b1, b2, a1, a2) with a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform Butterworth with prewarped cutoff. Needs 0 < fc < fs/2.
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_hz: f64) -> Option<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_hz) {
            return None;
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_hz).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Some(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        })
    }

    /// Direct form II transposed, started in steady state for the first sample.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut z0 = (1.0 - b0) * x0;
        let mut z1 = (b2 - a2) * x0;
        x.iter()
            .map(|&xn| {
                let y = b0 * xn + z0;
                z0 = b1 * xn - a1 * y + z1;
                z1 = b2 * xn - a2 * y;
                y
            })
            .collect()
    }

    /// Forward-backward filtering with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = 9.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.run(&ext);
        y.reverse();
        let mut y = self.run(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Central first and second differences; one-sided at the ends.
pub fn differentiate(x: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    if n < 3 {
        return (d1, d2);
    }
    for i in 1..n - 1 {
        d1[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
        d2[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / (dt * dt);
    }
    d1[0] = (x[1] - x[0]) / dt;
    d1[n - 1] = (x[n - 1] - x[n - 2]) / dt;
    d2[0] = d2[1];
    d2[n - 1] = d2[n - 2];
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_dc_gain_and_constant_passthrough() {
        let f = Biquad::butterworth_lowpass(10.0, 100.0).unwrap();
        let s: f64 = f.b.iter().sum::<f64>() / (1.0 + f.a[0] + f.a[1]);
        assert!((s - 1.0).abs() < 1e-14);
        let y = f.filtfilt(&[2.5; 40]);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn half_power_at_cutoff() {
        // |H(e^{jωT})|² = 1/2 at the cutoff for the prewarped design.
        let (fc, fs) = (10.0, 100.0);
        let f = Biquad::butterworth_lowpass(fc, fs).unwrap();
        let w = 2.0 * std::f64::consts::PI * fc / fs;
        let z = |k: f64| (k * w).cos();
        let zs = |k: f64| (k * w).sin();
        let num = (f.b[0] + f.b[1] * z(1.0) + f.b[2] * z(2.0)).powi(2) + (f.b[1] * zs(1.0) + f.b[2] * zs(2.0)).powi(2);
        let den = (1.0 + f.a[0] * z(1.0) + f.a[1] * z(2.0)).powi(2) + (f.a[0] * zs(1.0) + f.a[1] * zs(2.0)).powi(2);
        assert!((num / den - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_cutoff_above_nyquist() {
        assert!(Biquad::butterworth_lowpass(60.0, 100.0).is_none());
        assert!(Biquad::butterworth_lowpass(0.0, 100.0).is_none());
    }

    #[test]
    fn differences_of_a_quadratic_are_exact_inside() {
        let dt = 0.01;
        let x: Vec<f64> = (0..20).map(|i| 3.0 * (i as f64 * dt).powi(2)).collect();
        let (d1, d2) = differentiate(&x, dt);
        for i in 1..19 {
            assert!((d1[i] - 6.0 * i as f64 * dt).abs() < 1e-9);
            assert!((d2[i] - 6.0).abs() < 1e-8);
        }
    }
}
