//! Second-order Butterworth lowpass applied forward and backward.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};


use crate::error::{Error, Result};
use crate::record::RecordSet;

/// Default pre-filter cutoff, Hz.
pub const DEFAULT_CUTOFF_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
}

impl FilterSpec {
    pub const ORDER: usize = 2;

    pub fn new(cutoff_hz: f64) -> Self {
        FilterSpec { cutoff_hz }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::FilterSpec(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// Biquad in transposed direct form II.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Bilinear transform with prewarping, so |H| = 1/√2 exactly at the cutoff.
    fn butterworth_lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let k = (PI * cutoff_hz / sample_rate).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Biquad { b: [b0, 2.0 * b0, b0], a: [2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm] }
    }

    /// State that makes a constant input `x0` a steady state.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = (self.b[2] - self.a[1] * dc) * x0;
        let z1 = (self.b[1] - self.a[0] * dc) * x0 + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state(first);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Number of samples of odd reflection added at each end: three filter time
/// constants `1/(2π f_c)`, and never fewer than three per filter order.
fn pad_len(spec: &FilterSpec, sample_rate: f64, n: usize) -> usize {
    let tau_samples = sample_rate / (2.0 * PI * spec.cutoff_hz);
    let pad = ((3.0 * tau_samples).ceil() as usize).max(3 * (FilterSpec::ORDER + 1));
    pad.min(n.saturating_sub(1))
}

/// Zero-phase filtering of one series; output length equals input length.
pub fn filtfilt(x: &[f64], spec: &FilterSpec, sample_rate: f64) -> Result<Vec<f64>> {
    spec.validate(sample_rate)?;
    let n = x.len();
    if n < 2 {
        return Ok(x.to_vec());
    }
    let biquad = Biquad::butterworth_lowpass(spec.cutoff_hz, sample_rate);
    let pad = pad_len(spec, sample_rate, n);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    biquad.run(&mut ext);
    ext.reverse();
    biquad.run(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Applies [`filtfilt`] to every component of a record.
pub fn lowpass(rs: &RecordSet, spec: &FilterSpec) -> Result<RecordSet> {
    spec.validate(rs.sample_rate())?;
    let fs = rs.sample_rate();
    let mut failure = None;
    let out = rs.map_components(|_, c| match filtfilt(c, spec, fs) {
        Ok(v) => v,
        Err(e) => {
            failure = Some(e);
            c.to_vec()
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dc_passes_unchanged() {
        let x = vec![3.25; 400];
        let y = filtfilt(&x, &FilterSpec::new(DEFAULT_CUTOFF_HZ), 625.0).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(y.iter().all(|v| (v - 3.25).abs() < 1e-9));
    }

    #[test]
    fn cutoff_sinusoid_is_halved() {
        // Forward-backward gain is |H|^2 = 1/2 at the cutoff.
        let fs = 625.0;
        let fc = 50.0;
        let n = 6250;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * fc * i as f64 / fs).sin()).collect();
        let y = filtfilt(&x, &FilterSpec::new(fc), fs).unwrap();
        let trim = 500;
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let ratio = rms(&y[trim..n - trim]) / rms(&x[trim..n - trim]);
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn cutoff_at_or_above_nyquist_rejected() {
        assert!(matches!(filtfilt(&[1.0, 2.0], &FilterSpec::new(312.5), 625.0), Err(Error::FilterSpec(_))));
        assert!(matches!(filtfilt(&[1.0, 2.0], &FilterSpec::new(0.0), 625.0), Err(Error::FilterSpec(_))));
    }

    #[test]
    fn magnitude_at_cutoff_is_half_power() {
        let bq = Biquad::butterworth_lowpass(50.0, 625.0);
        let w = 2.0 * PI * 50.0 / 625.0;
        let z = num_complex::Complex64::new(w.cos(), -w.sin());
        let num = bq.b[0] + bq.b[1] * z + bq.b[2] * z * z;
        let den = 1.0 + bq.a[0] * z + bq.a[1] * z * z;
        assert!(((num / den).norm_sqr() - 0.5).abs() < 1e-12);
    }
}
