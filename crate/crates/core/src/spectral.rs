//! Cross-spectral density matrices and their estimators.
//!
//! All matrices use a two-sided density in (units)²·s/rad stored on the
//! non-negative half of the frequency grid, `ω_k = k·Δω`. The negative half is
//! implied by Hermitian symmetry, `S(−ω) = S(ω)ᴴ`. Periodograms are
//! `D_ij = X_i · conj(X_j) · Δt / (2π W)` with `X` the DFT of a windowed
//! segment and `W = Σ w²`, so that the symmetric spectral integral of the
//! diagonal reproduces the variance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::record::{mean, RecordSet};

/// Tolerance on `‖S − Sᴴ‖∞ / ‖S‖∞` per line.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on negative diagonal entries, relative to the line's largest entry.
pub const NEGATIVE_DIAG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window of length `m`.
    pub fn coefficients(self, m: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; m],
            Window::Hann => (0..m).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / m as f64).cos())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detrend {
    None,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sided {
    One,
    Two,
}

/// Welch segmenting and windowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchConfig {
    /// Samples per segment, `M`.
    pub segment_len: usize,
    /// Samples between segment starts, `Q`.
    pub shift: usize,
    pub window: Window,
    /// Transform length after zero padding; defaults to `segment_len`.
    pub nfft: Option<usize>,
    pub detrend: Detrend,
}

impl WelchConfig {
    /// Hann window with 50% overlap, the setting used for single-record spectra.
    pub fn typical(segment_len: usize) -> Self {
        WelchConfig { segment_len, shift: (segment_len / 2).max(1), window: Window::Hann, nfft: None, detrend: Detrend::Mean }
    }

    /// Rectangular window, no overlap: a plain averaged periodogram.
    pub fn rectangular(segment_len: usize) -> Self {
        WelchConfig { segment_len, shift: segment_len, window: Window::Rectangular, nfft: None, detrend: Detrend::Mean }
    }

    /// Builds a config from a segment length in seconds and an overlap fraction in `[0, 1)`.
    pub fn from_seconds(sample_rate: f64, segment_s: f64, overlap: f64, window: Window) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::Configuration(format!("overlap {overlap} must be in [0, 1)")));
        }
        let segment_len = (segment_s * sample_rate).round() as usize;
        if segment_len == 0 {
            return Err(Error::Configuration(format!("segment of {segment_s} s is shorter than one sample")));
        }
        let shift = (((1.0 - overlap) * segment_len as f64).round() as usize).max(1);
        Ok(WelchConfig { segment_len, shift, window, nfft: None, detrend: Detrend::Mean })
    }

    pub fn overlap(&self) -> f64 {
        1.0 - self.shift as f64 / self.segment_len as f64
    }

    pub fn fft_len(&self) -> usize {
        self.nfft.unwrap_or(self.segment_len)
    }

    /// `K = floor((n − M)/Q) + 1`, or 0 when the record is shorter than a segment.
    pub fn n_segments(&self, n_samples: usize) -> usize {
        if n_samples < self.segment_len || self.shift == 0 {
            0
        } else {
            (n_samples - self.segment_len) / self.shift + 1
        }
    }

    fn validate(&self, n_samples: usize) -> Result<()> {
        if self.segment_len == 0 || self.shift == 0 || self.shift > self.segment_len {
            return Err(Error::Configuration(format!(
                "need 1 <= shift ({}) <= segment length ({})",
                self.shift, self.segment_len
            )));
        }
        if self.fft_len() < self.segment_len {
            return Err(Error::Configuration(format!(
                "transform length {} shorter than segment {}",
                self.fft_len(),
                self.segment_len
            )));
        }
        if self.n_segments(n_samples) == 0 {
            return Err(Error::Configuration(format!(
                "segment of {} samples longer than signal of {n_samples}",
                self.segment_len
            )));
        }
        Ok(())
    }
}

/// Frequency-indexed `N×N` Hermitian matrix on the grid `ω_k = k·Δω`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsdMatrix {
    n: usize,
    d_omega: f64,
    values: Vec<Complex64>,
    sided: Sided,
    labels: Vec<String>,
}

impl CpsdMatrix {
    /// `values` are line-major, each line row-major `N×N`.
    pub fn new(labels: Vec<String>, d_omega: f64, values: Vec<Complex64>, sided: Sided) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Shape("spectral matrix needs at least one component".into()));
        }
        if !(d_omega > 0.0 && d_omega.is_finite()) {
            return Err(Error::Configuration(format!("frequency spacing {d_omega} must be positive")));
        }
        if values.len() % (n * n) != 0 {
            return Err(Error::Shape(format!("{} values do not form {n}x{n} lines", values.len())));
        }
        Ok(CpsdMatrix { n, d_omega, values, sided, labels })
    }

    pub fn zeros(labels: Vec<String>, d_omega: f64, n_lines: usize) -> Result<Self> {
        let n = labels.len();
        Self::new(labels, d_omega, vec![Complex64::new(0.0, 0.0); n * n * n_lines], Sided::Two)
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn n_lines(&self) -> usize {
        self.values.len() / (self.n * self.n)
    }

    /// Frequency spacing, rad/s.
    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn omega(&self, line: usize) -> f64 {
        line as f64 * self.d_omega
    }

    pub fn frequency_hz(&self, line: usize) -> f64 {
        self.omega(line) / (2.0 * PI)
    }

    pub fn line(&self, line: usize) -> &[Complex64] {
        let nn = self.n * self.n;
        &self.values[line * nn..(line + 1) * nn]
    }

    pub fn line_mut(&mut self, line: usize) -> &mut [Complex64] {
        let nn = self.n * self.n;
        &mut self.values[line * nn..(line + 1) * nn]
    }

    pub fn get(&self, line: usize, i: usize, j: usize) -> Complex64 {
        self.line(line)[i * self.n + j]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Auto-spectrum of component `i` (real part of the diagonal).
    pub fn psd(&self, i: usize) -> Vec<f64> {
        (0..self.n_lines()).map(|k| self.get(k, i, i).re).collect()
    }

    /// One-sided view for reporting: doubled away from DC. Two-sided input only.
    pub fn to_one_sided(&self) -> CpsdMatrix {
        let mut out = self.clone();
        if self.sided == Sided::Two {
            for k in 1..self.n_lines() {
                for z in out.line_mut(k) {
                    *z *= 2.0;
                }
            }
            out.sided = Sided::One;
        }
        out
    }

    /// Checks finiteness, Hermitian symmetry and non-negative diagonals on every line.
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(idx) = self.values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Construction(format!("non-finite spectral value at line {}", idx / (self.n * self.n))));
        }
        for k in 0..self.n_lines() {
            let dev = hermitian_deviation(self.line(k), self.n);
            if dev > HERMITIAN_TOL {
                return Err(Error::NonHermitian { line: k, deviation: dev });
            }
            let l = self.line(k);
            let scale = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for i in 0..self.n {
                if l[i * self.n + i].re < -NEGATIVE_DIAG_TOL * scale {
                    return Err(Error::Construction(format!(
                        "negative auto-spectrum {} for component {i} at line {k}",
                        l[i * self.n + i].re
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keeps lines `0..n_lines`.
    pub fn truncate_lines(&self, n_lines: usize) -> CpsdMatrix {
        let nn = self.n * self.n;
        let mut out = self.clone();
        out.values.truncate(n_lines.min(self.n_lines()) * nn);
        out
    }
}

/// `‖S − Sᴴ‖∞ / ‖S‖∞` for one row-major `n×n` line (0 for a zero line).
pub fn hermitian_deviation(line: &[Complex64], n: usize) -> f64 {
    let mut dev = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let a = line[i * n + j];
            scale = scale.max(a.norm());
            dev = dev.max((a - line[j * n + i].conj()).norm());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        dev / scale
    }
}

/// Index of the last grid line at or below `cutoff_hz`.
pub fn cutoff_line(d_omega: f64, cutoff_hz: f64) -> usize {
    let omega_c = 2.0 * PI * cutoff_hz;
    ((omega_c / d_omega) * (1.0 + 1e-12)).floor() as usize
}

/// Removes lines above `cutoff_hz`; the spacing is unchanged.
pub fn truncate_to_cutoff(s: &CpsdMatrix, cutoff_hz: f64) -> Result<CpsdMatrix> {
    if !(cutoff_hz >= 0.0) || s.n_lines() == 0 {
        return Err(Error::EmptySpectrum(format!("cutoff {cutoff_hz} Hz leaves no frequency lines")));
    }
    let last = cutoff_line(s.d_omega(), cutoff_hz).min(s.n_lines() - 1);
    Ok(s.truncate_lines(last + 1))
}

/// Trapezoid weights for the symmetric integral over `[−ω_L, ω_L]` of a
/// two-sided density stored on lines `0..=L`: `Δω·(1, 2, …, 2, 1)`.
pub fn symmetric_trapezoid_weights(n_lines: usize, d_omega: f64) -> Vec<f64> {
    let mut w = vec![2.0 * d_omega; n_lines];
    if let Some(first) = w.first_mut() {
        *first = d_omega;
    }
    if n_lines > 1 {
        w[n_lines - 1] = d_omega;
    }
    w
}

/// Running sum of cross-periodograms over segments sharing one transform length.
///
/// Real components are transformed two at a time, packed as the real and
/// imaginary parts of one complex sequence.
#[derive(Debug, Clone)]
pub struct CrossPeriodogram {
    n: usize,
    n_lines: usize,
    plan: FftPlan,
    window: Vec<f64>,
    detrend: Detrend,
    /// `Δt / (2π W)`
    scale: f64,
    sums: Vec<Complex64>,
    count: usize,
    /// `[component][line]` spectra of the latest segment.
    spectra: Vec<Complex64>,
    /// Scaled periodogram of the latest segment, `[line][i][j]`.
    latest: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl CrossPeriodogram {
    /// `n_lines` lines are retained (at most `nfft/2 + 1`).
    pub fn new(n: usize, window: &[f64], nfft: usize, dt: f64, detrend: Detrend, n_lines: usize) -> Self {
        let w_norm: f64 = window.iter().map(|w| w * w).sum();
        let n_lines = n_lines.min(nfft / 2 + 1);
        CrossPeriodogram {
            n,
            n_lines,
            plan: FftPlan::new(nfft),
            window: window.to_vec(),
            detrend,
            scale: dt / (2.0 * PI * w_norm),
            sums: vec![Complex64::new(0.0, 0.0); n * n * n_lines],
            count: 0,
            spectra: vec![Complex64::new(0.0, 0.0); n * n_lines],
            latest: vec![Complex64::new(0.0, 0.0); n * n * n_lines],
            work: vec![Complex64::new(0.0, 0.0); nfft],
        }
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn d_omega(&self, dt: f64) -> f64 {
        2.0 * PI / (self.plan.len() as f64 * dt)
    }

    fn load(&mut self, x: &[f64], imag: bool) {
        let offset = match self.detrend {
            Detrend::Mean => mean(x),
            Detrend::None => 0.0,
        };
        for (b, (&v, &w)) in self.work.iter_mut().zip(x.iter().zip(&self.window)) {
            if imag {
                b.im = (v - offset) * w;
            } else {
                *b = Complex64::new((v - offset) * w, 0.0);
            }
        }
    }

    /// Computes the scaled periodogram of one segment without adding it to the sums.
    /// `segment(i)` yields component `i`'s samples.
    pub fn periodogram<'a>(&mut self, segment: impl Fn(usize) -> &'a [f64]) -> &[Complex64] {
        let nfft = self.plan.len();
        let n_lines = self.n_lines;
        let mut i = 0;
        while i < self.n {
            let x = segment(i);
            for b in self.work.iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            self.load(x, false);
            let paired = i + 1 < self.n;
            if paired {
                self.load(segment(i + 1), true);
            }
            self.plan.forward(&mut self.work);
            for k in 0..n_lines {
                let z = self.work[k];
                let zc = self.work[(nfft - k) % nfft].conj();
                if paired {
                    self.spectra[i * n_lines + k] = (z + zc) * 0.5;
                    let d = (z - zc) * 0.5;
                    // (z - zc) / (2i)
                    self.spectra[(i + 1) * n_lines + k] = Complex64::new(d.im, -d.re);
                } else {
                    self.spectra[i * n_lines + k] = z;
                }
            }
            i += if paired { 2 } else { 1 };
        }
        let n = self.n;
        for k in 0..n_lines {
            let line = &mut self.latest[k * n * n..(k + 1) * n * n];
            for i in 0..n {
                let xi = self.spectra[i * n_lines + k];
                line[i * n + i] = Complex64::new(xi.norm_sqr() * self.scale, 0.0);
                for j in i + 1..n {
                    let d = xi * self.spectra[j * n_lines + k].conj() * self.scale;
                    line[i * n + j] = d;
                    line[j * n + i] = d.conj();
                }
            }
        }
        &self.latest
    }

    /// Adds the periodogram computed by the last call to [`Self::periodogram`].
    pub fn add_latest(&mut self) {
        for (s, l) in self.sums.iter_mut().zip(&self.latest) {
            *s += l;
        }
        self.count += 1;
    }

    /// Adds the periodogram of one segment.
    pub fn add_segment<'a>(&mut self, segment: impl Fn(usize) -> &'a [f64]) {
        self.periodogram(segment);
        self.add_latest();
    }

    /// Folds another accumulator with the same layout into this one.
    pub fn merge(&mut self, other: &CrossPeriodogram) -> Result<()> {
        if other.sums.len() != self.sums.len() || other.plan.len() != self.plan.len() {
            return Err(Error::Shape("merging periodogram accumulators of different shape".into()));
        }
        for (s, o) in self.sums.iter_mut().zip(&other.sums) {
            *s += o;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Averaged density over the segments added so far.
    pub fn average(&self, labels: Vec<String>, dt: f64) -> Result<CpsdMatrix> {
        if self.count == 0 {
            return Err(Error::EmptySpectrum("no segments accumulated".into()));
        }
        let k = self.count as f64;
        let values = self.sums.iter().map(|z| z / k).collect();
        CpsdMatrix::new(labels, self.d_omega(dt), values, Sided::Two)
    }
}

/// Welch-averaged cross-spectral matrix of one record.
pub fn welch_cpsd(rs: &RecordSet, cfg: &WelchConfig) -> Result<CpsdMatrix> {
    cfg.validate(rs.n_samples())?;
    let nfft = cfg.fft_len();
    let window = cfg.window.coefficients(cfg.segment_len);
    let mut acc = CrossPeriodogram::new(rs.n_components(), &window, nfft, rs.dt(), cfg.detrend, nfft / 2 + 1);
    for k in 0..cfg.n_segments(rs.n_samples()) {
        let start = k * cfg.shift;
        acc.add_segment(|i| &rs.component(i)[start..start + cfg.segment_len]);
    }
    acc.average(rs.labels().to_vec(), rs.dt())
}

/// Ensemble mean of raw periodograms (rectangular window, no overlap), one per segment.
///
/// `nfft` zero-pads every segment to reach a finer grid.
pub fn target_cpsd(segments: &[RecordSet], nfft: Option<usize>) -> Result<CpsdMatrix> {
    let first = segments.first().ok_or_else(|| Error::Shape("no segments for target spectra".into()))?;
    if segments.len() < 2 {
        return Err(Error::Shape("target spectra need at least two segments".into()));
    }
    let len = first.n_samples();
    for (idx, s) in segments.iter().enumerate() {
        if s.n_samples() != len || s.n_components() != first.n_components() || s.sample_rate() != first.sample_rate() {
            return Err(Error::Shape(format!(
                "segment {idx} has {} samples x {} components at {} Hz, expected {len} x {} at {} Hz",
                s.n_samples(),
                s.n_components(),
                s.sample_rate(),
                first.n_components(),
                first.sample_rate()
            )));
        }
    }
    let cfg = WelchConfig { nfft, ..WelchConfig::rectangular(len) };
    cfg.validate(len)?;
    let nfft = cfg.fft_len();
    let window = cfg.window.coefficients(len);
    let mut acc = CrossPeriodogram::new(first.n_components(), &window, nfft, first.dt(), cfg.detrend, nfft / 2 + 1);
    for s in segments {
        acc.add_segment(|i| s.component(i));
    }
    acc.average(first.labels().to_vec(), first.dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{generic_labels, variance};
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn white(n: usize, seed: u64) -> Vec<f64> {
        // Box-Muller on ChaCha output.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        (0..n).map(|_| (-2.0 * u().ln()).sqrt() * (2.0 * PI * u()).cos()).collect()
    }

    fn integral(s: &CpsdMatrix, i: usize, j: usize) -> f64 {
        let w = symmetric_trapezoid_weights(s.n_lines(), s.d_omega());
        (0..s.n_lines()).map(|k| w[k] * s.get(k, i, j).re).sum()
    }

    #[test]
    fn parseval_for_raw_periodogram() {
        let x = white(1000, 1);
        let rs = RecordSet::from_columns(generic_labels(1), vec![x.clone()], 50.0).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::rectangular(1000)).unwrap();
        let v = variance(&x);
        assert!((integral(&s, 0, 0) - v).abs() < 1e-10 * v);
    }

    #[test]
    fn parseval_survives_zero_padding() {
        let x = white(600, 2);
        let rs = RecordSet::from_columns(generic_labels(1), vec![x.clone()], 10.0).unwrap();
        let cfg = WelchConfig { nfft: Some(1000), ..WelchConfig::rectangular(600) };
        let s = welch_cpsd(&rs, &cfg).unwrap();
        assert!((s.d_omega() - 2.0 * PI / 100.0).abs() < 1e-15);
        let v = variance(&x);
        assert!((integral(&s, 0, 0) - v).abs() < 1e-10 * v);
    }

    #[test]
    fn white_noise_welch_integrates_to_unit_variance() {
        let x = white(64 * 256, 3);
        let rs = RecordSet::from_columns(generic_labels(1), vec![x], 1.0).unwrap();
        let cfg = WelchConfig::rectangular(256);
        assert_eq!(cfg.n_segments(rs.n_samples()), 64);
        let s = welch_cpsd(&rs, &cfg).unwrap();
        assert!((integral(&s, 0, 0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn sinusoid_variance() {
        let fs = 100.0;
        let a = 2.0;
        let x: Vec<f64> = (0..8000).map(|i| a * (2.0 * PI * 7.3 * i as f64 / fs).sin()).collect();
        let rs = RecordSet::from_columns(generic_labels(1), vec![x], fs).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::typical(1000)).unwrap();
        let v = integral(&s, 0, 0);
        assert!((v - a * a / 2.0).abs() < 0.03 * a * a / 2.0, "{v}");
    }

    #[test]
    fn identical_components_give_real_cross_spectrum() {
        let x = white(2048, 4);
        let rs = RecordSet::from_columns(generic_labels(2), vec![x.clone(), x], 1.0).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::typical(256)).unwrap();
        for k in 0..s.n_lines() {
            let d = s.get(k, 0, 0);
            let c = s.get(k, 0, 1);
            assert!(c.im.abs() <= 1e-12 * d.re.max(1e-300));
            assert!((c.re - d.re).abs() <= 1e-12 * d.re.max(1e-300));
        }
        s.check_invariants().unwrap();
    }

    #[test]
    fn cross_spectrum_is_conjugate_symmetric() {
        let a = white(1024, 5);
        let b: Vec<f64> = a.iter().zip(white(1024, 6)).map(|(x, y)| 0.5 * x + y).collect();
        let rs = RecordSet::from_columns(generic_labels(2), vec![a, b], 1.0).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::typical(128)).unwrap();
        for k in 0..s.n_lines() {
            assert_eq!(s.get(k, 0, 1), s.get(k, 1, 0).conj());
        }
    }

    #[test]
    fn segment_longer_than_signal_is_config_error() {
        let rs = RecordSet::from_columns(generic_labels(1), vec![vec![0.0; 10]], 1.0).unwrap();
        assert!(matches!(welch_cpsd(&rs, &WelchConfig::rectangular(11)), Err(Error::Configuration(_))));
    }

    #[test]
    fn target_of_identical_segments_is_the_periodogram() {
        let seg = RecordSet::from_columns(generic_labels(2), vec![white(256, 7), white(256, 8)], 4.0).unwrap();
        let single = welch_cpsd(&seg, &WelchConfig::rectangular(256)).unwrap();
        let target = target_cpsd(&[seg.clone(), seg.clone(), seg.clone(), seg], None).unwrap();
        assert_eq!(single, target);
    }

    #[test]
    fn target_rejects_heterogeneous_segments() {
        let a = RecordSet::from_columns(generic_labels(1), vec![vec![0.0; 8]], 1.0).unwrap();
        let b = RecordSet::from_columns(generic_labels(1), vec![vec![0.0; 9]], 1.0).unwrap();
        assert!(matches!(target_cpsd(&[a, b], None), Err(Error::Shape(_))));
    }

    #[test]
    fn truncation_grid_arithmetic() {
        let rs = RecordSet::from_columns(generic_labels(1), vec![white(2500, 9)], 625.0).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::rectangular(2500)).unwrap();
        assert_eq!(s.n_lines(), 1251);
        let t = truncate_to_cutoff(&s, 50.0).unwrap();
        assert_eq!(t.n_lines(), 201);
        assert_eq!(t.d_omega(), s.d_omega());
        assert_eq!(truncate_to_cutoff(&s, 312.5).unwrap(), s);
        assert!(matches!(truncate_to_cutoff(&s, -1.0), Err(Error::EmptySpectrum(_))));
    }

    #[test]
    fn segment_count_formula() {
        let cfg = WelchConfig::typical(2500);
        assert_eq!(cfg.shift, 1250);
        assert_eq!(cfg.n_segments(20000), 15);
        assert!((cfg.overlap() - 0.5).abs() < 1e-15);
    }
}
