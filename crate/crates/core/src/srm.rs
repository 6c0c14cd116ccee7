//! Spectral-representation simulation from spectral modes.
//!
//! Realization `r` of component `j` is
//! `x_j(t) = Σ_k Re(B_jk e^{iω_k t})` with
//! `B_jk = Σ_i 2 √(Λ_i(ω_k) Δω) Ψ_ij(ω_k) e^{iθ_ik}`,
//! which is the cosine sum with amplitude `2|Ψ_ij|√(ΛΔω)` and phase
//! `arg Ψ_ij + θ_ik`. The DC line is never simulated; means are added back at
//! the output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::pod::{LineModes, SpectralModes};
use crate::record::RecordSet;
use crate::rng::PhaseStream;
use crate::spectral::{symmetric_trapezoid_weights, CpsdMatrix, Sided};

/// Relative slack when comparing a duration with the period `2π/Δω`.
const PERIOD_TOL: f64 = 1e-9;

/// Anything that can hand out the modes of one frequency line.
pub trait ModeSource {
    fn n_components(&self) -> usize;
    fn n_lines(&self) -> usize;
    fn d_omega(&self) -> f64;
    fn labels(&self) -> Vec<String>;
    fn line_modes(&self, line: usize) -> Result<LineModes>;
}

impl ModeSource for SpectralModes {
    fn n_components(&self) -> usize {
        SpectralModes::n_components(self)
    }

    fn n_lines(&self) -> usize {
        SpectralModes::n_lines(self)
    }

    fn d_omega(&self) -> f64 {
        SpectralModes::d_omega(self)
    }

    fn labels(&self) -> Vec<String> {
        SpectralModes::labels(self).to_vec()
    }

    fn line_modes(&self, line: usize) -> Result<LineModes> {
        let n = SpectralModes::n_components(self);
        let mut vectors = Vec::with_capacity(n * n);
        for mode in 0..n {
            vectors.extend_from_slice(self.vector(line, mode));
        }
        Ok(LineModes { values: self.values(line).to_vec(), vectors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub n_modes: usize,
    pub n_steps: usize,
    /// Time step, s.
    pub dt: f64,
    pub n_realizations: u64,
    pub seed: u64,
    /// Added to each component at the output.
    pub means: Option<Vec<f64>>,
    /// Multiplies each fluctuating component at the output.
    pub scale: Option<Vec<f64>>,
}

impl SimulationPlan {
    /// One full period of the grid of `source`, sampled at `dt`.
    pub fn full_period(source: &dyn ModeSource, n_modes: usize, dt: f64, n_realizations: u64, seed: u64) -> Self {
        let period = 2.0 * PI / source.d_omega();
        SimulationPlan {
            n_modes,
            n_steps: (period / dt).round() as usize,
            dt,
            n_realizations,
            seed,
            means: None,
            scale: None,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self, source: &dyn ModeSource) -> Result<()> {
        let n = source.n_components();
        if self.n_modes == 0 || self.n_modes > n {
            return Err(Error::Argument(format!("mode count {} outside 1..={n}", self.n_modes)));
        }
        if self.n_realizations == 0 {
            return Err(Error::Configuration("at least one realization is required".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.n_steps == 0 {
            return Err(Error::Configuration(format!("need dt > 0 and at least one step (dt {}, steps {})", self.dt, self.n_steps)));
        }
        let period = 2.0 * PI / source.d_omega();
        if self.duration_s() > period * (1.0 + PERIOD_TOL) {
            return Err(Error::Configuration(format!(
                "duration {} s exceeds the period {period} s of the frequency grid",
                self.duration_s()
            )));
        }
        let top = (source.n_lines().saturating_sub(1)) as f64 * source.d_omega();
        if top > PI / self.dt * (1.0 + PERIOD_TOL) {
            return Err(Error::Configuration(format!(
                "grid reaches {top} rad/s, above the Nyquist frequency {} rad/s of dt = {}",
                PI / self.dt,
                self.dt
            )));
        }
        for (name, v) in [("means", &self.means), ("scale", &self.scale)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(Error::Shape(format!("{name} has {} entries for {n} components", v.len())));
                }
            }
        }
        Ok(())
    }
}

/// `2 |Ψ_ij| √(Λ_i Δω) cos(ω_k t + ϑ_ijk + θ_ik)` summed over lines, for a single mode `i`.
///
/// `phases[k]` is `θ_ik`. Returns component-major samples `[N][n_steps]`.
pub fn simulate_subprocess(
    source: &dyn ModeSource,
    mode: usize,
    phases: &[f64],
    n_steps: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = source.n_components();
    if mode >= n {
        return Err(Error::Argument(format!("mode {mode} outside 0..{n}")));
    }
    if phases.len() != source.n_lines() {
        return Err(Error::Shape(format!("{} phases for {} lines", phases.len(), source.n_lines())));
    }
    let d_omega = source.d_omega();
    let mut out = vec![0.0; n * n_steps];
    for (k, &theta) in phases.iter().enumerate().skip(1) {
        let lm = source.line_modes(k)?;
        let lambda = checked_eigenvalue(&lm, k, mode)?;
        if lambda == 0.0 {
            continue;
        }
        let omega = k as f64 * d_omega;
        let root = 2.0 * (lambda * d_omega).sqrt();
        for j in 0..n {
            let psi = lm.vectors[mode * n + j];
            let amp = root * psi.norm();
            let vartheta = psi.im.atan2(psi.re);
            for (s, v) in out[j * n_steps..(j + 1) * n_steps].iter_mut().enumerate() {
                *v += amp * (omega * s as f64 * dt + vartheta + theta).cos();
            }
        }
    }
    Ok(out)
}

fn checked_eigenvalue(lm: &LineModes, line: usize, mode: usize) -> Result<f64> {
    let value = lm.values[mode];
    if value < 0.0 || !value.is_finite() {
        return Err(Error::Calibration { line, mode, value });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Path {
    /// Period is an integer number of steps: inverse FFT of length `period/dt`.
    Fft(usize),
    /// Direct cosine sums.
    Direct,
}

/// Calibrated simulator: per-line amplitudes `2√(ΛΔω)Ψ` for the retained modes.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    n: usize,
    n_lines: usize,
    d_omega: f64,
    labels: Vec<String>,
    plan: SimulationPlan,
    /// Real and imaginary parts of `2√(ΛΔω)Ψ`, `[line][mode][component]`, line 0 left at zero.
    amp_re: Vec<f64>,
    amp_im: Vec<f64>,
    phases: PhaseStream,
    path: Path,
    fft: Option<FftPlan>,
}

/// Per-thread scratch for a [`Synthesizer`].
#[derive(Debug, Clone, Default)]
pub struct SynthesisBuffers {
    coefficients: Vec<Complex64>,
    theta: Vec<f64>,
    line_re: Vec<f64>,
    line_im: Vec<f64>,
    work: Vec<Complex64>,
}

impl Synthesizer {
    pub fn new(source: &dyn ModeSource, plan: SimulationPlan) -> Result<Self> {
        plan.validate(source)?;
        let n = source.n_components();
        let n_lines = source.n_lines();
        let d_omega = source.d_omega();
        let m = plan.n_modes;
        let mut amp_re = vec![0.0; n_lines * m * n];
        let mut amp_im = vec![0.0; n_lines * m * n];
        for k in 1..n_lines {
            let lm = source.line_modes(k)?;
            for mode in 0..m {
                let root = 2.0 * (checked_eigenvalue(&lm, k, mode)? * d_omega).sqrt();
                let at = (k * m + mode) * n;
                for (j, psi) in lm.vectors[mode * n..(mode + 1) * n].iter().enumerate() {
                    amp_re[at + j] = psi.re * root;
                    amp_im[at + j] = psi.im * root;
                }
            }
        }
        let steps_per_period = 2.0 * PI / (d_omega * plan.dt);
        let rounded = steps_per_period.round();
        let path = if (steps_per_period - rounded).abs() <= PERIOD_TOL * steps_per_period && rounded >= 1.0 {
            Path::Fft(rounded as usize)
        } else {
            Path::Direct
        };
        let fft = match path {
            Path::Fft(len) => Some(FftPlan::new(len)),
            Path::Direct => None,
        };
        Ok(Synthesizer {
            n,
            n_lines,
            d_omega,
            labels: source.labels(),
            phases: PhaseStream::new(plan.seed, n),
            plan,
            amp_re,
            amp_im,
            path,
            fft,
        })
    }

    pub fn plan(&self) -> &SimulationPlan {
        &self.plan
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Whether the inverse-FFT path is in use.
    pub fn uses_fft(&self) -> bool {
        matches!(self.path, Path::Fft(_))
    }

    /// True when realizations span exactly one period, so a realization's
    /// rectangular periodogram is `B Bᴴ / (4Δω)` line by line.
    pub fn covers_one_period(&self) -> bool {
        match self.path {
            Path::Fft(len) => len == self.plan.n_steps && 2 * (self.n_lines - 1) < len,
            Path::Direct => false,
        }
    }

    /// Fourier coefficients `B_jk` of realization `r`, laid out `[component][line]`.
    pub fn coefficients<'b>(&self, r: u64, buf: &'b mut SynthesisBuffers) -> &'b [Complex64] {
        let (n, nl, m) = (self.n, self.n_lines, self.plan.n_modes);
        buf.coefficients.clear();
        buf.coefficients.resize(n * nl, Complex64::new(0.0, 0.0));
        buf.theta.resize(m, 0.0);
        buf.line_re.clear();
        buf.line_re.resize(n, 0.0);
        buf.line_im.clear();
        buf.line_im.resize(n, 0.0);
        let mut cursor = self.phases.realization(r);
        for k in 1..nl {
            cursor.line(k, &mut buf.theta);
            let (acc_re, acc_im) = (&mut buf.line_re[..n], &mut buf.line_im[..n]);
            acc_re.fill(0.0);
            acc_im.fill(0.0);
            let span = k * m * n..(k + 1) * m * n;
            let modes = self.amp_re[span.clone()].chunks_exact(n).zip(self.amp_im[span].chunks_exact(n));
            for (&theta, (a_re, a_im)) in buf.theta.iter().zip(modes) {
                let (s, c) = libm::sincos(theta);
                for j in 0..n {
                    acc_re[j] += a_re[j] * c - a_im[j] * s;
                    acc_im[j] += a_re[j] * s + a_im[j] * c;
                }
            }
            for j in 0..n {
                buf.coefficients[j * nl + k] = Complex64::new(acc_re[j], acc_im[j]);
            }
        }
        &buf.coefficients
    }

    /// Zero-mean fluctuation of realization `r`, component-major `[N][n_steps]`,
    /// in the units of the modes (no scale, no means).
    pub fn fluctuation(&self, r: u64, buf: &mut SynthesisBuffers, out: &mut Vec<f64>) {
        self.coefficients(r, buf);
        let (n, nl, steps) = (self.n, self.n_lines, self.plan.n_steps);
        out.clear();
        out.resize(n * steps, 0.0);
        match (self.path, &self.fft) {
            (Path::Fft(len), Some(fft)) => {
                let mut j = 0;
                while j < n {
                    let paired = j + 1 < n;
                    buf.work.clear();
                    buf.work.resize(len, Complex64::new(0.0, 0.0));
                    for k in 1..nl {
                        let a = buf.coefficients[j * nl + k] * 0.5;
                        let b = if paired { buf.coefficients[(j + 1) * nl + k] * 0.5 } else { Complex64::new(0.0, 0.0) };
                        // Hermitian extensions of a and b, packed as a + i·b.
                        let i_b = Complex64::new(-b.im, b.re);
                        let i_bc = Complex64::new(b.im, b.re);
                        buf.work[k % len] += a + i_b;
                        buf.work[(len - k % len) % len] += a.conj() + i_bc;
                    }
                    fft.inverse(&mut buf.work);
                    for (s, z) in buf.work.iter().take(steps).enumerate() {
                        out[j * steps + s] = z.re;
                        if paired {
                            out[(j + 1) * steps + s] = z.im;
                        }
                    }
                    j += if paired { 2 } else { 1 };
                }
            }
            _ => {
                for s in 0..steps {
                    let t = s as f64 * self.plan.dt;
                    for k in 1..nl {
                        let (sn, cs) = (k as f64 * self.d_omega * t).sin_cos();
                        for j in 0..n {
                            let b = buf.coefficients[j * nl + k];
                            out[j * steps + s] += b.re * cs - b.im * sn;
                        }
                    }
                }
            }
        }
    }

    /// Realization `r` with scale and means applied.
    pub fn realization(&self, r: u64, buf: &mut SynthesisBuffers) -> Result<RecordSet> {
        let mut data = Vec::new();
        self.fluctuation(r, buf, &mut data);
        let steps = self.plan.n_steps;
        for j in 0..self.n {
            let scale = self.plan.scale.as_ref().map_or(1.0, |s| s[j]);
            let mean = self.plan.means.as_ref().map_or(0.0, |m| m[j]);
            for v in &mut data[j * steps..(j + 1) * steps] {
                *v = *v * scale + mean;
            }
        }
        RecordSet::from_component_major(self.labels.clone(), steps, data, 1.0 / self.plan.dt)
    }
}

/// One realization of `plan`, with means and scale applied.
pub fn simulate_realization(source: &dyn ModeSource, plan: &SimulationPlan, r: u64) -> Result<RecordSet> {
    let synth = Synthesizer::new(source, plan.clone())?;
    synth.realization(r, &mut SynthesisBuffers::default())
}

/// Single-pass ensemble accumulator over realizations spanning one period.
///
/// Holds the summed periodograms on lines `0..n_lines` and returns each
/// realization's spectral covariance matrix (trapezoid rule over the same lines).
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    n: usize,
    n_lines: usize,
    d_omega: f64,
    weights: Vec<f64>,
    /// Upper triangles of the summed periodograms, `[line][i][j]`.
    sums_re: Vec<f64>,
    sums_im: Vec<f64>,
    count: u64,
    latest: Vec<f64>,
    col_re: Vec<f64>,
    col_im: Vec<f64>,
}

impl EnsembleAccumulator {
    /// `n_lines` is the number of lines kept, usually up to the cutoff line inclusive.
    pub fn new(n: usize, n_lines: usize, d_omega: f64) -> Self {
        EnsembleAccumulator {
            n,
            n_lines,
            d_omega,
            weights: symmetric_trapezoid_weights(n_lines, d_omega),
            sums_re: vec![0.0; n * n * n_lines],
            sums_im: vec![0.0; n * n * n_lines],
            count: 0,
            latest: vec![0.0; n * n],
            col_re: Vec::new(),
            col_im: Vec::new(),
        }
    }

    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds the periodogram `B Bᴴ / (4Δω)` of one realization whose coefficients
    /// are `[component][line]` with `coeff_lines` lines. Returns its covariance matrix.
    pub fn add_coefficients(&mut self, coefficients: &[Complex64], coeff_lines: usize) -> &[f64] {
        let n = self.n;
        let scale = 1.0 / (4.0 * self.d_omega);
        self.latest.fill(0.0);
        self.col_re.resize(n, 0.0);
        self.col_im.resize(n, 0.0);
        // Only the upper triangle is summed; the lower one is implied.
        for k in 0..self.n_lines.min(coeff_lines) {
            let w = self.weights[k];
            for i in 0..n {
                let z = coefficients[i * coeff_lines + k];
                self.col_re[i] = z.re;
                self.col_im[i] = z.im;
            }
            for i in 0..n {
                let (bi_re, bi_im) = (self.col_re[i] * scale, self.col_im[i] * scale);
                let row = k * n * n + i * n + i..k * n * n + (i + 1) * n;
                let sum_re = &mut self.sums_re[row.clone()];
                let sum_im = &mut self.sums_im[row];
                let latest = &mut self.latest[i * n + i..(i + 1) * n];
                let (bj_re, bj_im) = (&self.col_re[i..n], &self.col_im[i..n]);
                for t in 0..latest.len() {
                    let re = bi_re * bj_re[t] + bi_im * bj_im[t];
                    let im = bi_im * bj_re[t] - bi_re * bj_im[t];
                    sum_re[t] += re;
                    sum_im[t] += im;
                    latest[t] += w * re;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                self.latest[i * n + j] = self.latest[j * n + i];
            }
        }
        self.count += 1;
        &self.latest
    }

    /// Adds a periodogram already on this grid (`[line][i][j]`) and returns its covariance matrix.
    pub fn add_periodogram(&mut self, periodogram: &[Complex64]) -> &[f64] {
        let n = self.n;
        for v in self.latest.iter_mut() {
            *v = 0.0;
        }
        for k in 0..self.n_lines {
            let w = self.weights[k];
            for i in 0..n {
                for j in i..n {
                    let idx = k * n * n + i * n + j;
                    let d = periodogram[idx];
                    self.sums_re[idx] += d.re;
                    self.sums_im[idx] += d.im;
                    self.latest[i * n + j] += w * d.re;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                self.latest[i * n + j] = self.latest[j * n + i];
            }
        }
        self.count += 1;
        &self.latest
    }

    /// Folds `other` into `self`; merge order fixes the floating-point result.
    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.n != self.n || other.n_lines != self.n_lines || other.d_omega != self.d_omega {
            return Err(Error::Shape("merging ensemble accumulators of different shape".into()));
        }
        for (s, o) in self.sums_re.iter_mut().zip(&other.sums_re) {
            *s += o;
        }
        for (s, o) in self.sums_im.iter_mut().zip(&other.sums_im) {
            *s += o;
        }
        self.count += other.count;
        Ok(())
    }

    /// Ensemble-mean spectra.
    pub fn spectra(&self, labels: Vec<String>) -> Result<CpsdMatrix> {
        if self.count == 0 {
            return Err(Error::EmptySpectrum("no realizations accumulated".into()));
        }
        if labels.len() != self.n {
            return Err(Error::Shape(format!("{} labels for {} components", labels.len(), self.n)));
        }
        let (n, c) = (self.n, self.count as f64);
        let mut values: Vec<Complex64> =
            self.sums_re.iter().zip(&self.sums_im).map(|(re, im)| Complex64::new(re / c, im / c)).collect();
        for line in values.chunks_exact_mut(n * n) {
            for i in 0..n {
                line[i * n + i].im = 0.0;
                for j in 0..i {
                    line[i * n + j] = line[j * n + i].conj();
                }
            }
        }
        CpsdMatrix::new(labels, self.d_omega, values, Sided::Two)
    }
}

/// Runs `plan.n_realizations` realizations into an accumulator over `n_lines`
/// lines, calling `each(r, covariance)` per realization.
///
/// Requires realizations spanning one period; memory does not grow with the
/// number of realizations.
pub fn simulate_batch(
    synth: &Synthesizer,
    n_lines: usize,
    realizations: core::ops::Range<u64>,
    mut each: impl FnMut(u64, &[f64]),
) -> Result<EnsembleAccumulator> {
    if !synth.covers_one_period() {
        return Err(Error::Configuration(
            "ensemble accumulation needs realizations spanning exactly one period of the grid".into(),
        ));
    }
    let mut acc = EnsembleAccumulator::new(synth.n, n_lines, synth.d_omega);
    let mut buf = SynthesisBuffers::default();
    for r in realizations {
        let b = synth.coefficients(r, &mut buf);
        let cov = acc.add_coefficients(b, synth.n_lines);
        each(r, cov);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::decompose;
    use crate::record::generic_labels;

    fn flat_modes(n_lines: usize, d_omega: f64, lambda: f64) -> SpectralModes {
        let mut values = Vec::new();
        let mut vectors = Vec::new();
        for _ in 0..n_lines {
            values.push(lambda);
            vectors.push(Complex64::new(1.0, 0.0));
        }
        SpectralModes::from_parts(generic_labels(1), d_omega, values, vectors).unwrap()
    }

    fn two_component_modes() -> SpectralModes {
        let n_lines = 9;
        let mut values = Vec::new();
        for k in 0..n_lines {
            let s = 1.0 / (1.0 + k as f64);
            let c = Complex64::from_polar(0.6 * s, 0.3 * k as f64);
            values.extend([Complex64::new(s, 0.0), c, c.conj(), Complex64::new(0.5 * s, 0.0)]);
        }
        decompose(&CpsdMatrix::new(generic_labels(2), 2.0 * PI / 16.0, values, Sided::Two).unwrap()).unwrap()
    }

    #[test]
    fn flat_single_component_variance() {
        let m = flat_modes(101, 0.01, 0.5);
        // Lines 1..=100 carry 2ΛΔω each.
        let phases: Vec<f64> = (0..101).map(|k| 0.37 * k as f64).collect();
        let period = 2.0 * PI / 0.01;
        let steps = 1000;
        let x = simulate_subprocess(&m, 0, &phases, steps, period / steps as f64).unwrap();
        let mean = x.iter().sum::<f64>() / steps as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / steps as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-10, "{var}");
    }

    #[test]
    fn zero_spectrum_gives_zero_output() {
        let m = flat_modes(16, 1.0, 0.0);
        let plan = SimulationPlan::full_period(&m, 1, 2.0 * PI / 32.0, 1, 0);
        let rs = simulate_realization(&m, &plan, 0).unwrap();
        assert!(rs.component(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_line_is_a_cosine() {
        let mut m = flat_modes(8, 0.5, 0.0);
        let mut values = m.all_values().to_vec();
        values[3] = 2.0;
        m = SpectralModes::from_parts(generic_labels(1), 0.5, values, m.all_vectors().to_vec()).unwrap();
        let mut phases = vec![0.0; 8];
        phases[3] = 0.4;
        let dt = 0.1;
        let x = simulate_subprocess(&m, 0, &phases, 50, dt).unwrap();
        let amp = 2.0 * (2.0 * 0.5f64).sqrt();
        for (s, v) in x.iter().enumerate() {
            assert!((v - amp * (1.5 * s as f64 * dt + 0.4).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_eigenvalue_is_calibration_error() {
        let m = SpectralModes::from_parts(generic_labels(1), 1.0, vec![0.0, -1.0], vec![Complex64::new(1.0, 0.0); 2]).unwrap();
        let err = simulate_subprocess(&m, 0, &[0.0, 0.0], 4, 0.1).unwrap_err();
        assert!(matches!(err, Error::Calibration { line: 1, mode: 0, .. }));
        assert!(Synthesizer::new(&m, SimulationPlan::full_period(&m, 1, 0.5, 1, 0)).is_err());
    }

    #[test]
    fn fft_path_matches_subprocess_sum() {
        let m = two_component_modes();
        let plan = SimulationPlan::full_period(&m, 2, 2.0 * PI / (m.d_omega() * 32.0), 1, 11);
        let synth = Synthesizer::new(&m, plan.clone()).unwrap();
        assert!(synth.uses_fft());
        assert!(synth.covers_one_period());
        let rs = synth.realization(3, &mut SynthesisBuffers::default()).unwrap();
        let stream = PhaseStream::new(11, 2);
        let mut expected = vec![0.0; 2 * plan.n_steps];
        for mode in 0..2 {
            let phases: Vec<f64> = (0..m.n_lines()).map(|k| stream.phase(3, mode, k)).collect();
            let p = simulate_subprocess(&m, mode, &phases, plan.n_steps, plan.dt).unwrap();
            for (e, v) in expected.iter_mut().zip(p) {
                *e += v;
            }
        }
        for j in 0..2 {
            for (a, b) in rs.component(j).iter().zip(&expected[j * plan.n_steps..]) {
                assert!((a - b).abs() < 1e-9, "{a} {b}");
            }
        }
    }

    #[test]
    fn direct_path_matches_fft_path() {
        let m = two_component_modes();
        let dt = 2.0 * PI / (m.d_omega() * 32.0);
        let fft = SimulationPlan { n_steps: 20, ..SimulationPlan::full_period(&m, 2, dt, 1, 5) };
        let direct = SimulationPlan { dt: dt * 1.0001, ..fft.clone() };
        let a = Synthesizer::new(&m, fft).unwrap();
        let b = Synthesizer::new(&m, direct).unwrap();
        assert!(a.uses_fft() && !b.uses_fft());
        let mut buf = SynthesisBuffers::default();
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        a.fluctuation(1, &mut buf, &mut xa);
        b.fluctuation(1, &mut buf, &mut xb);
        // Same phases; the direct path is sampled on a slightly stretched clock.
        assert!((xa[0] - xb[0]).abs() < 1e-12);
        assert!((xa[1] - xb[1]).abs() < 1e-2);
    }

    #[test]
    fn means_and_scale_applied_at_output() {
        let m = two_component_modes();
        let base = SimulationPlan::full_period(&m, 2, 2.0 * PI / (m.d_omega() * 32.0), 1, 2);
        let plain = simulate_realization(&m, &base, 0).unwrap();
        let plan = SimulationPlan { means: Some(vec![1.0, -2.0]), scale: Some(vec![3.0, 0.5]), ..base };
        let rs = simulate_realization(&m, &plan, 0).unwrap();
        for (a, b) in rs.component(1).iter().zip(plain.component(1)) {
            assert!((a - (b * 0.5 - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn duration_beyond_period_rejected() {
        let m = two_component_modes();
        let mut plan = SimulationPlan::full_period(&m, 2, 2.0 * PI / (m.d_omega() * 32.0), 1, 0);
        plan.n_steps += 1;
        assert!(matches!(plan.validate(&m), Err(Error::Configuration(_))));
        let coarse = SimulationPlan { dt: 2.0, n_steps: 2, ..plan };
        assert!(matches!(coarse.validate(&m), Err(Error::Configuration(_))));
    }

    #[test]
    fn coefficient_periodogram_matches_fft_periodogram() {
        let m = two_component_modes();
        let plan = SimulationPlan::full_period(&m, 2, 2.0 * PI / (m.d_omega() * 32.0), 1, 8);
        let synth = Synthesizer::new(&m, plan.clone()).unwrap();
        let mut buf = SynthesisBuffers::default();
        let rs = synth.realization(0, &mut buf).unwrap();
        let direct = crate::spectral::welch_cpsd(&rs, &crate::spectral::WelchConfig::rectangular(plan.n_steps)).unwrap();
        let mut acc = EnsembleAccumulator::new(2, m.n_lines(), m.d_omega());
        let b = synth.coefficients(0, &mut buf).to_vec();
        acc.add_coefficients(&b, m.n_lines());
        let s = acc.spectra(generic_labels(2)).unwrap();
        let scale = direct.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..m.n_lines() {
            for (a, b) in s.line(k).iter().zip(direct.line(k)) {
                assert!((a - b).norm() < 1e-12 * scale);
            }
        }
    }
}
