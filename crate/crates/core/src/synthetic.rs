//! Multivariate processes with closed-form cross-spectra, laid out like floor
//! force coefficients (x block, y block, z block).
//!
//! Between components `a` and `b` on floors `n_a`, `n_b`:
//!
//! `S_ab(ω) = √(G_a(f) G_b(f)) / 4π · C[blk_a][blk_b] · exp(−λ |n_a − n_b| f) · exp(−iω τ (n_a − n_b))`
//!
//! with `f = ω/2π`, `G` a one-sided PSD in units²/Hz that vanishes above the
//! band edge, `C` a 3×3 block coupling matrix, `λ` the coherence decay and
//! `τ` a per-floor delay.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pod::{decompose_line, LineModes, CLAMP_TOL};
use crate::record::{floor_component_labels, RecordSet};
use crate::spectral::{cutoff_line, CpsdMatrix, Sided};
use crate::srm::{ModeSource, SimulationPlan, SynthesisBuffers, Synthesizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdFamily {
    Flat,
    /// `1/(1 + c f)^{5/3}`.
    Kaimal,
    /// Kaimal background plus a Gaussian bump.
    Bump,
}

impl FromStr for PsdFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(PsdFamily::Flat),
            "kaimal" => Ok(PsdFamily::Kaimal),
            "bump" => Ok(PsdFamily::Bump),
            other => Err(Error::Configuration(format!("unknown PSD family '{other}'"))),
        }
    }
}

impl core::fmt::Display for PsdFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            PsdFamily::Flat => "flat",
            PsdFamily::Kaimal => "kaimal",
            PsdFamily::Bump => "bump",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_floors: usize,
    pub sample_rate_hz: f64,
    /// Length of one repetition, s.
    pub duration_s: f64,
    pub n_repetitions: usize,
    pub family: PsdFamily,
    /// Kaimal length scale `c`, s.
    pub kaimal_c_s: f64,
    pub bump_hz: f64,
    pub bump_width_hz: f64,
    /// Bump peak relative to the background at `f = 0`.
    pub bump_weight: f64,
    /// PSDs vanish above this frequency.
    pub band_hz: f64,
    /// Variance of the top floor in each block.
    pub variance: [f64; 3],
    /// Floor `n` carries `variance · (n/n_floors)^profile_exponent`.
    pub profile_exponent: f64,
    /// `λ` in `exp(−λ |Δn| f)`, s.
    pub coherence_decay_s: f64,
    /// Per-floor delay `τ`, s.
    pub delay_s: f64,
    /// Block couplings `(xy, xz, yz)`.
    pub coupling: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_floors: 4,
            sample_rate_hz: 625.0,
            duration_s: 900.0,
            n_repetitions: 5,
            family: PsdFamily::Kaimal,
            kaimal_c_s: 0.6,
            bump_hz: 8.0,
            bump_width_hz: 1.0,
            bump_weight: 0.5,
            band_hz: 50.0,
            variance: [1.0, 1.0, 1.0],
            profile_exponent: 0.5,
            coherence_decay_s: 0.05,
            delay_s: 0.001,
            coupling: [0.0, 0.4, 0.1],
        }
    }
}

impl SyntheticSpec {
    pub fn n_components(&self) -> usize {
        3 * self.n_floors
    }

    pub fn labels(&self) -> Vec<String> {
        floor_component_labels(self.n_floors)
    }

    /// Sets one field from its key=value spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let num = || value.parse::<f64>().map_err(|_| Error::Configuration(format!("{key}: '{value}' is not a number")));
        let count = || value.parse::<usize>().map_err(|_| Error::Configuration(format!("{key}: '{value}' is not a count")));
        match key.trim() {
            "n_floors" => self.n_floors = count()?,
            "sample_rate_hz" => self.sample_rate_hz = num()?,
            "duration_s" => self.duration_s = num()?,
            "n_repetitions" => self.n_repetitions = count()?,
            "family" => self.family = value.parse()?,
            "kaimal_c_s" => self.kaimal_c_s = num()?,
            "bump_hz" => self.bump_hz = num()?,
            "bump_width_hz" => self.bump_width_hz = num()?,
            "bump_weight" => self.bump_weight = num()?,
            "band_hz" => self.band_hz = num()?,
            "variance_x" => self.variance[0] = num()?,
            "variance_y" => self.variance[1] = num()?,
            "variance_z" => self.variance[2] = num()?,
            "profile_exponent" => self.profile_exponent = num()?,
            "coherence_decay_s" => self.coherence_decay_s = num()?,
            "delay_s" => self.delay_s = num()?,
            "coupling_xy" => self.coupling[0] = num()?,
            "coupling_xz" => self.coupling[1] = num()?,
            "coupling_yz" => self.coupling[2] = num()?,
            other => return Err(Error::Configuration(format!("unknown synthetic spec key '{other}'"))),
        }
        Ok(())
    }

    /// Every field as key=value pairs, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_floors", self.n_floors.to_string()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("n_repetitions", self.n_repetitions.to_string()),
            ("family", self.family.to_string()),
            ("kaimal_c_s", self.kaimal_c_s.to_string()),
            ("bump_hz", self.bump_hz.to_string()),
            ("bump_width_hz", self.bump_width_hz.to_string()),
            ("bump_weight", self.bump_weight.to_string()),
            ("band_hz", self.band_hz.to_string()),
            ("variance_x", self.variance[0].to_string()),
            ("variance_y", self.variance[1].to_string()),
            ("variance_z", self.variance[2].to_string()),
            ("profile_exponent", self.profile_exponent.to_string()),
            ("coherence_decay_s", self.coherence_decay_s.to_string()),
            ("delay_s", self.delay_s.to_string()),
            ("coupling_xy", self.coupling[0].to_string()),
            ("coupling_xz", self.coupling[1].to_string()),
            ("coupling_yz", self.coupling[2].to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.n_floors == 0 {
            return bad("n_floors must be at least 1".into());
        }
        if !(self.sample_rate_hz > 0.0) || !(self.duration_s > 0.0) {
            return bad(format!("sample rate {} Hz and duration {} s must be positive", self.sample_rate_hz, self.duration_s));
        }
        if !(self.band_hz > 0.0 && self.band_hz <= self.sample_rate_hz / 2.0) {
            return bad(format!("band edge {} Hz must lie in (0, Nyquist]", self.band_hz));
        }
        if self.variance.iter().any(|v| !(*v > 0.0)) {
            return bad("block variances must be positive".into());
        }
        if !(self.kaimal_c_s >= 0.0) || !(self.coherence_decay_s >= 0.0) || !self.delay_s.is_finite() || !self.profile_exponent.is_finite() {
            return bad("kaimal_c_s and coherence_decay_s must be non-negative, delay and profile finite".into());
        }
        if self.family == PsdFamily::Bump && !(self.bump_width_hz > 0.0 && self.bump_weight >= 0.0 && self.bump_hz >= 0.0) {
            return bad("bump needs positive width and non-negative weight and centre".into());
        }
        let [xy, xz, yz] = self.coupling;
        if [xy, xz, yz].iter().any(|c| !(c.abs() <= 1.0)) {
            return Err(Error::Construction("block couplings must lie in [-1, 1]".into()));
        }
        // Unit-diagonal 3×3 matrix: PSD iff the determinant is non-negative
        // (2×2 minors are already non-negative).
        let det = 1.0 + 2.0 * xy * xz * yz - xy * xy - xz * xz - yz * yz;
        if det < -1e-12 {
            return Err(Error::Construction(format!("block coupling matrix is indefinite (determinant {det:e})")));
        }
        Ok(())
    }

    fn coupling_matrix(&self) -> [[f64; 3]; 3] {
        let [xy, xz, yz] = self.coupling;
        [[1.0, xy, xz], [xy, 1.0, yz], [xz, yz, 1.0]]
    }

    fn shape(&self, f: f64) -> f64 {
        let kaimal = |f: f64| libm::pow(1.0 + self.kaimal_c_s * f, -5.0 / 3.0);
        match self.family {
            PsdFamily::Flat => 1.0,
            PsdFamily::Kaimal => kaimal(f),
            PsdFamily::Bump => {
                let z = (f - self.bump_hz) / self.bump_width_hz;
                kaimal(f) + self.bump_weight * libm::exp(-0.5 * z * z)
            }
        }
    }

    /// `∫₀^band shape(f) df`.
    fn shape_integral(&self) -> f64 {
        let b = self.band_hz;
        let kaimal = || {
            let c = self.kaimal_c_s;
            if c == 0.0 {
                b
            } else {
                1.5 / c * (1.0 - libm::pow(1.0 + c * b, -2.0 / 3.0))
            }
        };
        match self.family {
            PsdFamily::Flat => b,
            PsdFamily::Kaimal => kaimal(),
            PsdFamily::Bump => {
                let (mu, w) = (self.bump_hz, self.bump_width_hz);
                let s = w * core::f64::consts::SQRT_2;
                let gauss = w * (PI / 2.0).sqrt() * (libm::erf((b - mu) / s) - libm::erf(-mu / s));
                kaimal() + self.bump_weight * gauss
            }
        }
    }

    /// Variance of component `c` in block-major order.
    pub fn component_variance(&self, c: usize) -> f64 {
        let (block, floor) = (c / self.n_floors, c % self.n_floors + 1);
        self.variance[block] * libm::pow(floor as f64 / self.n_floors as f64, self.profile_exponent)
    }

    /// One-sided PSD of component `c` at `f` Hz.
    pub fn one_sided_psd(&self, c: usize, f: f64) -> f64 {
        if f < 0.0 || f > self.band_hz * (1.0 + 1e-12) {
            return 0.0;
        }
        self.component_variance(c) * self.shape(f) / self.shape_integral()
    }

    /// Row-major `N×N` two-sided density at `omega` rad/s.
    pub fn line(&self, omega: f64) -> Vec<Complex64> {
        let n = self.n_components();
        let f = omega / (2.0 * PI);
        let c = self.coupling_matrix();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        let g: Vec<f64> = (0..n).map(|a| self.one_sided_psd(a, f)).collect();
        for a in 0..n {
            for b in 0..n {
                let (ba, bb) = (a / self.n_floors, b / self.n_floors);
                let dn = (a % self.n_floors) as f64 - (b % self.n_floors) as f64;
                let mag = (g[a] * g[b]).sqrt() / (4.0 * PI) * c[ba][bb] * libm::exp(-self.coherence_decay_s * dn.abs() * f);
                out[a * n + b] = Complex64::from_polar(mag, -omega * self.delay_s * dn);
            }
        }
        out
    }

    /// Lines `0..=band` on a grid of period `duration_s`.
    pub fn n_lines(&self, duration_s: f64) -> usize {
        cutoff_line(2.0 * PI / duration_s, self.band_hz) + 1
    }
}

/// The closed-form CPSD on lines `0..n_lines` of spacing `d_omega`, checked
/// for non-negative eigenvalues line by line.
pub fn analytic_cpsd(spec: &SyntheticSpec, d_omega: f64, n_lines: usize) -> Result<CpsdMatrix> {
    spec.validate()?;
    let n = spec.n_components();
    let mut values = Vec::with_capacity(n * n * n_lines);
    for k in 0..n_lines {
        let line = spec.line(k as f64 * d_omega);
        check_line(&line, n, k)?;
        values.extend(line);
    }
    CpsdMatrix::new(spec.labels(), d_omega, values, Sided::Two)
}

fn check_line(line: &[Complex64], n: usize, k: usize) -> Result<LineModes> {
    let lm = decompose_line(line, n, k)?;
    let lead = lm.values.first().copied().unwrap_or(0.0).abs();
    if let Some(&low) = lm.values.last() {
        if low < -CLAMP_TOL * lead {
            return Err(Error::Construction(format!("analytic spectrum is indefinite at line {k} (eigenvalue {low:e})")));
        }
    }
    Ok(lm)
}

/// Modes of the analytic CPSD, computed line by line on demand.
#[derive(Debug, Clone)]
pub struct AnalyticModes {
    spec: SyntheticSpec,
    d_omega: f64,
    n_lines: usize,
}

impl AnalyticModes {
    /// The grid of period `duration_s` up to the band edge.
    pub fn new(spec: &SyntheticSpec, duration_s: f64) -> Result<Self> {
        spec.validate()?;
        if !(duration_s > 0.0) {
            return Err(Error::Configuration(format!("duration {duration_s} s must be positive")));
        }
        Ok(AnalyticModes { spec: spec.clone(), d_omega: 2.0 * PI / duration_s, n_lines: spec.n_lines(duration_s) })
    }
}

impl ModeSource for AnalyticModes {
    fn n_components(&self) -> usize {
        self.spec.n_components()
    }

    fn n_lines(&self) -> usize {
        self.n_lines
    }

    fn d_omega(&self) -> f64 {
        self.d_omega
    }

    fn labels(&self) -> Vec<String> {
        self.spec.labels()
    }

    fn line_modes(&self, line: usize) -> Result<LineModes> {
        check_line(&self.spec.line(line as f64 * self.d_omega), self.spec.n_components(), line)
    }
}

/// Simulator drawing records of `duration_s` from the analytic model, all modes retained.
pub fn record_synthesizer(spec: &SyntheticSpec, seed: u64, duration_s: f64) -> Result<Synthesizer> {
    let modes = AnalyticModes::new(spec, duration_s)?;
    let dt = 1.0 / spec.sample_rate_hz;
    let plan = SimulationPlan {
        n_modes: spec.n_components(),
        n_steps: (duration_s * spec.sample_rate_hz).round() as usize,
        dt,
        n_realizations: 1,
        seed,
        means: None,
        scale: None,
    };
    Synthesizer::new(&modes, plan)
}

/// `n_records` independent records of `duration_s` seconds.
pub fn sample_records(spec: &SyntheticSpec, seed: u64, n_records: usize, duration_s: f64) -> Result<Vec<RecordSet>> {
    let synth = record_synthesizer(spec, seed, duration_s)?;
    let mut buf = SynthesisBuffers::default();
    (0..n_records as u64).map(|r| synth.realization(r, &mut buf)).collect()
}
