//! Study configuration from a key=value file.
//!
//! Every key is optional except where a study needs it. Paths are resolved
//! against the directory of the configuration file. Synthetic-model keys are
//! given inline as `synthetic.<key>` or through a `synthetic_spec` file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use podwind_core::spectral::Detrend;
use podwind_core::{Configuration, SyntheticSpec, WelchConfig, Window};

use crate::error::{Error, Result};
use crate::kv::{join_list, split_list, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Variability,
    ModelError,
    Truncation,
}

impl FromStr for Study {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "variability" => Ok(Study::Variability),
            "model-error" => Ok(Study::ModelError),
            "truncation" => Ok(Study::Truncation),
            other => Err(format!("unknown study '{other}' (variability, model-error, truncation)")),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Variability => "variability",
            Study::ModelError => "model-error",
            Study::Truncation => "truncation",
        })
    }
}

/// Where the simulation target of the model-error and truncation studies comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    /// Closed-form spectra of the synthetic model.
    Analytic,
    /// Ensemble-averaged periodograms of the input records.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic(SyntheticSpec),
    Records(Vec<PathBuf>),
}

/// Entry of the mode ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeCount {
    Count(usize),
    /// Every mode.
    All,
}

impl ModeCount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            ModeCount::Count(c) => c,
            ModeCount::All => n,
        }
    }
}

impl FromStr for ModeCount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "N" | "all" => Ok(ModeCount::All),
            _ => s.parse().map(ModeCount::Count).map_err(|_| format!("bad mode count '{s}'")),
        }
    }
}

impl fmt::Display for ModeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeCount::Count(c) => write!(f, "{c}"),
            ModeCount::All => f.write_str("N"),
        }
    }
}

pub fn parse_window(s: &str) -> std::result::Result<Window, String> {
    match s {
        "hann" | "hanning" => Ok(Window::Hann),
        "rect" | "rectangular" => Ok(Window::Rectangular),
        other => Err(format!("unknown window '{other}' (rect, hann)")),
    }
}

fn window_name(w: Window) -> &'static str {
    match w {
        Window::Hann => "hann",
        Window::Rectangular => "rect",
    }
}

/// Spectral estimation settings for single-record spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSettings {
    pub window: Window,
    pub overlap: f64,
    pub segment_s: f64,
    pub cutoff_hz: f64,
    pub detrend: Detrend,
    /// Low-pass the records at the cutoff before estimation.
    pub prefilter: bool,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        SpectralSettings { window: Window::Hann, overlap: 0.5, segment_s: 4.0, cutoff_hz: 50.0, detrend: Detrend::Mean, prefilter: false }
    }
}

impl SpectralSettings {
    pub fn welch(&self, sample_rate: f64) -> Result<WelchConfig> {
        let mut cfg = WelchConfig::from_seconds(sample_rate, self.segment_s, self.overlap, self.window)?;
        cfg.detrend = self.detrend;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: Study,
    pub source: Source,
    /// Restricts the directions studied; synthetic runs default to a single 0° job.
    pub directions: Option<Vec<f64>>,
    pub configurations: Option<Vec<Configuration>>,
    pub spectral: SpectralSettings,
    pub target_duration_s: f64,
    pub record_duration_s: f64,
    pub target_segment_s: f64,
    pub target_source: TargetSource,
    pub sample_sizes: Vec<u64>,
    pub mode_counts: Vec<ModeCount>,
    pub truncation_samples: u64,
    /// Realizations per work unit; fixes the reduction order independently of the thread count.
    pub chunk_size: u64,
    pub permutations: usize,
    pub drop_outliers: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            study: Study::Variability,
            source: Source::Synthetic(SyntheticSpec::default()),
            directions: None,
            configurations: None,
            spectral: SpectralSettings::default(),
            target_duration_s: 600.0,
            record_duration_s: 32.0,
            target_segment_s: 4.0,
            target_source: TargetSource::Analytic,
            sample_sizes: vec![1000, 5000, 20000, 40000],
            mode_counts: vec![1, 2, 3, 4, 6].into_iter().map(ModeCount::Count).chain([ModeCount::All]).collect(),
            truncation_samples: 40000,
            chunk_size: 1000,
            permutations: 9999,
            drop_outliers: false,
            seed: 0,
            out_dir: PathBuf::from("podwind-out"),
        }
    }
}

const KEYS: &[&str] = &[
    "study",
    "source",
    "synthetic_spec",
    "records",
    "directions",
    "configurations",
    "window",
    "overlap",
    "segment_s",
    "cutoff_hz",
    "detrend",
    "prefilter",
    "target_duration_s",
    "record_duration_s",
    "target_segment_s",
    "target_source",
    "sample_sizes",
    "mode_counts",
    "truncation_samples",
    "chunk_size",
    "permutations",
    "drop_outliers",
    "seed",
    "out_dir",
];

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

impl StudyConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_kv(&kv, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Builds a configuration from pairs; relative paths resolve against `base`.
    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self> {
        let cfg = |m: String| Error::Config(m);
        for key in kv.keys() {
            if !KEYS.contains(&key) && !key.starts_with("synthetic.") {
                return Err(cfg(format!("unknown key '{key}'")));
            }
        }
        let mut c = StudyConfig::default();
        let value = |key: &str| kv.get(key);
        if let Some(v) = value("study") {
            c.study = v.parse().map_err(cfg)?;
        }

        let mut spec = SyntheticSpec::default();
        if let Some(p) = value("synthetic_spec") {
            let path = base.join(p);
            for (k, v) in KeyValues::read(&path)?.iter() {
                spec.set(k, v)?;
            }
        }
        for (k, v) in kv.iter() {
            if let Some(field) = k.strip_prefix("synthetic.") {
                spec.set(field, v)?;
            }
        }
        c.source = match value("source").unwrap_or(if value("records").is_some() { "records" } else { "synthetic" }) {
            "synthetic" => Source::Synthetic(spec),
            "records" => {
                let paths: Vec<PathBuf> = split_list(kv.require("records").map_err(cfg)?).map(|p| base.join(p)).collect();
                Source::Records(paths)
            }
            other => return Err(cfg(format!("unknown source '{other}' (synthetic, records)"))),
        };

        if value("directions").is_some() {
            c.directions = Some(kv.parse_list("directions").map_err(cfg)?);
        }
        if let Some(v) = value("configurations") {
            c.configurations = Some(split_list(v).map(str::parse).collect::<podwind_core::Result<_>>()?);
        }
        let s = &mut c.spectral;
        if let Some(v) = value("window") {
            s.window = parse_window(v).map_err(cfg)?;
        }
        if let Some(v) = value("detrend") {
            s.detrend = match v {
                "mean" => Detrend::Mean,
                "none" => Detrend::None,
                other => return Err(cfg(format!("unknown detrend '{other}' (mean, none)"))),
            };
        }
        if let Some(v) = value("prefilter") {
            s.prefilter = parse_bool(v).map_err(cfg)?;
        }
        macro_rules! num {
            ($key:literal, $field:expr) => {
                if value($key).is_some() {
                    $field = kv.parse_value($key).map_err(cfg)?;
                }
            };
        }
        num!("overlap", s.overlap);
        num!("segment_s", s.segment_s);
        num!("cutoff_hz", s.cutoff_hz);
        num!("target_duration_s", c.target_duration_s);
        num!("record_duration_s", c.record_duration_s);
        num!("target_segment_s", c.target_segment_s);
        num!("truncation_samples", c.truncation_samples);
        num!("chunk_size", c.chunk_size);
        num!("permutations", c.permutations);
        num!("seed", c.seed);
        if let Some(v) = value("target_source") {
            c.target_source = match v {
                "analytic" => TargetSource::Analytic,
                "sampled" => TargetSource::Sampled,
                other => return Err(cfg(format!("unknown target_source '{other}' (analytic, sampled)"))),
            };
        }
        if value("sample_sizes").is_some() {
            c.sample_sizes = kv.parse_list("sample_sizes").map_err(cfg)?;
        }
        if value("mode_counts").is_some() {
            c.mode_counts = kv.parse_list("mode_counts").map_err(cfg)?;
        }
        if let Some(v) = value("drop_outliers") {
            c.drop_outliers = parse_bool(v).map_err(cfg)?;
        }
        if let Some(v) = value("out_dir") {
            c.out_dir = base.join(v);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_sizes.is_empty() || self.sample_sizes[0] == 0 || self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample_sizes must be a non-empty, strictly increasing list of positive counts".into());
        }
        let counts: Vec<usize> = self.mode_counts.iter().map(|m| m.resolve(usize::MAX)).collect();
        if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("mode_counts must be a non-empty, strictly increasing list of positive counts (N last)".into());
        }
        if self.truncation_samples == 0 || self.chunk_size == 0 {
            return bad("truncation_samples and chunk_size must be positive".into());
        }
        for (name, v) in [
            ("target_duration_s", self.target_duration_s),
            ("record_duration_s", self.record_duration_s),
            ("target_segment_s", self.target_segment_s),
            ("segment_s", self.spectral.segment_s),
            ("cutoff_hz", self.spectral.cutoff_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.spectral.overlap) {
            return bad(format!("overlap {} must lie in [0, 1)", self.spectral.overlap));
        }
        match &self.source {
            Source::Synthetic(spec) => spec.validate()?,
            Source::Records(paths) => {
                if paths.is_empty() {
                    return bad("records list is empty".into());
                }
                if let Some(p) = paths.iter().find(|p| !p.is_file()) {
                    return bad(format!("record file {} does not exist", p.display()));
                }
                if self.target_source == TargetSource::Analytic && self.study != Study::Variability {
                    return bad("an analytic target needs a synthetic source; set target_source = sampled".into());
                }
            }
        }
        Ok(())
    }

    /// Resolved settings in a fixed order; the thread count is not part of it.
    pub fn canonical(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.insert("study", self.study);
        match &self.source {
            Source::Synthetic(spec) => {
                kv.insert("source", "synthetic");
                for (k, v) in spec.to_pairs() {
                    kv.insert(format!("synthetic.{k}"), v);
                }
            }
            Source::Records(paths) => {
                kv.insert("source", "records");
                kv.insert("records", paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","));
            }
        }
        if let Some(d) = &self.directions {
            kv.insert("directions", join_list(d));
        }
        if let Some(c) = &self.configurations {
            kv.insert("configurations", join_list(c));
        }
        let s = &self.spectral;
        kv.insert("window", window_name(s.window));
        kv.insert("overlap", s.overlap);
        kv.insert("segment_s", s.segment_s);
        kv.insert("cutoff_hz", s.cutoff_hz);
        kv.insert("detrend", if s.detrend == Detrend::Mean { "mean" } else { "none" });
        kv.insert("prefilter", s.prefilter);
        kv.insert("target_duration_s", self.target_duration_s);
        kv.insert("record_duration_s", self.record_duration_s);
        kv.insert("target_segment_s", self.target_segment_s);
        kv.insert("target_source", if self.target_source == TargetSource::Analytic { "analytic" } else { "sampled" });
        kv.insert("sample_sizes", join_list(&self.sample_sizes));
        kv.insert("mode_counts", join_list(&self.mode_counts));
        kv.insert("truncation_samples", self.truncation_samples);
        kv.insert("chunk_size", self.chunk_size);
        kv.insert("permutations", self.permutations);
        kv.insert("drop_outliers", self.drop_outliers);
        kv.insert("seed", self.seed);
        kv
    }
}
