//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use podwind_core::filter::{lowpass, FilterSpec};
use podwind_core::ingest::{ingest, split_records, standardize};
use podwind_core::metrics::{moments, ErrorAccumulator};
use podwind_core::pod::{captured_energy, decompose};
use podwind_core::spectral::{cutoff_line, target_cpsd, truncate_to_cutoff, welch_cpsd};
use podwind_core::srm::{simulate_batch, SynthesisBuffers};
use podwind_core::synthetic::analytic_cpsd;
use podwind_core::{SimulationPlan, Synthesizer};

use crate::archive;
use crate::config::{parse_window, Source, StudyConfig};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::records::{read_geometry, read_pressure_record, read_record_set, read_tap_layout, write_record_set};
use crate::report::{file_hash, report_keys, sha256_hex, table_csv, write_error_report, OutputDir};
use crate::study;

#[derive(Debug, Parser)]
#[command(name = "podwind", version, about = "Spectral POD simulation of multivariate wind loads")]
pub struct Cli {
    /// Key=value settings file (study configuration keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Spectral estimation overrides.
#[derive(Debug, Clone, Args)]
pub struct SpectralFlags {
    /// rect or hann
    #[arg(long, value_parser = parse_window)]
    pub window: Option<podwind_core::Window>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub segment_seconds: Option<f64>,
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pressure records to floor force-coefficient record archives.
    Ingest {
        #[arg(long)]
        taps: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        /// Divide each component by its standard deviation times the reduced variate.
        #[arg(long)]
        standardize: bool,
        #[arg(required = true)]
        pressures: Vec<PathBuf>,
    },
    /// Welch spectra of record archives, one CPSD archive per record.
    Spectra {
        #[command(flatten)]
        spectral: SpectralFlags,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Target spectra from the head of each record archive, or from the synthetic model.
    Target {
        /// Length of the target-defining head of each record, seconds.
        #[arg(long)]
        target_seconds: Option<f64>,
        /// Target segment length, seconds.
        #[arg(long)]
        segment_seconds: Option<f64>,
        #[arg(long)]
        cutoff_hz: Option<f64>,
        /// Closed-form spectra of the configured synthetic model instead of records.
        #[arg(long)]
        analytic: bool,
        records: Vec<PathBuf>,
    },
    /// Spectral modes of a CPSD archive.
    Decompose { cpsd: PathBuf },
    /// Realizations from a modes archive.
    Simulate {
        #[arg(long)]
        modes_file: PathBuf,
        /// Retained modes; all by default.
        #[arg(long)]
        n_modes: Option<usize>,
        #[arg(long, default_value_t = 1)]
        samples: u64,
        /// Defaults to one period of the frequency grid.
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        dt_s: f64,
        /// Write only the ensemble spectra and error statistics against the input.
        #[arg(long)]
        summary_only: bool,
        /// Record archive whose means and scale vector are applied to the output.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Error statistics of test spectra against a target.
    Errors {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        cutoff_hz: Option<f64>,
        #[arg(required = true)]
        tests: Vec<PathBuf>,
    },
    /// Runs the study described by --config.
    Study {
        #[command(flatten)]
        spectral: SpectralFlags,
    },
}

impl Cli {
    fn settings(&self) -> Result<StudyConfig> {
        let mut cfg = match &self.config {
            Some(p) => StudyConfig::read(p)?,
            None => StudyConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        Ok(cfg)
    }
}

fn apply_spectral(cfg: &mut StudyConfig, f: &SpectralFlags) -> Result<()> {
    let s = &mut cfg.spectral;
    if let Some(w) = f.window {
        s.window = w;
    }
    if let Some(o) = f.overlap {
        s.overlap = o;
    }
    if let Some(v) = f.segment_seconds {
        s.segment_s = v;
    }
    if let Some(c) = f.cutoff_hz {
        s.cutoff_hz = c;
    }
    cfg.validate()
}

fn manifest(command: &str, cfg: &StudyConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.insert("tool", concat!("podwind ", env!("CARGO_PKG_VERSION")));
    kv.insert("command", command);
    kv.insert("seed", cfg.seed);
    let canonical = cfg.canonical();
    kv.insert("config_hash", sha256_hex(canonical.to_text().as_bytes()));
    kv
}

fn add_input(kv: &mut KeyValues, path: &Path) -> Result<()> {
    kv.insert(format!("input.{}", path.display()), file_hash(path)?);
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

/// Runs a parsed command line; returns the written manifest.
pub fn run(cli: Cli) -> Result<PathBuf> {
    if let Some(t) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut cfg = cli.settings()?;
    match &cli.command {
        Command::Ingest { taps, geometry, standardize: std_flag, pressures } => {
            let mut kv = manifest("ingest", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let layout = read_tap_layout(taps)?;
            let geom = read_geometry(geometry)?;
            add_input(&mut kv, taps)?;
            add_input(&mut kv, geometry)?;
            for p in pressures {
                let raw = read_pressure_record(p, layout.clone())?;
                add_input(&mut kv, p)?;
                let mut rs = ingest(&raw, &geom)?;
                if *std_flag {
                    let means = rs.means().to_vec();
                    rs = standardize(&rs)?.0;
                    rs.set_means(means)?;
                }
                write_record_set(&out.file(&format!("{}.csv", stem(p)))?, &rs)?;
                out.file(&format!("{}.meta", stem(p)))?;
            }
            out.finish(kv, "manifest-ingest.txt")
        }
        Command::Spectra { spectral, records } => {
            apply_spectral(&mut cfg, spectral)?;
            let mut kv = manifest("spectra", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let s = cfg.spectral;
            for p in records {
                let mut rs = read_record_set(p)?;
                add_input(&mut kv, p)?;
                if s.prefilter {
                    rs = lowpass(&rs, &FilterSpec::new(s.cutoff_hz))?;
                }
                let cpsd = truncate_to_cutoff(&welch_cpsd(&rs, &s.welch(rs.sample_rate())?)?, s.cutoff_hz)?;
                archive::write_cpsd(&out.file(&format!("{}.cpsd", stem(p)))?, &cpsd)?;
            }
            out.finish(kv, "manifest-spectra.txt")
        }
        Command::Target { target_seconds, segment_seconds, cutoff_hz, analytic, records } => {
            if let Some(v) = target_seconds {
                cfg.target_duration_s = *v;
            }
            if let Some(v) = segment_seconds {
                cfg.target_segment_s = *v;
            }
            if let Some(v) = cutoff_hz {
                cfg.spectral.cutoff_hz = *v;
            }
            cfg.validate()?;
            let mut kv = manifest("target", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let cutoff = cfg.spectral.cutoff_hz;
            let target = if *analytic {
                let Source::Synthetic(spec) = &cfg.source else {
                    return Err(Error::Config("--analytic needs a synthetic source".into()));
                };
                let d_omega = 2.0 * std::f64::consts::PI / cfg.target_segment_s;
                analytic_cpsd(spec, d_omega, cutoff_line(d_omega, cutoff) + 1)?
            } else {
                if records.is_empty() {
                    return Err(Error::Config("target needs record archives or --analytic".into()));
                }
                let mut segments = Vec::new();
                for p in records {
                    let rs = read_record_set(p)?;
                    add_input(&mut kv, p)?;
                    let split = split_records(&rs, cfg.target_duration_s, cfg.record_duration_s)?;
                    segments.extend(split.target.segments((cfg.target_segment_s * rs.sample_rate()).round() as usize)?);
                }
                kv.insert("segments", segments.len());
                truncate_to_cutoff(&target_cpsd(&segments, None)?, cutoff)?
            };
            archive::write_cpsd(&out.file("target.cpsd")?, &target)?;
            out.finish(kv, "manifest-target.txt")
        }
        Command::Decompose { cpsd } => {
            let mut kv = manifest("decompose", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let s = archive::read_cpsd(cpsd)?;
            add_input(&mut kv, cpsd)?;
            let modes = decompose(&s)?;
            archive::write_modes(&out.file(&format!("{}.modes", stem(cpsd)))?, &modes)?;
            let rows = (1..=modes.n_components())
                .map(|m| Ok(vec![m.to_string(), captured_energy(&modes, m)?.total.to_string()]))
                .collect::<Result<Vec<_>>>()?;
            out.write_text("captured_energy.csv", &table_csv(&["n_modes", "captured_fraction"], &rows))?;
            out.finish(kv, "manifest-decompose.txt")
        }
        Command::Simulate { modes_file, n_modes, samples, duration_s, dt_s, summary_only, reference } => {
            let mut kv = manifest("simulate", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let modes = archive::read_modes(modes_file)?;
            add_input(&mut kv, modes_file)?;
            let nm = n_modes.unwrap_or(modes.n_components());
            let mut plan = SimulationPlan::full_period(&modes, nm, *dt_s, *samples, cfg.seed);
            if let Some(d) = duration_s {
                plan.n_steps = (d / dt_s).round() as usize;
            }
            if let Some(r) = reference {
                let rs = read_record_set(r)?;
                add_input(&mut kv, r)?;
                plan.means = Some(rs.means().to_vec());
                plan.scale = rs.scale().map(<[f64]>::to_vec);
            }
            kv.insert("n_modes", nm);
            kv.insert("samples", samples);
            kv.insert("n_steps", plan.n_steps);
            kv.insert("dt_s", dt_s);
            let synth = Synthesizer::new(&modes, plan)?;
            if *summary_only {
                // The simulated processes carry nothing on the DC line.
                let mut input = podwind_core::pod::reconstruct(&modes, modes.n_components())?;
                for z in input.line_mut(0) {
                    *z = num_complex::Complex64::new(0.0, 0.0);
                }
                let target = moments(&input, f64::INFINITY)?;
                let mut errors = ErrorAccumulator::new(modes.n_components(), false);
                let mut failure = None;
                let ens = simulate_batch(&synth, modes.n_lines(), 0..*samples, |_, cov| {
                    let step = podwind_core::SpectralMoments::from_upper(modes.n_components(), cov.to_vec(), f64::INFINITY)
                        .and_then(|m| errors.add_moments(&m, &target));
                    if let (Err(e), None) = (step, &failure) {
                        failure = Some(e);
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                archive::write_cpsd(&out.file("ensemble.cpsd")?, &ens.spectra(modes.labels().to_vec())?)?;
                let report = errors.finish(modes.labels().to_vec())?;
                write_error_report(&mut out, "", &report)?;
                report_keys(&mut kv, "", &report);
            } else {
                let mut buf = SynthesisBuffers::default();
                for r in 0..*samples {
                    let rs = synth.realization(r, &mut buf)?;
                    write_record_set(&out.file(&format!("realization_{r:05}.csv"))?, &rs)?;
                    out.file(&format!("realization_{r:05}.meta"))?;
                }
            }
            out.finish(kv, "manifest-simulate.txt")
        }
        Command::Errors { target, cutoff_hz, tests } => {
            if let Some(c) = cutoff_hz {
                cfg.spectral.cutoff_hz = *c;
            }
            let mut kv = manifest("errors", &cfg);
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let cutoff = cfg.spectral.cutoff_hz;
            kv.insert("cutoff_hz", cutoff);
            let t = archive::read_cpsd(target)?;
            add_input(&mut kv, target)?;
            let tm = moments(&t, cutoff)?;
            let mut acc = ErrorAccumulator::new(t.n_components(), true);
            for p in tests {
                let s = archive::read_cpsd(p)?;
                add_input(&mut kv, p)?;
                acc.add_moments(&moments(&s, cutoff)?, &tm)?;
            }
            let report = acc.finish(t.labels().to_vec())?;
            write_error_report(&mut out, "", &report)?;
            report_keys(&mut kv, "", &report);
            out.finish(kv, "manifest-errors.txt")
        }
        Command::Study { spectral } => {
            apply_spectral(&mut cfg, spectral)?;
            study::run_study(&cfg)
        }
    }
}
