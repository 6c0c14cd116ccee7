//! The three studies: record variability, model error against sample size and
//! truncation error against mode count.
//!
//! Each direction/configuration pair is an independent job. Ensemble work is
//! split into fixed chunks of realizations and merged in chunk order, so the
//! results do not depend on the number of threads.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::PathBuf;

use num_complex::Complex64;
use podwind_core::filter::{lowpass, FilterSpec};
use podwind_core::ingest::split_records;
use podwind_core::metrics::{
    correlation_difference, moments, off_diagonal_mean, rank_correlation_test, variance_error, ErrorAccumulator,
};
use podwind_core::pod::{captured_component_variance, captured_energy, decompose};
use podwind_core::spectral::{cutoff_line, target_cpsd, truncate_to_cutoff, welch_cpsd};
use podwind_core::srm::{simulate_batch, EnsembleAccumulator};
use podwind_core::synthetic::{analytic_cpsd, record_synthesizer};
use podwind_core::{
    Configuration, CpsdMatrix, ErrorReport, RecordSet, SimulationPlan, SpectralModes, SpectralMoments, Synthesizer,
    SyntheticSpec,
};
use rayon::prelude::*;

use crate::archive;
use crate::config::{Source, Study, StudyConfig, TargetSource};
use crate::error::{Error, Result};
use crate::kv::{join_list, KeyValues};
use crate::records::{read_record_set, sidecar_path};
use crate::report::{file_hash, report_keys, sha256_hex, table_csv, write_error_report, OutputDir};

/// Records further than this many standard deviations from the ensemble are flagged.
pub const OUTLIER_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone)]
enum JobInput {
    Synthetic(SyntheticSpec),
    Records(Vec<PathBuf>),
}

/// One direction/configuration pair.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub direction_deg: f64,
    pub configuration: Configuration,
    /// Study seed plus the job's position in the sorted job list.
    pub seed: u64,
    input: JobInput,
}

/// Results plus the warnings raised while producing them.
#[derive(Debug, Clone)]
pub struct Outcome<T> {
    pub results: Vec<T>,
    pub warnings: Vec<String>,
}

fn job_label(direction: f64, configuration: Configuration) -> String {
    format!("dir{direction}_{configuration}")
}

/// Expands the configuration into jobs. Requested directions or configurations
/// without records are skipped with a warning.
pub fn plan_jobs(cfg: &StudyConfig) -> Result<(Vec<Job>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut keys: Vec<(f64, Configuration, JobInput)> = Vec::new();
    match &cfg.source {
        Source::Synthetic(spec) => {
            let dirs = cfg.directions.clone().unwrap_or_else(|| vec![0.0]);
            let confs = cfg.configurations.clone().unwrap_or_else(|| vec![Configuration::SingleModel]);
            for &d in &dirs {
                for &c in &confs {
                    keys.push((d, c, JobInput::Synthetic(spec.clone())));
                }
            }
        }
        Source::Records(paths) => {
            let mut groups: Vec<(f64, Configuration, Vec<PathBuf>)> = Vec::new();
            for p in paths {
                let meta = sidecar_path(p);
                let kv = KeyValues::read(&meta)?;
                let bad = |m: String| Error::Config(format!("{}: {m}", meta.display()));
                let d: f64 = kv.parse_value("direction_deg").map_err(bad)?;
                let c: Configuration = kv.require("configuration").map_err(bad)?.parse()?;
                match groups.iter_mut().find(|g| g.0 == d && g.1 == c) {
                    Some(g) => g.2.push(p.clone()),
                    None => groups.push((d, c, vec![p.clone()])),
                }
            }
            if let Some(dirs) = &cfg.directions {
                for d in dirs {
                    if !groups.iter().any(|g| g.0 == *d) {
                        warnings.push(format!("direction {d}: no records, skipped"));
                    }
                }
            }
            if let Some(confs) = &cfg.configurations {
                for c in confs {
                    if !groups.iter().any(|g| g.1 == *c) {
                        warnings.push(format!("configuration {c}: no records, skipped"));
                    }
                }
            }
            for (d, c, files) in groups {
                let keep_dir = cfg.directions.as_ref().is_none_or(|ds| ds.contains(&d));
                let keep_conf = cfg.configurations.as_ref().is_none_or(|cs| cs.contains(&c));
                if keep_dir && keep_conf {
                    keys.push((d, c, JobInput::Records(files)));
                }
            }
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 as u8).cmp(&(b.1 as u8))));
    let jobs = keys
        .into_iter()
        .enumerate()
        .map(|(idx, (d, c, input))| Job {
            label: job_label(d, c),
            direction_deg: d,
            configuration: c,
            seed: cfg.seed.wrapping_add(idx as u64),
            input,
        })
        .collect();
    Ok((jobs, warnings))
}

/// Supplies the repetitions (long records) of a job.
enum Repetitions {
    Synthetic { synth: Box<Synthesizer>, count: usize },
    Records(Vec<PathBuf>),
}

impl Repetitions {
    fn new(job: &Job) -> Result<Self> {
        Ok(match &job.input {
            JobInput::Synthetic(spec) => Repetitions::Synthetic {
                synth: Box::new(record_synthesizer(spec, job.seed, spec.duration_s)?),
                count: spec.n_repetitions,
            },
            JobInput::Records(files) => Repetitions::Records(files.clone()),
        })
    }

    fn len(&self) -> usize {
        match self {
            Repetitions::Synthetic { count, .. } => *count,
            Repetitions::Records(files) => files.len(),
        }
    }

    fn get(&self, r: usize, job: &Job) -> Result<RecordSet> {
        match self {
            Repetitions::Synthetic { synth, .. } => {
                let mut buf = Default::default();
                Ok(synth.realization(r as u64, &mut buf)?.with_metadata(job.direction_deg, job.configuration))
            }
            Repetitions::Records(files) => read_record_set(&files[r]),
        }
    }
}

/// Target segments and testing-record moments of one repetition.
struct RepParts {
    target_segments: Vec<RecordSet>,
    tests: Vec<SpectralMoments>,
    discarded_samples: usize,
}

fn prepare_repetition(cfg: &StudyConfig, rs: RecordSet, with_tests: bool) -> Result<RepParts> {
    let s = &cfg.spectral;
    let rs = if s.prefilter { lowpass(&rs, &FilterSpec::new(s.cutoff_hz))? } else { rs };
    let split = split_records(&rs, cfg.target_duration_s, cfg.record_duration_s)?;
    let seg_n = (cfg.target_segment_s * rs.sample_rate()).round() as usize;
    let target_segments = split.target.segments(seg_n)?;
    let tests = if with_tests {
        let welch = s.welch(rs.sample_rate())?;
        split
            .testing
            .par_iter()
            .map(|rec| Ok(moments(&welch_cpsd(rec, &welch)?, s.cutoff_hz)?))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(RepParts { target_segments, tests, discarded_samples: split.discarded_samples })
}

/// Target spectra from every repetition, with the testing moments if requested.
fn collect_repetitions(cfg: &StudyConfig, job: &Job, with_tests: bool) -> Result<(CpsdMatrix, Vec<SpectralMoments>, usize)> {
    let reps = Repetitions::new(job)?;
    if reps.len() == 0 {
        return Err(Error::Config(format!("{}: no repetitions", job.label)));
    }
    let parts = (0..reps.len())
        .into_par_iter()
        .map(|r| prepare_repetition(cfg, reps.get(r, job)?, with_tests))
        .collect::<Result<Vec<_>>>()?;
    let mut segments = Vec::new();
    let mut tests = Vec::new();
    let mut discarded = 0;
    for p in parts {
        segments.extend(p.target_segments);
        tests.extend(p.tests);
        discarded += p.discarded_samples;
    }
    Ok((target_cpsd(&segments, None)?, tests, discarded))
}

/// Indices of records whose variance, for some component, lies more than
/// [`OUTLIER_SIGMAS`] standard deviations from the ensemble mean.
pub fn flag_outliers(tests: &[SpectralMoments]) -> Vec<usize> {
    if tests.len() < 3 {
        return Vec::new();
    }
    let n = tests[0].n_components();
    let r = tests.len() as f64;
    let mut flagged = Vec::new();
    let stats: Vec<(f64, f64)> = (0..n)
        .map(|c| {
            let m = tests.iter().map(|t| t.variance(c)).sum::<f64>() / r;
            let v = tests.iter().map(|t| (t.variance(c) - m).powi(2)).sum::<f64>() / (r - 1.0);
            (m, v.sqrt())
        })
        .collect();
    for (idx, t) in tests.iter().enumerate() {
        if stats.iter().enumerate().any(|(c, (m, s))| *s > 0.0 && (t.variance(c) - m).abs() > OUTLIER_SIGMAS * s) {
            flagged.push(idx);
        }
    }
    flagged
}

#[derive(Debug, Clone)]
pub struct VariabilityResult {
    pub job: Job,
    pub report: ErrorReport,
    /// Target spectra up to the cutoff.
    pub target: CpsdMatrix,
    /// Rank correlation between `|ρ_t|` and `σ_φ` over component pairs, and its
    /// one-sided permutation p-value for a negative association.
    pub rank_rho: f64,
    pub rank_p: f64,
    /// Testing records flagged as outliers (indices before any dropping).
    pub flagged: Vec<usize>,
    pub discarded_samples: usize,
}

pub fn run_variability(cfg: &StudyConfig) -> Result<Outcome<VariabilityResult>> {
    let (jobs, mut warnings) = plan_jobs(cfg)?;
    let mut results = Vec::new();
    for job in jobs {
        let (target, mut tests, discarded) = collect_repetitions(cfg, &job, true)?;
        if tests.is_empty() {
            return Err(Error::Config(format!("{}: no testing records after the split", job.label)));
        }
        let cutoff = cfg.spectral.cutoff_hz;
        let target_m = moments(&target, cutoff)?;
        let flagged = flag_outliers(&tests);
        for idx in &flagged {
            warnings.push(format!("{}: record {idx} variance deviates more than {OUTLIER_SIGMAS} sigma", job.label));
        }
        if cfg.drop_outliers && !flagged.is_empty() {
            let mut idx = 0;
            tests.retain(|_| {
                idx += 1;
                !flagged.contains(&(idx - 1))
            });
            if tests.is_empty() {
                return Err(Error::Config(format!("{}: every testing record was dropped", job.label)));
            }
        }
        let n = target.n_components();
        let mut acc = ErrorAccumulator::new(n, true);
        for t in &tests {
            acc.add_moments(t, &target_m)?;
        }
        let report = acc.finish(target.labels().to_vec())?;
        let (rank_rho, rank_p) = match &report.spread {
            Some(spread) => {
                let rho = target_m.correlation()?;
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for i in 0..n {
                    for j in i + 1..n {
                        a.push(rho[i * n + j].abs());
                        b.push(spread.sigma_phi[i * n + j]);
                    }
                }
                if a.len() >= 2 {
                    rank_correlation_test(&a, &b, cfg.permutations, job.seed)?
                } else {
                    (f64::NAN, f64::NAN)
                }
            }
            None => (f64::NAN, f64::NAN),
        };
        let target = truncate_to_cutoff(&target, cutoff)?;
        results.push(VariabilityResult { job, report, target, rank_rho, rank_p, flagged, discarded_samples: discarded });
    }
    Ok(Outcome { results, warnings })
}

/// Error statistics after a given number of realizations.
#[derive(Debug, Clone)]
pub struct EnsembleRow {
    pub n_samples: u64,
    /// Statistics over realizations of each realization's `ε` and `φ`.
    pub report: ErrorReport,
    /// `ε` and `φ` of the ensemble-averaged spectra against the target.
    pub ensemble_eps: Vec<f64>,
    pub ensemble_phi: Vec<f64>,
}

impl EnsembleRow {
    /// `E[μ_ε]` in percent.
    pub fn expected_mu_eps(&self) -> f64 {
        self.report.expected_mu_eps()
    }

    pub fn mu_eps_range(&self) -> (f64, f64) {
        self.report.mu_eps_range()
    }

    /// Root mean square of `μ_ε` over components.
    pub fn rms_mu_eps(&self) -> f64 {
        let m = &self.report.mu_eps;
        (m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64).sqrt()
    }

    /// `E[μ_φ]` from the ensemble-averaged spectra.
    pub fn expected_mu_phi(&self) -> f64 {
        off_diagonal_mean(&self.ensemble_phi, self.report.n_components())
    }

    /// Extremes of the ensemble `φ` over component pairs.
    pub fn mu_phi_range(&self) -> (f64, f64) {
        let n = self.report.n_components();
        (0..n * n)
            .filter(|idx| idx / n != idx % n)
            .map(|idx| self.ensemble_phi[idx])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

fn run_chunk(
    synth: &Synthesizer,
    n_lines: usize,
    range: Range<u64>,
    target: &SpectralMoments,
) -> Result<(EnsembleAccumulator, ErrorAccumulator)> {
    let n = synth.n_components();
    let mut errors = ErrorAccumulator::new(n, false);
    let mut failure = None;
    let ens = simulate_batch(synth, n_lines, range, |_, cov| {
        if failure.is_some() {
            return;
        }
        let step = SpectralMoments::from_upper(n, cov.to_vec(), target.cutoff_hz).and_then(|m| errors.add_moments(&m, target));
        if let Err(e) = step {
            failure = Some(e);
        }
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok((ens, errors)),
    }
}

/// Simulates `0..ladder.last()` realizations with `n_modes` modes and reports
/// after every rung of `ladder`.
pub fn run_ensemble(
    modes: &SpectralModes,
    n_modes: usize,
    sample_rate: f64,
    seed: u64,
    ladder: &[u64],
    target: &SpectralMoments,
    chunk_size: u64,
) -> Result<Vec<EnsembleRow>> {
    let last = *ladder.last().ok_or_else(|| Error::Config("empty sample-size ladder".into()))?;
    let plan = SimulationPlan::full_period(modes, n_modes, 1.0 / sample_rate, last, seed);
    let synth = Synthesizer::new(modes, plan)?;
    let n = modes.n_components();
    let n_lines = modes.n_lines();
    let labels = modes.labels().to_vec();
    let mut ens = EnsembleAccumulator::new(n, n_lines, modes.d_omega());
    let mut errors = ErrorAccumulator::new(n, false);
    let mut rows = Vec::with_capacity(ladder.len());
    let mut start = 0;
    for &rung in ladder {
        let chunks: Vec<Range<u64>> =
            (start..rung).step_by(chunk_size as usize).map(|a| a..(a + chunk_size).min(rung)).collect();
        let parts = chunks
            .into_par_iter()
            .map(|r| run_chunk(&synth, n_lines, r, target))
            .collect::<Result<Vec<_>>>()?;
        for (e, r) in parts {
            ens.merge(&e)?;
            errors.merge(&r)?;
        }
        start = rung;
        let spectra = ens.spectra(labels.clone())?;
        let m = moments(&spectra, target.cutoff_hz)?;
        rows.push(EnsembleRow {
            n_samples: rung,
            report: errors.clone().finish(labels.clone())?,
            ensemble_eps: variance_error(&m, target)?,
            ensemble_phi: correlation_difference(&m, target)?,
        });
    }
    Ok(rows)
}

/// Simulation target of a job on lines up to the cutoff, with the DC line
/// removed (the simulated processes are zero-mean), and its sample rate.
pub fn model_target(cfg: &StudyConfig, job: &Job) -> Result<(CpsdMatrix, f64)> {
    let cutoff = cfg.spectral.cutoff_hz;
    let (full, rate) = match (&job.input, cfg.target_source) {
        (JobInput::Synthetic(spec), TargetSource::Analytic) => {
            let d_omega = 2.0 * PI / cfg.target_segment_s;
            (analytic_cpsd(spec, d_omega, cutoff_line(d_omega, cutoff) + 1)?, spec.sample_rate_hz)
        }
        (input, _) => {
            let (target, _, _) = collect_repetitions(cfg, job, false)?;
            let rate = match input {
                JobInput::Synthetic(spec) => spec.sample_rate_hz,
                JobInput::Records(files) => read_record_set(&files[0])?.sample_rate(),
            };
            (target, rate)
        }
    };
    let mut target = truncate_to_cutoff(&full, cutoff)?;
    for z in target.line_mut(0) {
        *z = Complex64::new(0.0, 0.0);
    }
    Ok((target, rate))
}

#[derive(Debug, Clone)]
pub struct ModelErrorResult {
    pub job: Job,
    pub target: CpsdMatrix,
    pub modes: SpectralModes,
    pub rows: Vec<EnsembleRow>,
}

pub fn run_model_error(cfg: &StudyConfig) -> Result<Outcome<ModelErrorResult>> {
    let (jobs, warnings) = plan_jobs(cfg)?;
    let mut results = Vec::new();
    for job in jobs {
        let (target, rate) = model_target(cfg, &job)?;
        let target_m = moments(&target, cfg.spectral.cutoff_hz)?;
        let modes = decompose(&target)?;
        let n = modes.n_components();
        let rows = run_ensemble(&modes, n, rate, job.seed, &cfg.sample_sizes, &target_m, cfg.chunk_size)?;
        results.push(ModelErrorResult { job, target, modes, rows });
    }
    Ok(Outcome { results, warnings })
}

#[derive(Debug, Clone)]
pub struct TruncationRow {
    pub n_modes: usize,
    /// Frequency-integrated share of the trace carried by the retained modes.
    pub captured_fraction: f64,
    /// `ε` implied by the retained modes' share of each component's variance.
    pub predicted_eps: Vec<f64>,
    pub row: EnsembleRow,
}

impl TruncationRow {
    pub fn expected_predicted_eps(&self) -> f64 {
        self.predicted_eps.iter().sum::<f64>() / self.predicted_eps.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct TruncationResult {
    pub job: Job,
    pub target: CpsdMatrix,
    pub modes: SpectralModes,
    pub rows: Vec<TruncationRow>,
}

pub fn run_truncation(cfg: &StudyConfig) -> Result<Outcome<TruncationResult>> {
    let (jobs, mut warnings) = plan_jobs(cfg)?;
    let mut results = Vec::new();
    for job in jobs {
        let (target, rate) = model_target(cfg, &job)?;
        let target_m = moments(&target, cfg.spectral.cutoff_hz)?;
        let modes = decompose(&target)?;
        let n = modes.n_components();
        let mut rows = Vec::new();
        for count in &cfg.mode_counts {
            let nm = count.resolve(n);
            if nm > n {
                warnings.push(format!("{}: mode count {nm} exceeds {n} components, skipped", job.label));
                continue;
            }
            let share = captured_component_variance(&modes, nm, modes.n_lines() - 1)?;
            let predicted_eps = share.iter().map(|s| 100.0 * (s - 1.0)).collect();
            let mut ensemble = run_ensemble(&modes, nm, rate, job.seed, &[cfg.truncation_samples], &target_m, cfg.chunk_size)?;
            rows.push(TruncationRow {
                n_modes: nm,
                captured_fraction: captured_energy(&modes, nm)?.total,
                predicted_eps,
                row: ensemble.remove(0),
            });
        }
        results.push(TruncationResult { job, target, modes, rows });
    }
    Ok(Outcome { results, warnings })
}

fn ensemble_columns(r: &EnsembleRow) -> Vec<String> {
    let (lo, hi) = r.mu_eps_range();
    let (plo, phi) = r.mu_phi_range();
    vec![
        r.expected_mu_eps().to_string(),
        lo.to_string(),
        hi.to_string(),
        r.rms_mu_eps().to_string(),
        r.report.expected_sigma_eps().map(|v| v.to_string()).unwrap_or_default(),
        r.expected_mu_phi().to_string(),
        plo.to_string(),
        phi.to_string(),
        r.report.expected_sigma_phi().map(|v| v.to_string()).unwrap_or_default(),
    ]
}

const ENSEMBLE_HEADER: [&str; 9] = [
    "expected_mu_eps_pct",
    "min_mu_eps_pct",
    "max_mu_eps_pct",
    "rms_mu_eps_pct",
    "expected_sigma_eps_pct",
    "expected_mu_phi",
    "min_mu_phi",
    "max_mu_phi",
    "expected_sigma_phi",
];

fn write_ensemble_row(out: &mut OutputDir, prefix: &str, r: &EnsembleRow) -> Result<()> {
    write_error_report(out, prefix, &r.report)?;
    out.write_text(&format!("{prefix}ensemble_phi.csv"), &crate::report::grid_csv(&r.report.labels, &r.ensemble_phi))?;
    Ok(())
}

/// Manifest entries shared by every study run.
pub fn base_manifest(cfg: &StudyConfig) -> Result<KeyValues> {
    let canonical = cfg.canonical();
    let mut kv = KeyValues::new();
    kv.insert("tool", concat!("podwind ", env!("CARGO_PKG_VERSION")));
    kv.insert("command", "study");
    kv.insert("study", cfg.study);
    kv.insert("seed", cfg.seed);
    kv.insert("config_hash", sha256_hex(canonical.to_text().as_bytes()));
    for (k, v) in canonical.iter() {
        kv.insert(format!("config.{k}"), v);
    }
    if let Source::Records(paths) = &cfg.source {
        for p in paths {
            kv.insert(format!("input.{}", p.display()), file_hash(p)?);
            let meta = sidecar_path(p);
            kv.insert(format!("input.{}", meta.display()), file_hash(&meta)?);
        }
    }
    Ok(kv)
}

fn job_keys(kv: &mut KeyValues, job: &Job) {
    kv.insert(format!("job.{}.seed", job.label), job.seed);
    kv.insert(format!("job.{}.direction_deg", job.label), job.direction_deg);
    kv.insert(format!("job.{}.configuration", job.label), job.configuration);
}

fn add_warnings(kv: &mut KeyValues, warnings: &[String]) {
    kv.insert("warnings", warnings.len());
    for (i, w) in warnings.iter().enumerate() {
        log::warn!("{w}");
        kv.insert(format!("warning.{i}"), w);
    }
}

/// Runs the configured study and writes its outputs and `manifest.txt` under `cfg.out_dir`.
/// Returns the manifest path.
pub fn run_study(cfg: &StudyConfig) -> Result<PathBuf> {
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let mut kv = base_manifest(cfg)?;
    match cfg.study {
        Study::Variability => {
            let o = run_variability(cfg)?;
            for r in &o.results {
                let p = format!("{}/", r.job.label);
                job_keys(&mut kv, &r.job);
                write_error_report(&mut out, &p, &r.report)?;
                archive::write_cpsd(&out.file(&format!("{p}target.cpsd"))?, &r.target)?;
                report_keys(&mut kv, &format!("job.{}.", r.job.label), &r.report);
                kv.insert(format!("job.{}.rank_rho_abs_rho_t_sigma_phi", r.job.label), r.rank_rho);
                kv.insert(format!("job.{}.rank_p", r.job.label), r.rank_p);
                kv.insert(format!("job.{}.flagged_records", r.job.label), join_list(&r.flagged));
                kv.insert(format!("job.{}.discarded_samples", r.job.label), r.discarded_samples);
            }
            add_warnings(&mut kv, &o.warnings);
        }
        Study::ModelError => {
            let o = run_model_error(cfg)?;
            for r in &o.results {
                let p = format!("{}/", r.job.label);
                job_keys(&mut kv, &r.job);
                archive::write_cpsd(&out.file(&format!("{p}target.cpsd"))?, &r.target)?;
                archive::write_modes(&out.file(&format!("{p}target.modes"))?, &r.modes)?;
                let mut header = vec!["n_samples"];
                header.extend(ENSEMBLE_HEADER);
                let rows: Vec<Vec<String>> = r
                    .rows
                    .iter()
                    .map(|row| std::iter::once(row.n_samples.to_string()).chain(ensemble_columns(row)).collect())
                    .collect();
                out.write_text(&format!("{p}convergence.csv"), &table_csv(&header, &rows))?;
                for row in &r.rows {
                    write_ensemble_row(&mut out, &format!("{p}n{}/", row.n_samples), row)?;
                }
                if let Some(last) = r.rows.last() {
                    report_keys(&mut kv, &format!("job.{}.", r.job.label), &last.report);
                    kv.insert(format!("job.{}.ensemble_expected_mu_phi", r.job.label), last.expected_mu_phi());
                }
            }
            add_warnings(&mut kv, &o.warnings);
        }
        Study::Truncation => {
            let o = run_truncation(cfg)?;
            for r in &o.results {
                let p = format!("{}/", r.job.label);
                job_keys(&mut kv, &r.job);
                archive::write_cpsd(&out.file(&format!("{p}target.cpsd"))?, &r.target)?;
                let mut header = vec!["n_modes", "captured_fraction", "predicted_expected_eps_pct"];
                header.extend(ENSEMBLE_HEADER);
                let rows: Vec<Vec<String>> = r
                    .rows
                    .iter()
                    .map(|t| {
                        [t.n_modes.to_string(), t.captured_fraction.to_string(), t.expected_predicted_eps().to_string()]
                            .into_iter()
                            .chain(ensemble_columns(&t.row))
                            .collect()
                    })
                    .collect();
                out.write_text(&format!("{p}truncation.csv"), &table_csv(&header, &rows))?;
                for t in &r.rows {
                    write_ensemble_row(&mut out, &format!("{p}modes{}/", t.n_modes), &t.row)?;
                }
            }
            add_warnings(&mut kv, &o.warnings);
        }
    }
    out.finish(kv, "manifest.txt")
}
