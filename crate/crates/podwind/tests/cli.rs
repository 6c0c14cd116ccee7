use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use podwind::error::{EXIT_CONFIG, EXIT_DATA_QUALITY, EXIT_NUMERICAL};
use podwind::kv::KeyValues;
use rand::{Rng, SeedableRng};

fn podwind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podwind")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two floors with four taps each (one per face), 100 Hz, 40 s of correlated noise.
fn write_inputs(dir: &Path, poison: bool) -> (PathBuf, PathBuf, PathBuf) {
    let taps = dir.join("taps.csv");
    let mut layout = String::from("tap_id,floor,area_m2,nx,ny,lever_arm_m\n");
    let faces = [(1.0, 0.0, 5.0), (-1.0, 0.0, 5.0), (0.0, 1.0, 5.0), (0.0, -1.0, 5.0)];
    for floor in 0..2 {
        for (k, (nx, ny, arm)) in faces.iter().enumerate() {
            layout.push_str(&format!("t{floor}{k},{},12.5,{nx},{ny},{arm}\n", floor + 1));
        }
    }
    std::fs::write(&taps, layout).unwrap();
    let geometry = dir.join("geometry.kv");
    std::fs::write(&geometry, "height_m = 20\nbx_m = 10\nby_m = 10\nfloor_elevations_m = 5, 15\n").unwrap();

    let pressures = dir.join("run.csv");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut text = String::from("time");
    for floor in 0..2 {
        for k in 0..4 {
            text.push_str(&format!(",t{floor}{k}"));
        }
    }
    text.push('\n');
    let mut shared = 0.0;
    for t in 0..4000 {
        shared = 0.9 * shared + rng.gen_range(-1.0..1.0);
        text.push_str(&format!("{}", t as f64 * 0.01));
        for c in 0..8 {
            let v: f64 = if poison && t == 1234 && c == 5 { f64::NAN } else { 100.0 + 20.0 * shared + 5.0 * rng.gen_range(-1.0..1.0) + c as f64 };
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    std::fs::write(&pressures, text).unwrap();
    std::fs::write(
        dir.join("run.meta"),
        "sample_rate_hz = 100\np0_pa = 0\nrho_kg_m3 = 1.2\nuh_m_s = 10\ndirection_deg = 0\nconfiguration = SM\n",
    )
    .unwrap();
    (taps, geometry, pressures)
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "status {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
}

#[test]
fn record_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (taps, geometry, pressures) = write_inputs(dir.path(), false);
    let ingested = dir.path().join("ingest");
    assert_ok(&podwind(&["ingest", "--taps", s(&taps), "--geometry", s(&geometry), "--out-dir", s(&ingested), s(&pressures)]));
    let record = ingested.join("run.csv");
    assert!(record.exists() && ingested.join("run.meta").exists());

    let spectra = dir.path().join("spectra");
    assert_ok(&podwind(&[
        "spectra", "--window", "hann", "--overlap", "0.5", "--segment-seconds", "2", "--cutoff-hz", "20", "--out-dir", s(&spectra), s(&record),
    ]));
    let cpsd = spectra.join("run.cpsd");
    let target = podwind::archive::read_cpsd(&cpsd).unwrap();
    assert_eq!(target.n_components(), 6);

    let modes_dir = dir.path().join("modes");
    assert_ok(&podwind(&["decompose", "--out-dir", s(&modes_dir), s(&cpsd)]));
    let modes = modes_dir.join("run.modes");
    assert!(modes_dir.join("captured_energy.csv").exists());

    let sim = dir.path().join("sim");
    assert_ok(&podwind(&["simulate", "--modes-file", s(&modes), "--samples", "2", "--dt-s", "0.01", "--seed", "5", "--out-dir", s(&sim)]));
    assert!(sim.join("realization_00000.csv").exists() && sim.join("realization_00001.csv").exists());

    let summary = dir.path().join("summary");
    assert_ok(&podwind(&[
        "simulate", "--modes-file", s(&modes), "--samples", "400", "--dt-s", "0.01", "--summary-only", "--out-dir", s(&summary),
    ]));
    assert!(summary.join("ensemble.cpsd").exists());
    let manifest = KeyValues::read(&summary.join("manifest-simulate.txt")).unwrap();
    let e: f64 = manifest.parse_value("expected_mu_eps_pct").unwrap();
    assert!(e.abs() < 5.0, "ensemble variance error {e}%");

    let test_spectra = dir.path().join("test-spectra");
    assert_ok(&podwind(&[
        "spectra", "--segment-seconds", "2", "--cutoff-hz", "20", "--out-dir", s(&test_spectra), s(&sim.join("realization_00000.csv")),
        s(&sim.join("realization_00001.csv")),
    ]));
    let errors = dir.path().join("errors");
    assert_ok(&podwind(&[
        "errors", "--target", s(&cpsd), "--cutoff-hz", "20", "--out-dir", s(&errors), s(&test_spectra.join("realization_00000.cpsd")),
        s(&test_spectra.join("realization_00001.cpsd")),
    ]));
    assert!(errors.join("summary.csv").exists());
    let m = KeyValues::read(&errors.join("manifest-errors.txt")).unwrap();
    for (key, value) in m.iter() {
        if let Some(rel) = key.strip_prefix("file.") {
            assert_eq!(podwind::report::file_hash(&errors.join(rel)).unwrap(), value);
        }
    }
}

#[test]
fn config_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.kv");
    std::fs::write(&cfg, "study = variability\nno_such_key = 1\n").unwrap();
    let out = podwind(&["--config", s(&cfg), "--out-dir", s(&dir.path().join("o")), "study"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    std::fs::write(&cfg, "study = model-error\nsample_sizes = 10, 5\n").unwrap();
    let out = podwind(&["--config", s(&cfg), "--out-dir", s(&dir.path().join("o")), "study"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn data_quality_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (taps, geometry, pressures) = write_inputs(dir.path(), true);
    let out = podwind(&["ingest", "--taps", s(&taps), "--geometry", s(&geometry), "--out-dir", s(&dir.path().join("o")), s(&pressures)]);
    assert_eq!(out.status.code(), Some(EXIT_DATA_QUALITY), "{}", String::from_utf8_lossy(&out.stderr));

    // A CPSD archive with a corrupted payload, from clean inputs.
    write_inputs(dir.path(), false);
    let spectra = dir.path().join("s");
    let ingested = dir.path().join("i");
    assert_ok(&podwind(&["ingest", "--taps", s(&taps), "--geometry", s(&geometry), "--out-dir", s(&ingested), s(&pressures)]));
    assert_ok(&podwind(&["spectra", "--segment-seconds", "2", "--out-dir", s(&spectra), s(&ingested.join("run.csv"))]));
    let cpsd = spectra.join("run.cpsd");
    let mut bytes = std::fs::read(&cpsd).unwrap();
    let at = bytes.len() - 8 * 6 * 6 * 2;
    bytes[at..at + 8].copy_from_slice(&(-1e9f64).to_le_bytes());
    std::fs::write(&cpsd, bytes).unwrap();
    let out = podwind(&["decompose", "--out-dir", s(&dir.path().join("d")), s(&cpsd)]);
    assert_eq!(out.status.code(), Some(EXIT_DATA_QUALITY), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failures_map_to_their_exit_code() {
    let e = podwind::Error::Core(podwind_core::Error::EigenNonConvergence { line: 3 });
    assert_eq!(e.exit_code(), EXIT_NUMERICAL);
    let e = podwind::Error::Core(podwind_core::Error::Calibration { line: 0, mode: 1, value: -1.0 });
    assert_eq!(e.exit_code(), EXIT_NUMERICAL);
}
