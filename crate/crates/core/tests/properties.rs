use num_complex::Complex64;
use podwind_core::ingest::{destandardize, split_records, standardize};
use podwind_core::metrics::{correlation_difference, moments, variance_error, SpectralMoments};
use podwind_core::pod::{captured_energy, decompose, reconstruct};
use podwind_core::record::generic_labels;
use podwind_core::spectral::{welch_cpsd, Detrend, WelchConfig, Window};
use podwind_core::srm::{simulate_realization, SimulationPlan};
use podwind_core::{CpsdMatrix, RecordSet, Sided};
use proptest::prelude::*;

/// Hermitian PSD line `A·Aᴴ` from `n×r` complex entries.
fn gram_line(n: usize, r: usize, a: &[(f64, f64)]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..r {
                let x = Complex64::new(a[i * r + k].0, a[i * r + k].1);
                let y = Complex64::new(a[j * r + k].0, a[j * r + k].1);
                s += x * y.conj();
            }
            out[i * n + j] = s;
        }
    }
    // Exact Hermitian symmetry.
    for i in 0..n {
        out[i * n + i].im = 0.0;
        for j in i + 1..n {
            out[j * n + i] = out[i * n + j].conj();
        }
    }
    out
}

fn psd_matrix() -> impl Strategy<Value = CpsdMatrix> {
    (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(n, r, lines)| {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n * r * lines).prop_map(move |a| {
            let mut values = Vec::new();
            for k in 0..lines {
                values.extend(gram_line(n, r, &a[k * n * r..(k + 1) * n * r]));
            }
            CpsdMatrix::new(generic_labels(n), 0.5, values, Sided::Two).unwrap()
        })
    })
}

fn records(n: usize, len: usize) -> impl Strategy<Value = RecordSet> {
    prop::collection::vec(-3.0f64..3.0, n * len)
        .prop_map(move |d| RecordSet::from_component_major(generic_labels(n), len, d, 100.0).unwrap())
}

fn frob(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn sample_covariance(rs: &RecordSet) -> Vec<f64> {
    let n = rs.n_components();
    let len = rs.n_samples() as f64;
    let means: Vec<f64> = rs.components().map(|c| c.iter().sum::<f64>() / len).collect();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (rs.component(i), rs.component(j));
            cov[i * n + j] = a.iter().zip(b).map(|(x, y)| (x - means[i]) * (y - means[j])).sum::<f64>() / len;
        }
    }
    cov
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn welch_output_is_hermitian_psd(rs in records(3, 96), m in 8usize..32, hann in any::<bool>()) {
        let window = if hann { Window::Hann } else { Window::Rectangular };
        let cfg = WelchConfig { segment_len: m, shift: (m / 2).max(1), window, nfft: None, detrend: Detrend::Mean };
        let s = welch_cpsd(&rs, &cfg).unwrap();
        prop_assert!(s.check_invariants().is_ok());
    }

    #[test]
    fn raw_periodogram_parseval(n in 1usize..4, half in 4usize..64, seed in any::<u64>()) {
        let len = 2 * half;
        let data: Vec<f64> = (0..n * len).map(|k| ((k as u64).wrapping_mul(seed | 1) % 1009) as f64 / 97.0 - 5.0).collect();
        let rs = RecordSet::from_component_major(generic_labels(n), len, data, 50.0).unwrap();
        let s = welch_cpsd(&rs, &WelchConfig::rectangular(len)).unwrap();
        let m = moments(&s, f64::INFINITY).unwrap();
        let cov = sample_covariance(&rs);
        let scale = cov.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        for (a, b) in m.covariances().iter().zip(&cov) {
            prop_assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn pod_trace_and_round_trip(s in psd_matrix()) {
        let modes = decompose(&s).unwrap();
        if let Err(e) = modes.check_invariants() { prop_assert!(false, "{e}"); }
        let n = s.n_components();
        let back = reconstruct(&modes, n).unwrap();
        for k in 0..s.n_lines() {
            let line = s.line(k);
            let trace: f64 = (0..n).map(|i| line[i * n + i].re).sum();
            let sum: f64 = modes.values(k).iter().sum();
            prop_assert!((trace - sum).abs() <= 1e-10 * trace.abs().max(1.0));
            let diff: Vec<Complex64> = line.iter().zip(back.line(k)).map(|(a, b)| a - b).collect();
            prop_assert!(frob(&diff) <= 1e-9 * frob(line).max(1e-300));
        }
    }

    #[test]
    fn truncation_residual_is_dropped_eigenvalues(s in psd_matrix(), keep in 1usize..6) {
        let n = s.n_components();
        let keep = keep.min(n);
        let modes = decompose(&s).unwrap();
        let part = reconstruct(&modes, keep).unwrap();
        for k in 0..s.n_lines() {
            let diff: Vec<Complex64> = s.line(k).iter().zip(part.line(k)).map(|(a, b)| a - b).collect();
            let expected: f64 = modes.values(k)[keep..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let lead = modes.values(k).first().copied().unwrap_or(0.0).max(1e-300);
            prop_assert!((frob(&diff) - expected).abs() <= 1e-9 * lead);
        }
    }

    #[test]
    fn reconstruction_is_idempotent(s in psd_matrix()) {
        let n = s.n_components();
        let once = reconstruct(&decompose(&s).unwrap(), n).unwrap();
        let twice = reconstruct(&decompose(&once).unwrap(), n).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).norm() <= 1e-9 * frob(once.values()).max(1e-300));
        }
    }

    #[test]
    fn captured_energy_is_monotone(s in psd_matrix()) {
        let modes = decompose(&s).unwrap();
        let mut prev = 0.0;
        for nm in 1..=s.n_components() {
            let c = captured_energy(&modes, nm).unwrap().total;
            prop_assert!(c >= prev - 1e-12 && c <= 1.0 + 1e-12);
            prev = c;
        }
        prop_assert!((prev - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn moments_of_reconstruction_match(s in psd_matrix()) {
        let n = s.n_components();
        let back = reconstruct(&decompose(&s).unwrap(), n).unwrap();
        let (a, b) = (moments(&s, f64::INFINITY).unwrap(), moments(&back, f64::INFINITY).unwrap());
        let scale = a.covariances().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (x, y) in a.covariances().iter().zip(b.covariances()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn error_metrics_scale(var in prop::collection::vec(0.5f64..3.0, 3), f in prop::collection::vec(0.5f64..2.0, 3), c in 0.1f64..10.0) {
        let n = 3;
        let mut target = vec![0.0; n * n];
        let mut test = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let r = if i == j { 1.0 } else { 0.3 };
                target[i * n + j] = r * (var[i] * var[j]).sqrt();
                let r2 = if i == j { 1.0 } else { 0.2 };
                test[i * n + j] = r2 * (var[i] * f[i] * var[j] * f[j]).sqrt();
            }
        }
        let t = SpectralMoments::from_covariance(n, target.clone(), 1.0).unwrap();
        let x = SpectralMoments::from_covariance(n, test.clone(), 1.0).unwrap();
        let eps = variance_error(&x, &t).unwrap();
        for i in 0..n {
            prop_assert!((eps[i] - 100.0 * (f[i] - 1.0)).abs() < 1e-9);
        }
        let phi = correlation_difference(&x, &t).unwrap();
        // Common scaling of test and target leaves both metrics unchanged.
        let ts = SpectralMoments::from_covariance(n, target.iter().map(|v| v * c).collect(), 1.0).unwrap();
        let xs = SpectralMoments::from_covariance(n, test.iter().map(|v| v * c).collect(), 1.0).unwrap();
        let eps_s = variance_error(&xs, &ts).unwrap();
        let phi_s = correlation_difference(&xs, &ts).unwrap();
        for (a, b) in eps.iter().zip(&eps_s) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in phi.iter().zip(&phi_s) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Scaling only the test record scales `1 + ε/100` and leaves `φ` alone.
        let xc = SpectralMoments::from_covariance(n, test.iter().map(|v| v * c).collect(), 1.0).unwrap();
        let eps_c = variance_error(&xc, &t).unwrap();
        let phi_c = correlation_difference(&xc, &t).unwrap();
        for i in 0..n {
            prop_assert!(((1.0 + eps_c[i] / 100.0) - c * (1.0 + eps[i] / 100.0)).abs() < 1e-9);
        }
        for (a, b) in phi.iter().zip(&phi_c) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_round_trip(rs in records(2, 40)) {
        let spread: Vec<f64> = rs.components().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        prop_assume!(spread.iter().all(|s| *s > 0.0));
        let Ok((z, scale)) = standardize(&rs) else { return Ok(()) };
        let back = destandardize(&z, &scale).unwrap();
        for i in 0..rs.n_components() {
            let mean = back.means()[i];
            for (a, b) in rs.component(i).iter().zip(back.component(i)) {
                prop_assert!((a - (b + mean)).abs() <= 1e-12 * spread[i].max(1.0));
            }
        }
    }

    #[test]
    fn split_partitions_the_record(len in 200usize..600, target in 0.5f64..1.5, rec in 0.1f64..0.5) {
        let data: Vec<f64> = (0..len).map(|k| (k as f64 * 0.37).sin()).collect();
        let rs = RecordSet::from_component_major(generic_labels(1), len, data, 100.0).unwrap();
        let Ok(split) = split_records(&rs, target, rec) else { return Ok(()) };
        let used = split.target.n_samples() + split.testing.iter().map(RecordSet::n_samples).sum::<usize>();
        prop_assert_eq!(used + split.discarded_samples, len);
        let rec_len = (rec * 100.0).round() as usize;
        prop_assert!(split.discarded_samples < rec_len.max(1));
    }
}

#[test]
fn welch_white_noise_covariance() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (n, m, k) = (3, 256, 64);
    let len = m * k;
    let mix = [[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [-0.3, 0.4, 0.866]];
    let mut data = vec![0.0; n * len];
    for t in 0..len {
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        for i in 0..n {
            data[i * len + t] = (0..n).map(|j| mix[i][j] * z[j]).sum();
        }
    }
    let rs = RecordSet::from_component_major(generic_labels(n), len, data, 100.0).unwrap();
    let m_est = moments(&welch_cpsd(&rs, &WelchConfig::rectangular(m)).unwrap(), f64::INFINITY).unwrap();
    for i in 0..n {
        for j in 0..n {
            let truth: f64 = (0..n).map(|c| mix[i][c] * mix[j][c]).sum();
            let scale = (m_est.variance(i) * m_est.variance(j)).sqrt();
            let got = m_est.covariance(i, j);
            assert!((got - truth).abs() <= 0.05 * scale, "({i},{j}): {got} vs {truth}");
        }
    }
}

#[test]
fn simulation_is_deterministic_and_reaches_target_variance() {
    let spec = podwind_core::SyntheticSpec { n_floors: 1, ..Default::default() };
    let mut target = podwind_core::synthetic::analytic_cpsd(&spec, 2.0 * std::f64::consts::PI / 4.0, 201).unwrap();
    // A constant offset does not survive mean removal.
    for z in target.line_mut(0) {
        *z = Complex64::new(0.0, 0.0);
    }
    let modes = decompose(&target).unwrap();
    let plan = SimulationPlan::full_period(&modes, 3, 1.0 / 625.0, 1, 9);
    let a = simulate_realization(&modes, &plan, 3).unwrap();
    let b = simulate_realization(&modes, &plan, 3).unwrap();
    for i in 0..3 {
        let bits_a: Vec<u64> = a.component(i).iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.component(i).iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
    let tm = moments(&target, 50.0).unwrap();
    let mut mean_var = [0.0; 3];
    let reps = 400;
    for r in 0..reps {
        let x = simulate_realization(&modes, &plan, r).unwrap();
        let cov = sample_covariance(&x);
        for i in 0..3 {
            mean_var[i] += cov[i * 3 + i] / reps as f64;
        }
    }
    for i in 0..3 {
        let rel = mean_var[i] / tm.variance(i) - 1.0;
        assert!(rel.abs() < 0.03, "component {i}: {rel}");
    }
}
