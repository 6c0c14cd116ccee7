//! Spectral moments, variance errors and correlation differences, and their
//! statistics over an ensemble of records.
//!
//! Covariances come from the cospectrum only: the quad-spectrum integrates to
//! zero over the symmetric band and is ignored by definition.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::spectral::{cutoff_line, symmetric_trapezoid_weights, CpsdMatrix};

/// Variances and covariances from the symmetric spectral integral.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMoments {
    n: usize,
    /// Row-major `N×N`, symmetric.
    cov: Vec<f64>,
    pub cutoff_hz: f64,
}

impl SpectralMoments {
    pub fn from_covariance(n: usize, cov: Vec<f64>, cutoff_hz: f64) -> Result<Self> {
        if n == 0 || cov.len() != n * n {
            return Err(Error::Shape(format!("{} covariance entries for {n} components", cov.len())));
        }
        Ok(SpectralMoments { n, cov, cutoff_hz })
    }

    /// From a matrix whose upper triangle (diagonal included) is filled.
    pub fn from_upper(n: usize, mut cov: Vec<f64>, cutoff_hz: f64) -> Result<Self> {
        if cov.len() == n * n {
            for i in 0..n {
                for j in 0..i {
                    cov[i * n + j] = cov[j * n + i];
                }
            }
        }
        Self::from_covariance(n, cov, cutoff_hz)
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[i * self.n + i]
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.variance(i)).collect()
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.n + j]
    }

    pub fn covariances(&self) -> &[f64] {
        &self.cov
    }

    /// `σ_ij / √(σ²_ii σ²_jj)`; errors on a zero variance.
    pub fn correlation(&self) -> Result<Vec<f64>> {
        let n = self.n;
        for i in 0..n {
            if !(self.variance(i) > 0.0) {
                return Err(Error::DegenerateTarget { component: i });
            }
        }
        let mut rho = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                rho[i * n + j] = if i == j {
                    1.0
                } else {
                    self.covariance(i, j) / (self.variance(i) * self.variance(j)).sqrt()
                };
            }
        }
        Ok(rho)
    }
}

/// Integrates `S` over `[−ω_c, ω_c]` with the trapezoid rule; `ω_c` is the
/// last line at or below `cutoff_hz`, or the end of the grid.
pub fn moments(s: &CpsdMatrix, cutoff_hz: f64) -> Result<SpectralMoments> {
    if s.n_lines() == 0 || !(cutoff_hz >= 0.0) {
        return Err(Error::EmptySpectrum(format!("nothing to integrate below {cutoff_hz} Hz")));
    }
    let n = s.n_components();
    let n_lines = cutoff_line(s.d_omega(), cutoff_hz).saturating_add(1).min(s.n_lines());
    let weights = symmetric_trapezoid_weights(n_lines, s.d_omega());
    let mut cov = vec![0.0; n * n];
    for (k, w) in weights.iter().enumerate() {
        for (c, z) in cov.iter_mut().zip(s.line(k)) {
            *c += w * z.re;
        }
    }
    // Hermitian input gives a symmetric cospectrum; enforce it exactly.
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (cov[i * n + j] + cov[j * n + i]);
            cov[i * n + j] = m;
            cov[j * n + i] = m;
        }
    }
    SpectralMoments::from_covariance(n, cov, cutoff_hz)
}

fn check_pair(test: &SpectralMoments, target: &SpectralMoments) -> Result<()> {
    if test.n != target.n {
        return Err(Error::Shape(format!("{} test components against {} target components", test.n, target.n)));
    }
    Ok(())
}

/// `ε_i = 100 (σ²_i − σ²_i,T) / σ²_i,T`, in percent.
pub fn variance_error(test: &SpectralMoments, target: &SpectralMoments) -> Result<Vec<f64>> {
    check_pair(test, target)?;
    (0..test.n)
        .map(|i| {
            let t = target.variance(i);
            if !(t > 0.0) {
                return Err(Error::DegenerateTarget { component: i });
            }
            Ok(100.0 * (test.variance(i) - t) / t)
        })
        .collect()
}

/// `φ_ij = ρ_ij,T − ρ_ij`, target minus test; zero on the diagonal.
pub fn correlation_difference(test: &SpectralMoments, target: &SpectralMoments) -> Result<Vec<f64>> {
    check_pair(test, target)?;
    let rt = target.correlation()?;
    let rr = test.correlation()?;
    Ok(rt.iter().zip(&rr).map(|(a, b)| a - b).collect())
}

/// Mean of the off-diagonal entries of a row-major `N×N` matrix.
pub fn off_diagonal_mean(m: &[f64], n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += m[i * n + j];
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Streaming statistics of `ε` and `φ` over records (Welford updates,
/// deterministic in the order records are added and merged).
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    n: usize,
    count: u64,
    mean_eps: Vec<f64>,
    /// Co-moment of the `ε` columns, `N×N`.
    comoment_eps: Vec<f64>,
    min_eps: Vec<f64>,
    max_eps: Vec<f64>,
    mean_phi: Vec<f64>,
    m2_phi: Vec<f64>,
    min_phi: Vec<f64>,
    max_phi: Vec<f64>,
    keep: bool,
    records_eps: Vec<f64>,
    records_phi: Vec<f64>,
}

impl ErrorAccumulator {
    /// `keep_records` retains every record's `ε` and `φ` in the report.
    pub fn new(n: usize, keep_records: bool) -> Self {
        ErrorAccumulator {
            n,
            count: 0,
            mean_eps: vec![0.0; n],
            comoment_eps: vec![0.0; n * n],
            min_eps: vec![f64::INFINITY; n],
            max_eps: vec![f64::NEG_INFINITY; n],
            mean_phi: vec![0.0; n * n],
            m2_phi: vec![0.0; n * n],
            min_phi: vec![f64::INFINITY; n * n],
            max_phi: vec![f64::NEG_INFINITY; n * n],
            keep: keep_records,
            records_eps: Vec::new(),
            records_phi: Vec::new(),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn add(&mut self, eps: &[f64], phi: &[f64]) -> Result<()> {
        let n = self.n;
        if eps.len() != n || phi.len() != n * n {
            return Err(Error::Shape(format!("record with {} errors and {} differences for {n} components", eps.len(), phi.len())));
        }
        self.count += 1;
        let c = self.count as f64;
        let delta: Vec<f64> = eps.iter().zip(&self.mean_eps).map(|(e, m)| e - m).collect();
        for (m, d) in self.mean_eps.iter_mut().zip(&delta) {
            *m += d / c;
        }
        for i in 0..n {
            let after = eps[i] - self.mean_eps[i];
            for j in 0..n {
                self.comoment_eps[i * n + j] += delta[j] * after;
            }
            self.min_eps[i] = self.min_eps[i].min(eps[i]);
            self.max_eps[i] = self.max_eps[i].max(eps[i]);
        }
        for idx in 0..n * n {
            let d = phi[idx] - self.mean_phi[idx];
            self.mean_phi[idx] += d / c;
            self.m2_phi[idx] += d * (phi[idx] - self.mean_phi[idx]);
            self.min_phi[idx] = self.min_phi[idx].min(phi[idx]);
            self.max_phi[idx] = self.max_phi[idx].max(phi[idx]);
        }
        if self.keep {
            self.records_eps.extend_from_slice(eps);
            self.records_phi.extend_from_slice(phi);
        }
        Ok(())
    }

    /// Adds one record's errors computed from test and target moments.
    pub fn add_moments(&mut self, test: &SpectralMoments, target: &SpectralMoments) -> Result<()> {
        let eps = variance_error(test, target)?;
        let phi = correlation_difference(test, target)?;
        self.add(&eps, &phi)
    }

    /// Chan's pairwise combination of two accumulators.
    pub fn merge(&mut self, other: &ErrorAccumulator) -> Result<()> {
        if other.n != self.n || other.keep != self.keep {
            return Err(Error::Shape("merging error accumulators of different shape".into()));
        }
        if other.count == 0 {
            return Ok(());
        }
        let n = self.n;
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let delta: Vec<f64> = other.mean_eps.iter().zip(&self.mean_eps).map(|(b, a)| b - a).collect();
        for i in 0..n {
            for j in 0..n {
                self.comoment_eps[i * n + j] += other.comoment_eps[i * n + j] + delta[i] * delta[j] * na * nb / total;
            }
            self.mean_eps[i] += delta[i] * nb / total;
            self.min_eps[i] = self.min_eps[i].min(other.min_eps[i]);
            self.max_eps[i] = self.max_eps[i].max(other.max_eps[i]);
        }
        for idx in 0..n * n {
            let d = other.mean_phi[idx] - self.mean_phi[idx];
            self.m2_phi[idx] += other.m2_phi[idx] + d * d * na * nb / total;
            self.mean_phi[idx] += d * nb / total;
            self.min_phi[idx] = self.min_phi[idx].min(other.min_phi[idx]);
            self.max_phi[idx] = self.max_phi[idx].max(other.max_phi[idx]);
        }
        self.count += other.count;
        self.records_eps.extend_from_slice(&other.records_eps);
        self.records_phi.extend_from_slice(&other.records_phi);
        Ok(())
    }

    pub fn finish(self, labels: Vec<String>) -> Result<ErrorReport> {
        let n = self.n;
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} components", labels.len())));
        }
        if self.count == 0 {
            return Err(Error::Argument("error statistics need at least one record".into()));
        }
        let spread = if self.count >= 2 {
            let dof = (self.count - 1) as f64;
            let sigma_eps: Vec<f64> = (0..n).map(|i| (self.comoment_eps[i * n + i] / dof).max(0.0).sqrt()).collect();
            let sigma_phi: Vec<f64> = self.m2_phi.iter().map(|m| (m / dof).max(0.0).sqrt()).collect();
            let mut rho_eps = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let denom = (self.comoment_eps[i * n + i] * self.comoment_eps[j * n + j]).sqrt();
                    rho_eps[i * n + j] = if i == j {
                        1.0
                    } else if denom > 0.0 {
                        (self.comoment_eps[i * n + j] / denom).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                }
            }
            Some(Spread { sigma_eps, sigma_phi, rho_eps })
        } else {
            log::warn!("only one record: standard deviations and error correlations are not reported");
            None
        };
        Ok(ErrorReport {
            labels,
            n_records: self.count,
            mu_eps: self.mean_eps,
            min_eps: self.min_eps,
            max_eps: self.max_eps,
            mu_phi: self.mean_phi,
            min_phi: self.min_phi,
            max_phi: self.max_phi,
            spread,
            records_eps: if self.keep { Some(self.records_eps) } else { None },
            records_phi: if self.keep { Some(self.records_phi) } else { None },
        })
    }
}

/// Sample standard deviations and the correlation of `ε` across records.
#[derive(Debug, Clone, PartialEq)]
pub struct Spread {
    pub sigma_eps: Vec<f64>,
    /// `N×N`.
    pub sigma_phi: Vec<f64>,
    /// `N×N`; entries involving a component with constant `ε` are 0 off the diagonal.
    pub rho_eps: Vec<f64>,
}

/// Statistics of `ε` (percent) and `φ` over `R` records.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub labels: Vec<String>,
    pub n_records: u64,
    pub mu_eps: Vec<f64>,
    /// Per component, across records.
    pub min_eps: Vec<f64>,
    pub max_eps: Vec<f64>,
    /// `N×N`.
    pub mu_phi: Vec<f64>,
    pub min_phi: Vec<f64>,
    pub max_phi: Vec<f64>,
    /// Absent with fewer than two records.
    pub spread: Option<Spread>,
    /// `[R][N]` when records were kept.
    pub records_eps: Option<Vec<f64>>,
    /// `[R][N][N]` when records were kept.
    pub records_phi: Option<Vec<f64>>,
}

impl ErrorReport {
    pub fn n_components(&self) -> usize {
        self.labels.len()
    }

    /// `E[μ_ε]`: unweighted mean over components.
    pub fn expected_mu_eps(&self) -> f64 {
        self.mu_eps.iter().sum::<f64>() / self.mu_eps.len() as f64
    }

    pub fn expected_sigma_eps(&self) -> Option<f64> {
        self.spread.as_ref().map(|s| s.sigma_eps.iter().sum::<f64>() / s.sigma_eps.len() as f64)
    }

    /// `E[μ_φ]`: mean over off-diagonal pairs.
    pub fn expected_mu_phi(&self) -> f64 {
        off_diagonal_mean(&self.mu_phi, self.n_components())
    }

    pub fn expected_sigma_phi(&self) -> Option<f64> {
        self.spread.as_ref().map(|s| off_diagonal_mean(&s.sigma_phi, self.n_components()))
    }

    /// `(min, max)` of `μ_ε` over components.
    pub fn mu_eps_range(&self) -> (f64, f64) {
        extrema(self.mu_eps.iter().copied())
    }

    /// `(min, max)` of `μ_φ` over off-diagonal pairs.
    pub fn mu_phi_range(&self) -> (f64, f64) {
        let n = self.n_components();
        extrema((0..n * n).filter(|idx| idx / n != idx % n).map(|idx| self.mu_phi[idx]))
    }
}

fn extrema(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Builds a report from per-record `ε` (`[R][N]`) and `φ` (`[R][N][N]`), keeping the records.
pub fn aggregate(labels: Vec<String>, eps: &[Vec<f64>], phi: &[Vec<f64>]) -> Result<ErrorReport> {
    if eps.len() != phi.len() {
        return Err(Error::Shape(format!("{} error rows against {} difference rows", eps.len(), phi.len())));
    }
    let mut acc = ErrorAccumulator::new(labels.len(), true);
    for (e, p) in eps.iter().zip(phi) {
        acc.add(e, p)?;
    }
    acc.finish(labels)
}

/// Midranks (1-based) of `x`.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            r[i] = mid;
        }
        start = end;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!("rank correlation of {} and {} values", a.len(), b.len())));
    }
    Ok(pearson(&ranks(a), &ranks(b)))
}

/// One-sided permutation p-value for a negative rank correlation: the share
/// of `n_permutations` shuffles of `b` whose correlation is at most the observed one.
pub fn rank_correlation_test(a: &[f64], b: &[f64], n_permutations: usize, seed: u64) -> Result<(f64, f64)> {
    let observed = rank_correlation(a, b)?;
    let ra = ranks(a);
    let mut rb = ranks(b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        for i in (1..rb.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            rb.swap(i, j);
        }
        if pearson(&ra, &rb) <= observed {
            hits += 1;
        }
    }
    Ok((observed, (hits + 1) as f64 / (n_permutations + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::generic_labels;
    use crate::spectral::Sided;
    use num_complex::Complex64;

    fn m(cov: Vec<f64>) -> SpectralMoments {
        let n = (cov.len() as f64).sqrt() as usize;
        SpectralMoments::from_covariance(n, cov, 50.0).unwrap()
    }

    #[test]
    fn flat_two_sided_density_integrates_to_one() {
        let d_omega = 0.01;
        let s = CpsdMatrix::new(generic_labels(1), d_omega, vec![Complex64::new(0.5, 0.0); 101], Sided::Two).unwrap();
        let mo = moments(&s, 1.0 / (2.0 * core::f64::consts::PI)).unwrap();
        assert!((mo.variance(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_quad_spectrum_has_zero_covariance() {
        let mut values = Vec::new();
        for k in 0..20 {
            let q = Complex64::new(0.0, 0.1 * k as f64);
            values.extend([Complex64::new(1.0, 0.0), q, q.conj(), Complex64::new(1.0, 0.0)]);
        }
        let s = CpsdMatrix::new(generic_labels(2), 0.1, values, Sided::Two).unwrap();
        assert_eq!(moments(&s, 100.0).unwrap().covariance(0, 1), 0.0);
    }

    #[test]
    fn variance_error_arithmetic() {
        let e = variance_error(&m(vec![1.05]), &m(vec![1.0])).unwrap();
        assert!((e[0] - 5.0).abs() < 1e-12);
        assert_eq!(variance_error(&m(vec![2.0]), &m(vec![2.0])).unwrap(), vec![0.0]);
        assert!(matches!(variance_error(&m(vec![1.0]), &m(vec![0.0])), Err(Error::DegenerateTarget { component: 0 })));
    }

    #[test]
    fn correlation_difference_arithmetic() {
        let target = m(vec![1.0, 0.8, 0.8, 1.0]);
        let test = m(vec![4.0, 0.75 * 2.0 * 3.0, 0.75 * 6.0, 9.0]);
        let phi = correlation_difference(&test, &target).unwrap();
        assert_eq!(phi[0], 0.0);
        assert!((phi[1] - 0.05).abs() < 1e-12);
        assert!(correlation_difference(&target, &target).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_statistics() {
        let r = aggregate(generic_labels(1), &[vec![1.0], vec![-1.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(r.mu_eps[0], 0.0);
        assert!((r.spread.as_ref().unwrap().sigma_eps[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((r.min_eps[0], r.max_eps[0]), (-1.0, 1.0));
    }

    #[test]
    fn identical_records_have_zero_spread() {
        let eps = vec![vec![0.3, -1.2]; 5];
        let phi = vec![vec![0.0, 0.01, 0.01, 0.0]; 5];
        let r = aggregate(generic_labels(2), &eps, &phi).unwrap();
        let s = r.spread.unwrap();
        assert!(s.sigma_eps.iter().chain(&s.sigma_phi).all(|&v| v == 0.0));
    }

    #[test]
    fn single_record_degrades_to_means() {
        let r = aggregate(generic_labels(1), &[vec![2.0]], &[vec![0.0]]).unwrap();
        assert!(r.spread.is_none());
        assert_eq!(r.expected_mu_eps(), 2.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let eps: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.7 - 2.0, (i * i) as f64 * 0.1]).collect();
        let phi: Vec<Vec<f64>> = (0..9).map(|i| vec![0.0, 0.01 * i as f64, 0.01 * i as f64, 0.0]).collect();
        let whole = aggregate(generic_labels(2), &eps, &phi).unwrap();
        let mut a = ErrorAccumulator::new(2, true);
        let mut b = ErrorAccumulator::new(2, true);
        for i in 0..4 {
            a.add(&eps[i], &phi[i]).unwrap();
        }
        for i in 4..9 {
            b.add(&eps[i], &phi[i]).unwrap();
        }
        a.merge(&b).unwrap();
        let merged = a.finish(generic_labels(2)).unwrap();
        assert_eq!(merged.records_eps, whole.records_eps);
        let (sm, sw) = (merged.spread.unwrap(), whole.spread.unwrap());
        for (x, y) in sm.sigma_eps.iter().zip(&sw.sigma_eps).chain(sm.rho_eps.iter().zip(&sw.rho_eps)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_handle_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = [8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let (rho, p) = rank_correlation_test(&a, &b, 999, 1).unwrap();
        assert_eq!(rho, -1.0);
        assert!(p < 0.01);
    }
}
