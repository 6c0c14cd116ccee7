//! Per-frequency eigendecomposition of cross-spectral matrices.
//!
//! Each line is decomposed independently, with no mode tracking across
//! frequency. Eigenvectors are put in a fixed gauge: the largest-magnitude
//! entry (lowest index on ties) is real and positive.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{hermitian_deviation, symmetric_trapezoid_weights, CpsdMatrix, Sided, HERMITIAN_TOL};

/// Eigenvalues within `-CLAMP_TOL · Λ₁` of zero are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues closer than `DEGENERACY_TOL · Λ₁` are treated as equal when ordering.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Bound on `‖ΨᴴΨ − I‖∞` per line.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Bound on `‖SΨ − ΛΨ‖₂ / ‖S‖₂` accepted from the eigensolver.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Eigenvalues and gauge-fixed eigenvectors of one frequency line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineModes {
    /// Descending.
    pub values: Vec<f64>,
    /// Mode-major: `vectors[i * n + j]` is component `j` of mode `i`.
    pub vectors: Vec<Complex64>,
}

/// Spectral modes of a [`CpsdMatrix`], on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModes {
    n: usize,
    d_omega: f64,
    labels: Vec<String>,
    /// `[line][mode]`
    eigenvalues: Vec<f64>,
    /// `[line][mode][component]`
    eigenvectors: Vec<Complex64>,
}

impl SpectralModes {
    pub fn from_parts(labels: Vec<String>, d_omega: f64, eigenvalues: Vec<f64>, eigenvectors: Vec<Complex64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 || eigenvalues.len() % n != 0 || eigenvectors.len() != eigenvalues.len() * n {
            return Err(Error::Shape(format!(
                "{} eigenvalues and {} eigenvector entries do not fit {n} components",
                eigenvalues.len(),
                eigenvectors.len()
            )));
        }
        if !(d_omega > 0.0) {
            return Err(Error::Configuration(format!("frequency spacing {d_omega} must be positive")));
        }
        Ok(SpectralModes { n, d_omega, labels, eigenvalues, eigenvectors })
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn n_lines(&self) -> usize {
        self.eigenvalues.len() / self.n
    }

    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Eigenvalues at `line`, descending.
    pub fn values(&self, line: usize) -> &[f64] {
        &self.eigenvalues[line * self.n..(line + 1) * self.n]
    }

    /// Eigenvector of `mode` at `line`.
    pub fn vector(&self, line: usize, mode: usize) -> &[Complex64] {
        let start = (line * self.n + mode) * self.n;
        &self.eigenvectors[start..start + self.n]
    }

    pub fn all_values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn all_vectors(&self) -> &[Complex64] {
        &self.eigenvectors
    }

    /// Checks descending (up to ties) non-negative eigenvalues and orthonormal eigenvectors on every line.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        for k in 0..self.n_lines() {
            let values = self.values(k);
            // Degenerate runs are ordered by eigenvector, so ties may be out of order by the degeneracy tolerance.
            let tol = DEGENERACY_TOL * values.first().map_or(0.0, |v| v.abs());
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) || values.windows(2).any(|w| w[1] - w[0] > tol) {
                return Err(Error::Construction(format!("eigenvalues at line {k} are not descending and non-negative")));
            }
            for a in 0..n {
                for b in a..n {
                    let dot: Complex64 = self.vector(k, a).iter().zip(self.vector(k, b)).map(|(x, y)| x.conj() * y).sum();
                    let expected = if a == b { 1.0 } else { 0.0 };
                    if !((dot - expected).norm() <= ORTHONORMAL_TOL) {
                        return Err(Error::Construction(format!("eigenvectors {a} and {b} at line {k} are not orthonormal")));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_mode_count(&self, n_modes: usize) -> Result<()> {
        if n_modes == 0 || n_modes > self.n {
            return Err(Error::Argument(format!("mode count {n_modes} outside 1..={}", self.n)));
        }
        Ok(())
    }
}

/// Decomposes one row-major Hermitian line.
pub fn decompose_line(line: &[Complex64], n: usize, index: usize) -> Result<LineModes> {
    let deviation = hermitian_deviation(line, n);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NonHermitian { line: index, deviation });
    }
    let scale = line.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        let mut vectors = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            vectors[i * n + i] = Complex64::new(1.0, 0.0);
        }
        return Ok(LineModes { values: vec![0.0; n], vectors });
    }
    // Symmetrize exactly so the solver sees a Hermitian matrix.
    let m = DMatrix::from_fn(n, n, |i, j| (line[i * n + j] + line[j * n + i].conj()) * 0.5);
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenNonConvergence { line: index })?;

    let mut modes: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|c| {
            let mut v: Vec<Complex64> = eig.eigenvectors.column(c).iter().copied().collect();
            fix_phase(&mut v);
            (eig.eigenvalues[c], v)
        })
        .collect();
    modes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let lead = modes[0].0.abs();
    order_degenerate(&mut modes, lead);

    // Spectral norm of a Hermitian matrix is its largest |eigenvalue|.
    let norm2 = modes.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
    for (value, v) in &modes {
        let mut residual = 0.0;
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += m[(i, j)] * v[j];
            }
            residual += (acc - v[i] * *value).norm_sqr();
        }
        if residual.sqrt() > RESIDUAL_TOL * norm2 {
            return Err(Error::EigenNonConvergence { line: index });
        }
    }

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for (value, v) in modes {
        values.push(if value < 0.0 && value >= -CLAMP_TOL * lead { 0.0 } else { value });
        vectors.extend(v);
    }
    Ok(LineModes { values, vectors })
}

/// Rotates `v` so its largest-magnitude entry (lowest index among ties) is real positive.
fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap_or(0);
    let rot = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[pivot].im = 0.0;
}

/// Within runs of numerically equal eigenvalues, orders modes by the
/// lexicographic order of their (gauge-fixed) eigenvectors.
fn order_degenerate(modes: &mut [(f64, Vec<Complex64>)], lead: f64) {
    let tol = DEGENERACY_TOL * lead;
    let mut start = 0;
    while start < modes.len() {
        let mut end = start + 1;
        while end < modes.len() && (modes[end - 1].0 - modes[end].0).abs() < tol {
            end += 1;
        }
        if end - start > 1 {
            modes[start..end].sort_by(|a, b| lexicographic(&a.1, &b.1));
        }
        start = end;
    }
}

fn lexicographic(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = x.re.partial_cmp(&y.re).unwrap_or(Ordering::Equal).then(x.im.partial_cmp(&y.im).unwrap_or(Ordering::Equal));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Eigendecomposition of every line of `s`.
pub fn decompose(s: &CpsdMatrix) -> Result<SpectralModes> {
    let n = s.n_components();
    let mut eigenvalues = Vec::with_capacity(n * s.n_lines());
    let mut eigenvectors = Vec::with_capacity(n * n * s.n_lines());
    for k in 0..s.n_lines() {
        let line = decompose_line(s.line(k), n, k)?;
        eigenvalues.extend(line.values);
        eigenvectors.extend(line.vectors);
    }
    SpectralModes::from_parts(s.labels().to_vec(), s.d_omega(), eigenvalues, eigenvectors)
}

/// `Σ_{i<n_modes} Λ_i Ψ_i Ψ_iᴴ` on every line.
pub fn reconstruct(m: &SpectralModes, n_modes: usize) -> Result<CpsdMatrix> {
    m.check_mode_count(n_modes)?;
    let n = m.n;
    let mut values = vec![Complex64::new(0.0, 0.0); n * n * m.n_lines()];
    for k in 0..m.n_lines() {
        let line = &mut values[k * n * n..(k + 1) * n * n];
        for mode in 0..n_modes {
            let lambda = m.values(k)[mode].max(0.0);
            let v = m.vector(k, mode);
            for i in 0..n {
                let a = v[i] * lambda;
                for j in i..n {
                    let z = a * v[j].conj();
                    line[i * n + j] += z;
                    if j != i {
                        line[j * n + i] += z.conj();
                    }
                }
            }
        }
        for i in 0..n {
            line[i * n + i].im = 0.0;
        }
    }
    CpsdMatrix::new(m.labels.clone(), m.d_omega, values, Sided::Two)
}

/// Share of variance carried by the leading modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedEnergy {
    /// Per line; lines with zero trace count as fully captured.
    pub per_line: Vec<f64>,
    /// Frequency-integrated over the whole grid.
    pub total: f64,
}

/// Fraction of trace carried by the first `n_modes` modes, per line and integrated.
pub fn captured_energy(m: &SpectralModes, n_modes: usize) -> Result<CapturedEnergy> {
    m.check_mode_count(n_modes)?;
    let weights = symmetric_trapezoid_weights(m.n_lines(), m.d_omega);
    let mut per_line = Vec::with_capacity(m.n_lines());
    let (mut kept_total, mut all_total) = (0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        let vals = m.values(k);
        let kept: f64 = vals[..n_modes].iter().map(|v| v.max(0.0)).sum();
        let all: f64 = kept + vals[n_modes..].iter().map(|v| v.max(0.0)).sum::<f64>();
        per_line.push(if all > 0.0 { kept / all } else { 1.0 });
        kept_total += w * kept;
        all_total += w * all;
    }
    let total = if all_total > 0.0 { kept_total / all_total } else { 1.0 };
    Ok(CapturedEnergy { per_line, total })
}

/// Per-component share of variance (integrated over lines `0..=last_line`)
/// carried by the first `n_modes` modes.
pub fn captured_component_variance(m: &SpectralModes, n_modes: usize, last_line: usize) -> Result<Vec<f64>> {
    m.check_mode_count(n_modes)?;
    let n = m.n;
    let n_lines = (last_line + 1).min(m.n_lines());
    let weights = symmetric_trapezoid_weights(n_lines, m.d_omega);
    let mut kept = vec![0.0; n];
    let mut all = vec![0.0; n];
    for (k, w) in weights.iter().enumerate() {
        for mode in 0..n {
            let lambda = m.values(k)[mode].max(0.0);
            for (j, z) in m.vector(k, mode).iter().enumerate() {
                let c = w * lambda * z.norm_sqr();
                all[j] += c;
                if mode < n_modes {
                    kept[j] += c;
                }
            }
        }
    }
    Ok(kept.iter().zip(&all).map(|(k, a)| if *a > 0.0 { k / a } else { 1.0 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::generic_labels;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_line(n: usize, values: Vec<Complex64>) -> CpsdMatrix {
        CpsdMatrix::new(generic_labels(n), 1.0, values, Sided::Two).unwrap()
    }

    #[test]
    fn closed_form_two_by_two() {
        let s = single_line(2, vec![c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
        let m = decompose(&s).unwrap();
        assert!((m.values(0)[0] - 1.5).abs() < 1e-14);
        assert!((m.values(0)[1] - 0.5).abs() < 1e-14);
        let v0 = m.vector(0, 0);
        assert!((v0[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!((v0[1] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        // Gauge: first entry (tie on magnitude) real positive.
        let v1 = m.vector(0, 1);
        assert!((v1[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!((v1[1] - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn identity_line() {
        let n = 4;
        let mut v = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            v[i * n + i] = c(1.0, 0.0);
        }
        let s = single_line(n, v);
        let m = decompose(&s).unwrap();
        assert!(m.values(0).iter().all(|l| (l - 1.0).abs() < 1e-14));
        let r = reconstruct(&m, n).unwrap();
        for (a, b) in r.values().iter().zip(s.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_line_is_all_zero_modes() {
        let s = single_line(3, vec![c(0.0, 0.0); 9]);
        let m = decompose(&s).unwrap();
        assert_eq!(m.values(0), &[0.0, 0.0, 0.0]);
        assert_eq!(captured_energy(&m, 1).unwrap().per_line, vec![1.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let s = single_line(2, vec![c(1.0, 0.0), c(0.5, 0.1), c(0.5, 0.1), c(1.0, 0.0)]);
        assert!(matches!(decompose(&s), Err(Error::NonHermitian { line: 0, .. })));
    }

    #[test]
    fn rank_one_reconstruction() {
        let v = [c(1.0, 0.5), c(-0.3, 0.2), c(0.0, -2.0)];
        let n = 3;
        let values: Vec<Complex64> = (0..n * n).map(|idx| v[idx / n] * v[idx % n].conj()).collect();
        let s = single_line(n, values);
        let m = decompose(&s).unwrap();
        let r = reconstruct(&m, 1).unwrap();
        for (a, b) in r.values().iter().zip(s.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mode_count_out_of_range() {
        let s = single_line(2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let m = decompose(&s).unwrap();
        assert!(matches!(reconstruct(&m, 0), Err(Error::Argument(_))));
        assert!(matches!(reconstruct(&m, 3), Err(Error::Argument(_))));
        assert!(matches!(captured_energy(&m, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn captured_energy_equal_and_geometric() {
        let n = 6;
        let diag = |vals: &[f64]| {
            let mut v = vec![c(0.0, 0.0); n * n];
            for (i, l) in vals.iter().enumerate() {
                v[i * n + i] = c(*l, 0.0);
            }
            v
        };
        let eq = decompose(&single_line(n, diag(&[2.0; 6]))).unwrap();
        assert!((captured_energy(&eq, 3).unwrap().total - 0.5).abs() < 1e-15);
        assert_eq!(captured_energy(&eq, 6).unwrap().total, 1.0);

        let r: f64 = 0.5;
        let geo: Vec<f64> = (0..n).map(|i| r.powi(i as i32)).collect();
        let m = decompose(&single_line(n, diag(&geo))).unwrap();
        for nm in 1..=n {
            let expected = (1.0 - r.powi(nm as i32)) / (1.0 - r.powi(n as i32));
            assert!((captured_energy(&m, nm).unwrap().total - expected).abs() < 1e-14);
        }
    }
}
