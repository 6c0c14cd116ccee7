//! Report tables, plot grids and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use podwind_core::ErrorReport;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KeyValues;

/// Collects the files of one output directory; the directory has a single writer.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of `rel` under the root, creating parent directories and recording it.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        if !self.written.iter().any(|p| *p == path) {
            self.written.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.file(rel)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Written files relative to the root, in write order.
    pub fn written(&self) -> Vec<String> {
        self.written.iter().map(|p| relative(&self.root, p)).collect()
    }

    /// Adds `file.<rel> = sha256` for every written file and writes the manifest.
    pub fn finish(mut self, mut manifest: KeyValues, name: &str) -> Result<PathBuf> {
        for rel in self.written() {
            manifest.insert(format!("file.{rel}"), file_hash(&self.root.join(&rel))?);
        }
        self.write_text(name, &manifest.to_text())
    }
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Rows `kind,component_i,component_j,label,mu,sigma,min,max`: one per
/// component for `ε` (percent), one per pair `i < j` for `φ`. `sigma` is empty
/// with fewer than two records.
pub fn summary_csv(r: &ErrorReport) -> String {
    let n = r.n_components();
    let mut out = String::from("kind,i,j,label,mu,sigma,min,max\n");
    let sigma = |v: Option<f64>| v.map(|s| s.to_string()).unwrap_or_default();
    for i in 0..n {
        let s = sigma(r.spread.as_ref().map(|s| s.sigma_eps[i]));
        let _ = writeln!(out, "eps,{i},{i},{},{},{s},{},{}", r.labels[i], r.mu_eps[i], r.min_eps[i], r.max_eps[i]);
    }
    for i in 0..n {
        for j in i + 1..n {
            let idx = i * n + j;
            let s = sigma(r.spread.as_ref().map(|s| s.sigma_phi[idx]));
            let _ = writeln!(
                out,
                "phi,{i},{j},{}:{},{},{s},{},{}",
                r.labels[i], r.labels[j], r.mu_phi[idx], r.min_phi[idx], r.max_phi[idx]
            );
        }
    }
    out
}

/// Row-major `N×N` matrix as a labelled grid.
pub fn grid_csv(labels: &[String], m: &[f64]) -> String {
    let n = labels.len();
    let mut out = String::from("label");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&labels[i]);
        for v in &m[i * n..(i + 1) * n] {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Table with a header row and one row per entry of `rows`.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Writes the summary table and the `φ` and `ρ_ε` grids under `prefix`.
pub fn write_error_report(out: &mut OutputDir, prefix: &str, r: &ErrorReport) -> Result<()> {
    out.write_text(&format!("{prefix}summary.csv"), &summary_csv(r))?;
    out.write_text(&format!("{prefix}phi_mu.csv"), &grid_csv(&r.labels, &r.mu_phi))?;
    if let Some(s) = &r.spread {
        out.write_text(&format!("{prefix}phi_sigma.csv"), &grid_csv(&r.labels, &s.sigma_phi))?;
        out.write_text(&format!("{prefix}rho_eps.csv"), &grid_csv(&r.labels, &s.rho_eps))?;
    }
    if let Some(eps) = &r.records_eps {
        let n = r.n_components();
        let mut header = vec!["record"];
        header.extend(r.labels.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = eps
            .chunks_exact(n)
            .enumerate()
            .map(|(k, row)| std::iter::once(k.to_string()).chain(row.iter().map(f64::to_string)).collect())
            .collect();
        out.write_text(&format!("{prefix}records_eps.csv"), &table_csv(&header, &rows))?;
    }
    Ok(())
}

/// Key=value summary of the expectations of a report.
pub fn report_keys(kv: &mut KeyValues, prefix: &str, r: &ErrorReport) {
    let (lo, hi) = r.mu_eps_range();
    kv.insert(format!("{prefix}n_records"), r.n_records);
    kv.insert(format!("{prefix}expected_mu_eps_pct"), r.expected_mu_eps());
    kv.insert(format!("{prefix}min_mu_eps_pct"), lo);
    kv.insert(format!("{prefix}max_mu_eps_pct"), hi);
    kv.insert(format!("{prefix}expected_mu_phi"), r.expected_mu_phi());
    if let (Some(se), Some(sp)) = (r.expected_sigma_eps(), r.expected_sigma_phi()) {
        kv.insert(format!("{prefix}expected_sigma_eps_pct"), se);
        kv.insert(format!("{prefix}expected_sigma_phi"), sp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use podwind_core::metrics::aggregate;

    #[test]
    fn summary_has_component_and_pair_rows() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let r = aggregate(labels, &[vec![1.0, 2.0], vec![-1.0, 0.0]], &[vec![0.0, 0.1, 0.1, 0.0], vec![0.0, 0.3, 0.3, 0.0]]).unwrap();
        let s = summary_csv(&r);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 1);
        assert!(lines[1].starts_with("eps,0,0,a,0,"));
        assert!(lines[3].starts_with("phi,0,1,a:b,0.2,"));
    }

    #[test]
    fn grid_layout() {
        let g = grid_csv(&["x".into(), "y".into()], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g, "label,x,y\nx,1,2\ny,3,4\n");
    }

    #[test]
    fn manifest_lists_file_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_text("sub/a.txt", "hello").unwrap();
        let path = out.finish(KeyValues::new(), "manifest.txt").unwrap();
        let kv = KeyValues::read(&path).unwrap();
        assert_eq!(kv.get("file.sub/a.txt"), Some(sha256_hex(b"hello").as_str()));
    }
}
