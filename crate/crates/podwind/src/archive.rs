//! Binary CPSD and modes archives.
//!
//! A plain-text `key = value` header closed by an `end_header` line, followed
//! by little-endian `f64` values. CPSD payload: interleaved `(Re, Im)` ordered
//! by line, then row-major `N×N`. Modes payload: the eigenvalues `[line][mode]`
//! followed by the eigenvectors `[line][mode][component]` as `(Re, Im)`.
//! Every read re-checks the invariants of the decoded object.

use std::path::Path;

use num_complex::Complex64;
use podwind_core::{CpsdMatrix, Sided, SpectralModes};

use crate::error::{Error, Result};
use crate::kv::{split_list, KeyValues};

const END_HEADER: &[u8] = b"end_header\n";
const VERSION: &str = "1";

fn header(format: &str, n: usize, n_lines: usize, d_omega: f64, labels: &[String]) -> Result<KeyValues> {
    if let Some(bad) = labels.iter().find(|l| l.is_empty() || l.contains([',', '\n', '='])) {
        return Err(Error::Config(format!("label '{bad}' cannot be stored in an archive header")));
    }
    let mut kv = KeyValues::new();
    kv.insert("format", format);
    kv.insert("version", VERSION);
    kv.insert("byte_order", "little");
    kv.insert("n", n);
    kv.insert("n_lines", n_lines);
    // `Display` for f64 is the shortest string that parses back to the same bits.
    kv.insert("delta_omega_rad_s", d_omega);
    kv.insert("labels", labels.join(","));
    Ok(kv)
}

fn encode(kv: &KeyValues, payload_len: usize) -> Vec<u8> {
    let mut out = kv.to_text().into_bytes();
    out.extend_from_slice(END_HEADER);
    out.reserve(payload_len * 8);
    out
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn cpsd_to_bytes(s: &CpsdMatrix) -> Result<Vec<u8>> {
    let mut kv = header("cpsd", s.n_components(), s.n_lines(), s.d_omega(), s.labels())?;
    kv.insert("sided", if s.sided() == Sided::Two { "two" } else { "one" });
    let mut out = encode(&kv, 2 * s.values().len());
    for z in s.values() {
        push_f64(&mut out, z.re);
        push_f64(&mut out, z.im);
    }
    Ok(out)
}

pub fn modes_to_bytes(m: &SpectralModes) -> Result<Vec<u8>> {
    let kv = header("modes", m.n_components(), m.n_lines(), m.d_omega(), m.labels())?;
    let mut out = encode(&kv, m.all_values().len() + 2 * m.all_vectors().len());
    for v in m.all_values() {
        push_f64(&mut out, *v);
    }
    for z in m.all_vectors() {
        push_f64(&mut out, z.re);
        push_f64(&mut out, z.im);
    }
    Ok(out)
}

struct Decoded {
    n: usize,
    n_lines: usize,
    d_omega: f64,
    labels: Vec<String>,
    kv: KeyValues,
    values: Vec<f64>,
}

fn decode(path: &Path, bytes: &[u8], format: &str) -> Result<Decoded> {
    let bad = |m: String| Error::data(path, m);
    let end = bytes
        .windows(END_HEADER.len())
        .position(|w| w == END_HEADER)
        .filter(|&p| p == 0 || bytes[p - 1] == b'\n')
        .ok_or_else(|| bad("missing end_header line".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let kv = KeyValues::parse(text).map_err(bad)?;
    if kv.get("format") != Some(format) {
        return Err(bad(format!("not a {format} archive (format = {})", kv.get("format").unwrap_or("?"))));
    }
    if kv.get("version") != Some(VERSION) || kv.get("byte_order") != Some("little") {
        return Err(bad("unsupported archive version or byte order".into()));
    }
    let n: usize = kv.parse_value("n").map_err(bad)?;
    let n_lines: usize = kv.parse_value("n_lines").map_err(bad)?;
    let d_omega: f64 = kv.parse_value("delta_omega_rad_s").map_err(bad)?;
    let labels: Vec<String> = split_list(kv.require("labels").map_err(bad)?).map(String::from).collect();
    if labels.len() != n {
        return Err(bad(format!("{} labels for n = {n}", labels.len())));
    }
    let payload = &bytes[end + END_HEADER.len()..];
    if payload.len() % 8 != 0 {
        return Err(bad(format!("payload of {} bytes is not a whole number of f64", payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Decoded { n, n_lines, d_omega, labels, kv, values })
}

fn pairs(values: &[f64]) -> Vec<Complex64> {
    values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Decodes a CPSD archive and checks its invariants; `path` is used in messages.
pub fn cpsd_from_bytes(path: &Path, bytes: &[u8]) -> Result<CpsdMatrix> {
    let d = decode(path, bytes, "cpsd")?;
    let expected = 2 * d.n * d.n * d.n_lines;
    if d.values.len() != expected {
        return Err(Error::data(path, format!("payload holds {} values, header implies {expected}", d.values.len())));
    }
    let sided = match d.kv.get("sided") {
        Some("two") => Sided::Two,
        Some("one") => Sided::One,
        other => return Err(Error::data(path, format!("bad sided value {other:?}"))),
    };
    let s = CpsdMatrix::new(d.labels, d.d_omega, pairs(&d.values), sided)?;
    s.check_invariants().map_err(|e| Error::data(path, format!("invariant violated: {e}")))?;
    Ok(s)
}

/// Decodes a modes archive and checks its invariants.
pub fn modes_from_bytes(path: &Path, bytes: &[u8]) -> Result<SpectralModes> {
    let d = decode(path, bytes, "modes")?;
    let n_values = d.n * d.n_lines;
    let expected = n_values + 2 * d.n * n_values;
    if d.values.len() != expected {
        return Err(Error::data(path, format!("payload holds {} values, header implies {expected}", d.values.len())));
    }
    let m = SpectralModes::from_parts(d.labels, d.d_omega, d.values[..n_values].to_vec(), pairs(&d.values[n_values..]))?;
    m.check_invariants().map_err(|e| Error::data(path, format!("invariant violated: {e}")))?;
    Ok(m)
}

pub fn write_cpsd(path: &Path, s: &CpsdMatrix) -> Result<()> {
    std::fs::write(path, cpsd_to_bytes(s)?).map_err(|e| Error::io(path, e))
}

pub fn read_cpsd(path: &Path) -> Result<CpsdMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    cpsd_from_bytes(path, &bytes)
}

pub fn write_modes(path: &Path, m: &SpectralModes) -> Result<()> {
    std::fs::write(path, modes_to_bytes(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_modes(path: &Path) -> Result<SpectralModes> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    modes_from_bytes(path, &bytes)
}
