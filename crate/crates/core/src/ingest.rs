//! Pressure taps to floor force coefficients.
//!
//! The chain is `pressure_coefficients` → `integrate_floor_forces` →
//! `force_coefficients` → (optionally) `standardize`, followed by
//! `split_records` to separate target-defining data from testing records.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::record::{floor_component_labels, variance, Configuration, RecordSet};

/// Reduced variate used to standardize zero-mean coefficients.
pub const REDUCED_VARIATE: f64 = 3.5;

/// Default length of the target-defining part of each repetition, seconds.
pub const DEFAULT_TARGET_DURATION_S: f64 = 600.0;
/// Default length of a testing record, seconds.
pub const DEFAULT_RECORD_DURATION_S: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    pub id: String,
    /// 1-based floor index.
    pub floor: usize,
    pub area_m2: f64,
    /// Direction cosines of the force a positive pressure produces on the floor.
    pub nx: f64,
    pub ny: f64,
    /// Signed lever arm about the floor centroid, metres.
    pub lever_arm_m: f64,
    /// Precomputed (x, y, torsion) influence coefficients; overrides `area * (nx, ny, lever_arm)`.
    pub influence: Option<[f64; 3]>,
}

impl Tap {
    fn coefficients(&self) -> Result<[f64; 3]> {
        if let Some(c) = self.influence {
            return Ok(c);
        }
        if !(self.area_m2 > 0.0 && self.area_m2.is_finite()) {
            return Err(Error::Configuration(format!(
                "tap {} has no positive tributary area ({})",
                self.id, self.area_m2
            )));
        }
        Ok([self.area_m2 * self.nx, self.area_m2 * self.ny, self.area_m2 * self.lever_arm_m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingGeometry {
    pub height_m: f64,
    pub bx_m: f64,
    pub by_m: f64,
    /// Strictly increasing floor elevations, metres.
    pub floor_elevations_m: Vec<f64>,
}

impl BuildingGeometry {
    pub fn n_floors(&self) -> usize {
        self.floor_elevations_m.len()
    }

    pub fn b_max(&self) -> f64 {
        self.bx_m.max(self.by_m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bx_m > 0.0 && self.by_m > 0.0) {
            return Err(Error::Geometry(format!("plan dimensions must be positive ({} x {})", self.bx_m, self.by_m)));
        }
        if !(self.height_m > 0.0) {
            return Err(Error::Geometry(format!("height must be positive ({})", self.height_m)));
        }
        if self.floor_elevations_m.is_empty() {
            return Err(Error::Geometry("at least one floor required".into()));
        }
        if self.floor_elevations_m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Geometry("floor elevations must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Raw pressure-tap measurements for one direction and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TapRecord {
    pub taps: Vec<Tap>,
    /// Row-major `[n_samples × n_taps]`, Pa.
    pub pressures: Vec<f64>,
    pub sample_rate: f64,
    pub p0_pa: f64,
    pub air_density: f64,
    pub uh_m_s: f64,
    pub direction_deg: f64,
    pub configuration: Configuration,
}

impl TapRecord {
    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn n_samples(&self) -> usize {
        if self.taps.is_empty() {
            0
        } else {
            self.pressures.len() / self.taps.len()
        }
    }

    /// q = ½ρU_H².
    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.air_density * self.uh_m_s * self.uh_m_s
    }
}

/// External pressure coefficients, row-major `[n_samples × n_taps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureCoefficients {
    pub n_samples: usize,
    pub n_taps: usize,
    pub values: Vec<f64>,
}

/// `C_p,e(t) = (p(t) − p₀) / q` for every tap and sample.
pub fn pressure_coefficients(raw: &TapRecord) -> Result<PressureCoefficients> {
    let q = raw.dynamic_pressure();
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidReference { q });
    }
    let n_taps = raw.n_taps();
    if n_taps == 0 {
        return Err(Error::Configuration("tap record has no taps".into()));
    }
    if raw.pressures.len() % n_taps != 0 {
        return Err(Error::Shape(format!("{} pressure values for {n_taps} taps", raw.pressures.len())));
    }
    let mut values = Vec::with_capacity(raw.pressures.len());
    for (idx, &p) in raw.pressures.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::DataQuality { channel: raw.taps[idx % n_taps].id.clone(), sample: idx / n_taps });
        }
        values.push((p - raw.p0_pa) / q);
    }
    Ok(PressureCoefficients { n_samples: raw.pressures.len() / n_taps, n_taps, values })
}

/// Per-floor resultant force histories, each `[n_floors][n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorForces {
    pub fx: Vec<Vec<f64>>,
    pub fy: Vec<Vec<f64>>,
    pub tz: Vec<Vec<f64>>,
}

/// Sums `q · C_p · influence` over each floor's taps.
///
/// Each tap's pressure is taken constant over its tributary area unless the
/// tap carries explicit influence coefficients.
pub fn integrate_floor_forces(
    cp: &PressureCoefficients,
    q: f64,
    geom: &BuildingGeometry,
    taps: &[Tap],
) -> Result<FloorForces> {
    geom.validate()?;
    if taps.len() != cp.n_taps {
        return Err(Error::Shape(format!("{} taps in layout, {} in coefficients", taps.len(), cp.n_taps)));
    }
    let n_floors = geom.n_floors();
    let mut coeffs = Vec::with_capacity(taps.len());
    let mut taps_per_floor = vec![0usize; n_floors];
    for tap in taps {
        if tap.floor == 0 || tap.floor > n_floors {
            return Err(Error::Configuration(format!(
                "tap {} assigned to floor {} outside 1..={n_floors}",
                tap.id, tap.floor
            )));
        }
        coeffs.push(tap.coefficients()?);
        taps_per_floor[tap.floor - 1] += 1;
    }
    if let Some(f) = taps_per_floor.iter().position(|&c| c == 0) {
        return Err(Error::Configuration(format!("floor {} has no taps", f + 1)));
    }

    let n = cp.n_samples;
    let mut forces = FloorForces { fx: vec![vec![0.0; n]; n_floors], fy: vec![vec![0.0; n]; n_floors], tz: vec![vec![0.0; n]; n_floors] };
    for t in 0..n {
        let row = &cp.values[t * cp.n_taps..(t + 1) * cp.n_taps];
        for ((tap, c), &cpv) in taps.iter().zip(&coeffs).zip(row) {
            let p = q * cpv;
            let f = tap.floor - 1;
            forces.fx[f][t] += p * c[0];
            forces.fy[f][t] += p * c[1];
            forces.tz[f][t] += p * c[2];
        }
    }
    Ok(forces)
}

/// Normalizes floor forces to coefficients and separates their means.
///
/// `CF_x = F_x/(q B_x H)`, `CF_y = F_y/(q B_y H)`, `CT_z = T_z/(q H B_max²/2)`.
pub fn force_coefficients(forces: &FloorForces, geom: &BuildingGeometry, q: f64, sample_rate: f64) -> Result<RecordSet> {
    geom.validate()?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidReference { q });
    }
    let n_floors = geom.n_floors();
    if forces.fx.len() != n_floors || forces.fy.len() != n_floors || forces.tz.len() != n_floors {
        return Err(Error::Shape(format!("forces do not cover {n_floors} floors")));
    }
    let h = geom.height_m;
    let norm = [q * geom.bx_m * h, q * geom.by_m * h, q * h * geom.b_max() * geom.b_max() / 2.0];
    let mut columns = Vec::with_capacity(3 * n_floors);
    for (block, n) in [(&forces.fx, norm[0]), (&forces.fy, norm[1]), (&forces.tz, norm[2])] {
        for series in block.iter() {
            columns.push(series.iter().map(|v| v / n).collect());
        }
    }
    let mut rs = RecordSet::from_columns(floor_component_labels(n_floors), columns, sample_rate)?;
    rs.remove_means();
    Ok(rs)
}

/// Full ingest chain for one tap record.
pub fn ingest(raw: &TapRecord, geom: &BuildingGeometry) -> Result<RecordSet> {
    let cp = pressure_coefficients(raw)?;
    let q = raw.dynamic_pressure();
    let forces = integrate_floor_forces(&cp, q, geom, &raw.taps)?;
    Ok(force_coefficients(&forces, geom, q, raw.sample_rate)?.with_metadata(raw.direction_deg, raw.configuration))
}

/// Divides each zero-mean component by `σ · γ_r`.
///
/// Means are removed first if present. Returns the standardized record (which
/// also carries the scale vector) and the scale vector itself.
pub fn standardize(rs: &RecordSet) -> Result<(RecordSet, Vec<f64>)> {
    let mut centered = rs.clone();
    centered.remove_means();
    let mut scale = Vec::with_capacity(rs.n_components());
    for (i, c) in centered.components().enumerate() {
        let sigma = variance(c).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::DegenerateChannel { label: rs.labels()[i].clone() });
        }
        scale.push(sigma * REDUCED_VARIATE);
    }
    let mut out = centered.map_components(|i, c| c.iter().map(|v| v / scale[i]).collect())?;
    out.set_scale(Some(scale.clone()))?;
    Ok((out, scale))
}

/// Inverse of [`standardize`]: multiplies by the scale vector. Means are kept in `means`.
pub fn destandardize(rs: &RecordSet, scale: &[f64]) -> Result<RecordSet> {
    if scale.len() != rs.n_components() {
        return Err(Error::Shape(format!("{} scale entries for {} components", scale.len(), rs.n_components())));
    }
    let mut out = rs.map_components(|i, c| c.iter().map(|v| v * scale[i]).collect())?;
    out.set_scale(None)?;
    Ok(out)
}

/// Result of [`split_records`].
#[derive(Debug, Clone)]
pub struct RecordSplit {
    /// First `target_duration` seconds, untouched.
    pub target: RecordSet,
    /// Non-overlapping testing records, each with its own mean removed.
    pub testing: Vec<RecordSet>,
    pub discarded_samples: usize,
}

/// Reserves the head of a repetition for target estimation and chops the rest
/// into independent testing records. A partial trailing record is discarded.
pub fn split_records(rs: &RecordSet, target_duration_s: f64, record_duration_s: f64) -> Result<RecordSplit> {
    if !(target_duration_s > 0.0 && record_duration_s > 0.0) {
        return Err(Error::Argument("split durations must be positive".into()));
    }
    let fs = rs.sample_rate();
    let target_n = (target_duration_s * fs).round() as usize;
    let record_n = (record_duration_s * fs).round() as usize;
    if record_n == 0 {
        return Err(Error::Argument("record duration shorter than one sample".into()));
    }
    if rs.n_samples() < target_n {
        return Err(Error::Split { required_s: target_duration_s + record_duration_s, available_s: rs.duration_s() });
    }
    let target = rs.slice(0, target_n)?;
    let rest = rs.slice(target_n, rs.n_samples())?;
    let mut testing = rest.segments(record_n)?;
    for rec in testing.iter_mut() {
        rec.remove_means();
    }
    if testing.is_empty() {
        log::warn!(
            "no testing records: {:.3} s remain after the target part, records need {record_duration_s} s",
            rest.duration_s()
        );
    }
    let discarded_samples = rest.n_samples() - testing.len() * record_n;
    Ok(RecordSplit { target, testing, discarded_samples })
}
