//! Delimited-text record formats.
//!
//! A record file `name.csv` has a `name.meta` key=value sidecar. Numbers are
//! written in shortest round-trip form, so write/read cycles are exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use podwind_core::ingest::{BuildingGeometry, Tap, TapRecord};
use podwind_core::record::generic_labels;
use podwind_core::{Configuration, RecordSet};

use crate::error::{Error, Result};
use crate::kv::{join_list, split_list, KeyValues};

/// Sidecar of a record file: same stem, `.meta` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, format!("{other:?}")),
    }
}

/// Parses a sample; an empty field is a missing sample and reads as NaN.
fn sample(path: &Path, field: &str, row: usize, column: &str) -> Result<f64> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.parse().map_err(|_| Error::data(path, format!("row {row}, column {column}: '{field}' is not a number")))
}

/// Reads `time,<columns>` and checks the time axis against `sample_rate`.
/// Returns the header names after `time` and the samples row-major.
fn read_table(path: &Path, sample_rate: f64) -> Result<(Vec<String>, Vec<f64>, usize)> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("time") || headers.len() < 2 {
        return Err(Error::data(path, "header must be time followed by at least one column"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let dt = 1.0 / sample_rate;
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut t0 = 0.0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != headers.len() {
            return Err(Error::data(path, format!("row {row} has {} fields, expected {}", rec.len(), headers.len())));
        }
        let t: f64 = rec[0].parse().map_err(|_| Error::data(path, format!("row {row}: bad time '{}'", &rec[0])))?;
        if row == 0 {
            t0 = t;
        } else if ((t - t0) - row as f64 * dt).abs() > 1e-3 * dt {
            return Err(Error::data(path, format!("non-uniform sampling at row {row} (t = {t})")));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            values.push(sample(path, field, row, &names[c - 1])?);
        }
        rows += 1;
    }
    Ok((names, values, rows))
}

fn meta_error(path: &Path) -> impl Fn(String) -> Error + '_ {
    move |m| Error::Config(format!("{}: {m}", path.display()))
}

pub fn write_record_set(path: &Path, rs: &RecordSet) -> Result<()> {
    let n = rs.n_components();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut line = String::from("time");
    for name in generic_labels(n) {
        line.push(',');
        line.push_str(&name);
    }
    writeln!(w, "{line}").map_err(io)?;
    let cols: Vec<&[f64]> = rs.components().collect();
    let dt = rs.dt();
    for t in 0..rs.n_samples() {
        line.clear();
        line.push_str(&(t as f64 * dt).to_string());
        for c in &cols {
            line.push(',');
            line.push_str(&c[t].to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut kv = KeyValues::new();
    kv.insert("sample_rate_hz", rs.sample_rate());
    kv.insert("n_samples", rs.n_samples());
    kv.insert("direction_deg", rs.direction_deg);
    kv.insert("configuration", rs.configuration);
    kv.insert("labels", rs.labels().join(","));
    kv.insert("means", join_list(rs.means()));
    if let Some(scale) = rs.scale() {
        kv.insert("scale", join_list(scale));
    }
    kv.write(&sidecar_path(path))
}

pub fn read_record_set(path: &Path) -> Result<RecordSet> {
    let meta_path = sidecar_path(path);
    let kv = KeyValues::read(&meta_path)?;
    let bad = meta_error(&meta_path);
    let sample_rate: f64 = kv.parse_value("sample_rate_hz").map_err(&bad)?;
    if !(sample_rate > 0.0) {
        return Err(bad(format!("sample rate {sample_rate} must be positive")));
    }
    let labels: Vec<String> = split_list(kv.require("labels").map_err(&bad)?).map(String::from).collect();
    let (names, values, rows) = read_table(path, sample_rate)?;
    if names.len() != labels.len() {
        return Err(Error::data(path, format!("{} columns but {} labels in the sidecar", names.len(), labels.len())));
    }
    let n = labels.len();
    let columns: Vec<Vec<f64>> = (0..n).map(|c| (0..rows).map(|t| values[t * n + c]).collect()).collect();
    let mut rs = RecordSet::from_columns(labels, columns, sample_rate)?;
    rs.check_finite()?;
    let direction: f64 = kv.get("direction_deg").unwrap_or("0").parse().map_err(|_| bad("bad direction_deg".into()))?;
    let configuration: Configuration = kv.get("configuration").unwrap_or("SM").parse()?;
    rs = rs.with_metadata(direction, configuration);
    if kv.get("means").is_some() {
        rs.set_means(kv.parse_list("means").map_err(&bad)?)?;
    }
    if kv.get("scale").is_some() {
        rs.set_scale(Some(kv.parse_list("scale").map_err(&bad)?))?;
    }
    Ok(rs)
}

/// Tap layout: `tap_id, floor, area_m2, nx, ny, lever_arm_m`, optionally
/// followed by `influence_x, influence_y, influence_tz`. An empty area means
/// the tap has none.
pub fn read_tap_layout(path: &Path) -> Result<Vec<Tap>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["tap_id", "floor", "area_m2", "nx", "ny", "lever_arm_m"];
    let influence = ["influence_x", "influence_y", "influence_tz"];
    let names: Vec<&str> = headers.iter().collect();
    let with_influence = names.len() == 9 && names[6..] == influence;
    if names.len() < 6 || names[..6] != expected || !(names.len() == 6 || with_influence) {
        return Err(Error::Config(format!(
            "{}: tap layout header must be {} [,{}]",
            path.display(),
            expected.join(","),
            influence.join(",")
        )));
    }
    let mut taps = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |c: usize| sample(path, &rec[c], row, names[c]);
        let floor = rec[1].parse().map_err(|_| Error::Config(format!("{}: row {row}: bad floor '{}'", path.display(), &rec[1])))?;
        let infl = if with_influence { Some([num(6)?, num(7)?, num(8)?]) } else { None };
        taps.push(Tap {
            id: rec[0].to_string(),
            floor,
            area_m2: num(2)?,
            nx: num(3)?,
            ny: num(4)?,
            lever_arm_m: num(5)?,
            influence: infl,
        });
    }
    if taps.is_empty() {
        return Err(Error::Config(format!("{}: no taps", path.display())));
    }
    Ok(taps)
}

/// Reads a pressure record and its sidecar, matching columns to `taps` by id.
pub fn read_pressure_record(path: &Path, taps: Vec<Tap>) -> Result<TapRecord> {
    let meta_path = sidecar_path(path);
    let kv = KeyValues::read(&meta_path)?;
    let bad = meta_error(&meta_path);
    let sample_rate: f64 = kv.parse_value("sample_rate_hz").map_err(&bad)?;
    if !(sample_rate > 0.0) {
        return Err(bad(format!("sample rate {sample_rate} must be positive")));
    }
    let (names, values, rows) = read_table(path, sample_rate)?;
    let mut order = Vec::with_capacity(taps.len());
    for tap in &taps {
        let c = names
            .iter()
            .position(|h| *h == tap.id)
            .ok_or_else(|| Error::Config(format!("tap {} of the layout has no column in {}", tap.id, path.display())))?;
        order.push(c);
    }
    let width = names.len();
    let mut pressures = Vec::with_capacity(rows * taps.len());
    for t in 0..rows {
        pressures.extend(order.iter().map(|&c| values[t * width + c]));
    }
    Ok(TapRecord {
        taps,
        pressures,
        sample_rate,
        p0_pa: kv.parse_value("p0_pa").map_err(&bad)?,
        air_density: kv.parse_value("rho_kg_m3").map_err(&bad)?,
        uh_m_s: kv.parse_value("uh_m_s").map_err(&bad)?,
        direction_deg: kv.parse_value("direction_deg").map_err(&bad)?,
        configuration: kv.require("configuration").map_err(&bad)?.parse()?,
    })
}

/// Geometry key=value file: `height_m`, `bx_m`, `by_m`, `floor_elevations_m` (list).
pub fn read_geometry(path: &Path) -> Result<BuildingGeometry> {
    let kv = KeyValues::read(path)?;
    let bad = meta_error(path);
    let geom = BuildingGeometry {
        height_m: kv.parse_value("height_m").map_err(&bad)?,
        bx_m: kv.parse_value("bx_m").map_err(&bad)?,
        by_m: kv.parse_value("by_m").map_err(&bad)?,
        floor_elevations_m: kv.parse_list("floor_elevations_m").map_err(&bad)?,
    };
    geom.validate()?;
    Ok(geom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let cols = vec![vec![0.1, -0.2, 1.0 / 3.0], vec![5e-17, 2.5, -1e300]];
        let mut rs = RecordSet::from_columns(vec!["a".into(), "b".into()], cols, 625.0)
            .unwrap()
            .with_metadata(22.5, Configuration::ProximityModel);
        rs.set_means(vec![0.7, -0.1]).unwrap();
        rs.set_scale(Some(vec![1.5, 2.0])).unwrap();
        write_record_set(&path, &rs).unwrap();
        assert_eq!(read_record_set(&path).unwrap(), rs);
    }

    #[test]
    fn gap_in_time_axis_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "time,t1\n0,1\n0.5,2\n2.0,3\n").unwrap();
        let err = read_table(&path, 2.0).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_DATA_QUALITY);
    }

    #[test]
    fn pressure_columns_follow_layout_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "time,tap_0002,tap_0001\n0,1,10\n0.5,2,20\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            "sample_rate_hz=2\np0_pa=0\nrho_kg_m3=1.2\nuh_m_s=10\ndirection_deg=0\nconfiguration=SM\n",
        )
        .unwrap();
        let tap = |id: &str| Tap { id: id.into(), floor: 1, area_m2: 1.0, nx: 1.0, ny: 0.0, lever_arm_m: 0.0, influence: None };
        let rec = read_pressure_record(&path, vec![tap("tap_0001"), tap("tap_0002")]).unwrap();
        assert_eq!(rec.pressures, [10.0, 1.0, 20.0, 2.0]);
    }
}
