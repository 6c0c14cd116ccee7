use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Wind-tunnel test configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Configuration {
    /// Isolated building model.
    #[default]
    SingleModel,
    /// Building model with surrounding proximity models.
    ProximityModel,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::SingleModel => "SM",
            Configuration::ProximityModel => "PM",
        })
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "SM" | "sm" => Ok(Configuration::SingleModel),
            "PM" | "pm" => Ok(Configuration::ProximityModel),
            other => Err(Error::Configuration(format!("unknown configuration `{other}`"))),
        }
    }
}

/// Labels `CFx_1..CFx_n, CFy_1..CFy_n, CTz_1..CTz_n` for `n_floors` floors.
pub fn floor_component_labels(n_floors: usize) -> Vec<String> {
    ["CFx", "CFy", "CTz"]
        .iter()
        .flat_map(|prefix| (1..=n_floors).map(move |n| format!("{prefix}_{n}")))
        .collect()
}

/// Generic labels `comp_001..comp_N`.
pub fn generic_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("comp_{i:03}")).collect()
}

/// Multi-channel, uniformly sampled record.
///
/// Samples are stored component-major. `means` holds the mean that was removed
/// from each component (zero if nothing was removed); `scale` is present once
/// the record has been standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    labels: Vec<String>,
    n_samples: usize,
    data: Vec<f64>,
    sample_rate: f64,
    pub direction_deg: f64,
    pub configuration: Configuration,
    means: Vec<f64>,
    scale: Option<Vec<f64>>,
}

impl RecordSet {
    /// Builds a record from per-component columns. Means start at zero.
    pub fn from_columns(labels: Vec<String>, columns: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Shape("record has no components".into()));
        }
        if labels.len() != columns.len() {
            return Err(Error::Shape(format!("{} labels for {} components", labels.len(), columns.len())));
        }
        let n_samples = columns[0].len();
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n_samples) {
            return Err(Error::Shape(format!(
                "component {} has {} samples, expected {n_samples}",
                labels[i],
                c.len()
            )));
        }
        let mut data = Vec::with_capacity(n_samples * columns.len());
        for c in &columns {
            data.extend_from_slice(c);
        }
        Self::from_component_major(labels, n_samples, data, sample_rate)
    }

    pub fn from_component_major(labels: Vec<String>, n_samples: usize, data: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Configuration(format!("sample rate {sample_rate} must be positive")));
        }
        if labels.is_empty() || data.len() != labels.len() * n_samples {
            return Err(Error::Shape(format!(
                "{} values do not form {} components of {n_samples} samples",
                data.len(),
                labels.len()
            )));
        }
        let n = labels.len();
        Ok(RecordSet {
            labels,
            n_samples,
            data,
            sample_rate,
            direction_deg: 0.0,
            configuration: Configuration::SingleModel,
            means: alloc::vec![0.0; n],
            scale: None,
        })
    }

    pub fn with_metadata(mut self, direction_deg: f64, configuration: Configuration) -> Self {
        self.direction_deg = direction_deg;
        self.configuration = configuration;
        self
    }

    pub fn n_components(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_components()).map(move |i| self.component(i))
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn set_means(&mut self, means: Vec<f64>) -> Result<()> {
        if means.len() != self.n_components() {
            return Err(Error::Shape(format!("{} means for {} components", means.len(), self.n_components())));
        }
        self.means = means;
        Ok(())
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.scale.as_deref()
    }

    pub fn set_scale(&mut self, scale: Option<Vec<f64>>) -> Result<()> {
        if let Some(s) = &scale {
            if s.len() != self.n_components() {
                return Err(Error::Shape(format!("{} scale entries for {} components", s.len(), self.n_components())));
            }
        }
        self.scale = scale;
        Ok(())
    }

    /// Subtracts the sample mean of every component and folds it into `means`.
    pub fn remove_means(&mut self) {
        for i in 0..self.n_components() {
            let col = self.component_mut(i);
            let m = mean(col);
            for v in col.iter_mut() {
                *v -= m;
            }
            self.means[i] += m;
        }
    }

    /// Copy of samples `start..end`, keeping metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<RecordSet> {
        if start > end || end > self.n_samples {
            return Err(Error::Argument(format!("sample range {start}..{end} outside 0..{}", self.n_samples)));
        }
        let len = end - start;
        let mut data = Vec::with_capacity(len * self.n_components());
        for c in self.components() {
            data.extend_from_slice(&c[start..end]);
        }
        Ok(RecordSet { data, n_samples: len, ..self.clone_meta() })
    }

    /// Non-overlapping consecutive pieces of `len` samples; a trailing partial piece is dropped.
    pub fn segments(&self, len: usize) -> Result<Vec<RecordSet>> {
        if len == 0 {
            return Err(Error::Argument("segment length must be positive".into()));
        }
        (0..self.n_samples / len).map(|k| self.slice(k * len, (k + 1) * len)).collect()
    }

    fn clone_meta(&self) -> RecordSet {
        RecordSet {
            labels: self.labels.clone(),
            n_samples: 0,
            data: Vec::new(),
            sample_rate: self.sample_rate,
            direction_deg: self.direction_deg,
            configuration: self.configuration,
            means: self.means.clone(),
            scale: self.scale.clone(),
        }
    }

    /// Replaces the samples with data of the same shape.
    pub fn map_components(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<RecordSet> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, c) in self.components().enumerate() {
            let out = f(i, c);
            if out.len() != self.n_samples {
                return Err(Error::Shape(format!("mapped component {i} changed length")));
            }
            data.extend(out);
        }
        Ok(RecordSet { data, n_samples: self.n_samples, ..self.clone_meta() })
    }

    /// Checks every sample is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, c) in self.components().enumerate() {
            if let Some(s) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::DataQuality { channel: self.labels[i].to_string(), sample: s });
            }
        }
        Ok(())
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (1/n) about the sample mean.
pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn labels_follow_block_order() {
        let l = floor_component_labels(2);
        assert_eq!(l, vec!["CFx_1", "CFx_2", "CFy_1", "CFy_2", "CTz_1", "CTz_2"]);
    }

    #[test]
    fn remove_means_accumulates_into_means() {
        let mut rs = RecordSet::from_columns(generic_labels(2), vec![vec![1.0, 3.0], vec![-2.0, -2.0]], 10.0).unwrap();
        rs.remove_means();
        assert_eq!(rs.means(), &[2.0, -2.0]);
        assert_eq!(rs.component(0), &[-1.0, 1.0]);
        assert_eq!(rs.component(1), &[0.0, 0.0]);
    }

    #[test]
    fn segments_drop_partial_tail() {
        let rs = RecordSet::from_columns(generic_labels(1), vec![(0..10).map(f64::from).collect()], 1.0).unwrap();
        let segs = rs.segments(3).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].component(0), &[6.0, 7.0, 8.0]);
    }

    #[test]
    fn mismatched_columns_rejected() {
        let err = RecordSet::from_columns(generic_labels(2), vec![vec![1.0], vec![1.0, 2.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
