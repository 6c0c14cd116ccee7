use alloc::string::String;

/// Failure modes of the core numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid reference: dynamic pressure q = {q} must be positive")]
    InvalidReference { q: f64 },

    #[error("data quality: non-finite sample in {channel} at sample {sample}")]
    DataQuality { channel: String, sample: usize },

    #[error("configuration: {0}")]
    Configuration(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("degenerate channel {label}: zero variance")]
    DegenerateChannel { label: String },

    #[error("split: need {required_s} s of data, have {available_s} s")]
    Split { required_s: f64, available_s: f64 },

    #[error("filter spec: {0}")]
    FilterSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty spectrum: {0}")]
    EmptySpectrum(String),

    #[error("input matrix at frequency line {line} is not Hermitian (deviation {deviation:e})")]
    NonHermitian { line: usize, deviation: f64 },

    #[error("eigensolver did not converge at frequency line {line}")]
    EigenNonConvergence { line: usize },

    #[error("argument out of range: {0}")]
    Argument(String),

    #[error("calibration: eigenvalue {value:e} of mode {mode} at line {line} is negative")]
    Calibration { line: usize, mode: usize, value: f64 },

    #[error("degenerate target: component {component} has zero variance")]
    DegenerateTarget { component: usize },

    #[error("construction: {0}")]
    Construction(String),
}

impl Error {
    /// Errors caused by numerical breakdown rather than bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenNonConvergence { .. } | Error::Calibration { .. } | Error::NonHermitian { .. }
        )
    }

    pub fn is_data_quality(&self) -> bool {
        matches!(
            self,
            Error::DataQuality { .. } | Error::DegenerateChannel { .. } | Error::DegenerateTarget { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
