//! Proper orthogonal decomposition of multivariate wind-load spectra and
//! spectral-representation simulation of the resulting processes.

#![no_std]

extern crate alloc;

pub mod error;
pub mod fft;
pub mod filter;
pub mod ingest;
pub mod metrics;
pub mod pod;
pub mod record;
pub mod rng;
pub mod spectral;
pub mod srm;
pub mod synthetic;

pub use error::{Error, Result};
pub use record::{Configuration, RecordSet};
pub use spectral::{CpsdMatrix, Sided, WelchConfig, Window};
pub use metrics::{ErrorReport, SpectralMoments};
pub use pod::SpectralModes;
pub use srm::{ModeSource, SimulationPlan, Synthesizer};
pub use synthetic::SyntheticSpec;
