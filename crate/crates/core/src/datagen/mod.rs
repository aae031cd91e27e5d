//! Synthetic ground truth for the three experiment families: particle
//! advection with radar-like sensors, an FTCS heat solution, and the
//! analytic Fokker-Planck density.

pub mod dataset;
pub mod fp;
pub mod heat;
pub mod mass;
pub mod parcels;
pub mod velocity;

pub use dataset::{read_csv, write_csv, write_metadata};
pub use fp::{fp_analytic, fp_drift, fp_log_pdf, fp_mean, fp_var, FP_DIFFUSION, FP_SIGMA};
pub use heat::{ftcs_heat, HeatGrid};
pub use mass::{measure_sensors, SensorLayout};
pub use parcels::{propagate, simulate_parcels, MixtureComponent, ParcelEnsemble, Snapshot};

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum DataGenError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite particle position at step {step}")]
    NonFinitePosition { step: usize },
    #[error("FTCS stability violated: dt {dt} exceeds max admissible {max_dt}")]
    Unstable { dt: f64, max_dt: f64 },
    #[error("bad dataset file {path}: {reason}")]
    BadDataset { path: String, reason: String },
    #[error("config: {0}")]
    Config(String),
}

/// One measured record: a sensor (or grid cell, or initial-condition point)
/// reading of the scalar field and, when available, the mean velocity.
/// `rho` holds the temperature for heat data and the probability density for
/// the Fokker-Planck initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorObservation<F> {
    pub t: F,
    /// Spatial location (sensor center; includes the layer mid-z in 3D).
    pub pos: Vec<F>,
    pub layer: u32,
    pub rho: F,
    /// Empty when the dataset carries no velocity.
    pub vel: Vec<F>,
}

impl<F: Real> SensorObservation<F> {
    /// Spacetime point `(t, x...)` as network input.
    pub fn point(&self) -> Vec<F> {
        let mut p = Vec::with_capacity(1 + self.pos.len());
        p.push(self.t);
        p.extend_from_slice(&self.pos);
        p
    }
}
