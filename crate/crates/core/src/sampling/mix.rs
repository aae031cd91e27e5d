//! Warm-up mixing: all collocation points start from the background
//! distribution, then the model-density share ramps linearly to its final
//! fraction.

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::pde::CollocationBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSchedule {
    pub warmup_epochs: usize,
    /// Ramp duration after warm-up; the density fraction rises linearly
    /// from 0 to `final_density_fraction` over these epochs.
    pub ramp_epochs: usize,
    pub final_density_fraction: f64,
    pub resample_every: usize,
}

impl Default for MixSchedule {
    fn default() -> Self {
        MixSchedule {
            warmup_epochs: 500,
            ramp_epochs: 500,
            final_density_fraction: 0.9,
            resample_every: 500,
        }
    }
}

impl MixSchedule {
    /// Share of points drawn from the model density at `epoch`.
    pub fn density_fraction(&self, epoch: usize) -> f64 {
        if epoch <= self.warmup_epochs {
            return 0.0;
        }
        if self.ramp_epochs == 0 {
            return self.final_density_fraction;
        }
        let progress = (epoch - self.warmup_epochs) as f64 / self.ramp_epochs as f64;
        self.final_density_fraction * progress.min(1.0)
    }
}

/// Assemble `n` points: `ceil(fraction·n)` from the density source, the
/// remainder from the background source. Sources receive the count they
/// must produce.
pub fn mix_batches<F: Real>(
    schedule: &MixSchedule,
    epoch: usize,
    density_source: impl FnOnce(usize) -> CollocationBatch<F>,
    background_source: impl FnOnce(usize) -> CollocationBatch<F>,
    n: usize,
) -> CollocationBatch<F> {
    let frac = schedule.density_fraction(epoch);
    let n_density = (frac * n as f64).ceil() as usize;
    let n_density = n_density.min(n);
    let n_background = n - n_density;
    let mut parts: Vec<CollocationBatch<F>> = Vec::with_capacity(2);
    if n_density > 0 {
        parts.push(density_source(n_density));
    }
    if n_background > 0 {
        parts.push(background_source(n_background));
    }
    let mut out = parts.remove(0);
    for p in &parts {
        out.append(p);
    }
    out
}
