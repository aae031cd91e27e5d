//! Collocation-point sources: quasi-random uniform, background
//! distributions, inverse-transform sampling, Metropolis-Hastings with
//! parallel tempering, Hamiltonian Monte Carlo with dual averaging, warm-up
//! mixing, and the residual-refinement baselines.

mod background;
mod bijection;
mod hmc;
mod inverse_transform;
mod mh;
mod mix;
mod refine;
mod sobol;
mod target;

pub use background::{background_sample, BackgroundMode};
pub use bijection::Bijection;
pub use hmc::{hmc_sample, HmcOptions};
pub use inverse_transform::{inverse_cdf_interp, inverse_transform_sample};
pub use mh::{mh_sample, MhOptions};
pub use mix::{mix_batches, MixSchedule};
pub use refine::{linear_ot_map, ot_rar_select, rar_select, LinearMap};
pub use sobol::{sobol_raw, sobol_uniform, sobol_uniform_from};
pub use target::{DensityTarget, FnTarget, ModelTarget, SamplerScratch};

use thiserror::Error;

use crate::num::Real;

/// The density floor applied inside log targets so `log(ρ + ε)` stays
/// finite wherever the model predicts zero mass.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("dimension {0} is unbounded; quasi-random uniform sampling needs a bounded box — use background sampling instead")]
    UnboundedDomain(usize),
    #[error("inverse-transform sampling is grid-based and limited to 3 total dims (got {0}); use the Metropolis-Hastings or Hamiltonian samplers")]
    TooManyDims(usize),
    #[error("density is zero over the whole domain (no finite log-density found in {0} initialization attempts)")]
    ZeroDensity(usize),
    #[error("background sampling in {0:?} mode needs {1}")]
    BackgroundPrecondition(BackgroundMode, &'static str),
    #[error("refinement size k must be positive")]
    BadK,
    #[error("OT refinement needs j < 2k (got j = {j}, k = {k})")]
    BadJ { j: usize, k: usize },
    #[error("covariance degenerate even after regularization")]
    DegenerateCovariance,
    #[error("{0} of {1} trajectories diverged; the target is too rough for the integrator")]
    TooManyDivergences(usize, usize),
    #[error("chain count {chains} must be a positive multiple of the ladder length {ladder}")]
    BadChainCount { chains: usize, ladder: usize },
}

/// Per-dimension extent of the sampling region.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Extent<F> {
    Bounded(F, F),
    Unbounded,
}

/// Spacetime sampling region: a time range plus per-dimension spatial
/// extents (a box, or unbounded dimensions for the truly mesh-free case).
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<F> {
    pub t: (F, F),
    pub space: Vec<Extent<F>>,
}

impl<F: Real> Domain<F> {
    pub fn bounded(t: (F, F), space_box: &[(F, F)]) -> Self {
        assert!(t.0 < t.1);
        let space = space_box
            .iter()
            .map(|&(a, b)| {
                assert!(a < b);
                Extent::Bounded(a, b)
            })
            .collect();
        Domain { t, space }
    }

    pub fn unbounded(t: (F, F), spatial_dim: usize) -> Self {
        Domain { t, space: vec![Extent::Unbounded; spatial_dim] }
    }

    /// Total dimensionality (1 + spatial).
    pub fn dim(&self) -> usize {
        1 + self.space.len()
    }

    pub fn spatial_dim(&self) -> usize {
        self.space.len()
    }

    /// Extent of dimension `i` in spacetime indexing (0 = time).
    pub fn extent(&self, i: usize) -> Extent<F> {
        if i == 0 {
            Extent::Bounded(self.t.0, self.t.1)
        } else {
            self.space[i - 1]
        }
    }

    pub fn fully_bounded(&self) -> Option<Vec<(F, F)>> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            match self.extent(i) {
                Extent::Bounded(a, b) => out.push((a, b)),
                Extent::Unbounded => return None,
            }
        }
        Some(out)
    }

    pub fn contains(&self, p: &[F]) -> bool {
        debug_assert_eq!(p.len(), self.dim());
        (0..self.dim()).all(|i| match self.extent(i) {
            Extent::Bounded(a, b) => p[i] >= a && p[i] <= b,
            Extent::Unbounded => p[i].is_finite(),
        })
    }
}

/// Sampler diagnostics recorded per resampling event.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SamplerDiag {
    pub accept_rate: f64,
    pub swap_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_bounds_and_containment() {
        let d = Domain::bounded((0.0f64, 1.0), &[(-1.0, 1.0)]);
        assert_eq!(d.dim(), 2);
        assert!(d.contains(&[0.5, 0.0]));
        assert!(!d.contains(&[1.5, 0.0]));
        assert!(d.fully_bounded().is_some());

        let u = Domain::unbounded((0.0f64, 3.0), 2);
        assert!(u.fully_bounded().is_none());
        assert!(u.contains(&[1.0, 1e9, -1e9]));
    }
}
