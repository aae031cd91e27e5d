//! The unnormalized density abstraction samplers draw from, and the
//! compiled-graph adapter for field models.

use crate::autodiff::TapeBuf;
use crate::fieldnet::{DensityGraph, DensityModel};
use crate::num::Real;

use super::DENSITY_FLOOR;

/// Per-chain scratch space so targets can evaluate compiled graphs without
/// interior mutability.
#[derive(Debug, Default)]
pub struct SamplerScratch<F> {
    pub buf: TapeBuf<F>,
    pub grad: Vec<F>,
}

impl<F: Real> SamplerScratch<F> {
    pub fn new(dim: usize) -> Self {
        SamplerScratch { buf: TapeBuf::new(), grad: vec![F::zero(); dim] }
    }
}

/// An unnormalized density over spacetime points. Log densities are floored
/// (never -inf); the gradient is of the floored log density.
pub trait DensityTarget<F: Real>: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, point: &[F], scratch: &mut SamplerScratch<F>) -> F;
    /// Writes ∇ log ρ into `out`. Only gradient-based samplers call this.
    fn grad_log_density(&self, point: &[F], scratch: &mut SamplerScratch<F>, out: &mut [F]) -> F;
}

/// A [`DensityModel`] as a sampler target, evaluated through one compiled
/// graph.
pub struct ModelTarget<'m, F: Real> {
    pub model: &'m DensityModel<F>,
    graph: DensityGraph<F>,
}

impl<'m, F: Real> ModelTarget<'m, F> {
    pub fn new(model: &'m DensityModel<F>) -> Self {
        let graph = DensityGraph::compile(model, F::of(DENSITY_FLOOR));
        ModelTarget { model, graph }
    }
}

impl<F: Real> DensityTarget<F> for ModelTarget<'_, F> {
    fn dim(&self) -> usize {
        self.model.input_dim()
    }

    fn log_density(&self, point: &[F], scratch: &mut SamplerScratch<F>) -> F {
        self.graph.log_density(self.model, point, &mut scratch.buf)
    }

    fn grad_log_density(
        &self,
        point: &[F],
        scratch: &mut SamplerScratch<F>,
        out: &mut [F],
    ) -> F {
        self.graph.grad_log_density(self.model, point, &mut scratch.buf, out)
    }
}

/// Closed-form target for tests and oracles.
pub struct FnTarget<F, L, G> {
    pub dims: usize,
    pub logp: L,
    pub grad: G,
    pub _marker: core::marker::PhantomData<F>,
}

impl<F: Real, L, G> FnTarget<F, L, G>
where
    L: Fn(&[F]) -> F + Sync,
    G: Fn(&[F], &mut [F]) + Sync,
{
    pub fn new(dims: usize, logp: L, grad: G) -> Self {
        FnTarget { dims, logp, grad, _marker: core::marker::PhantomData }
    }
}

impl<F: Real, L, G> DensityTarget<F> for FnTarget<F, L, G>
where
    L: Fn(&[F]) -> F + Sync,
    G: Fn(&[F], &mut [F]) + Sync,
{
    fn dim(&self) -> usize {
        self.dims
    }
    fn log_density(&self, point: &[F], _scratch: &mut SamplerScratch<F>) -> F {
        (self.logp)(point)
    }
    fn grad_log_density(
        &self,
        point: &[F],
        _scratch: &mut SamplerScratch<F>,
        out: &mut [F],
    ) -> F {
        (self.grad)(point, out);
        (self.logp)(point)
    }
}
