//! Inverse-transform sampling from a density tabulated on a regular grid:
//! build the empirical CDF over flattened cells, invert it with uniform
//! variates, jitter within the selected cell. Grid-based, so only viable up
//! to three total dimensions.

use rand::Rng;

use super::{DensityTarget, Domain, SamplerError, SamplerScratch};
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};

/// Invert an empirical CDF over equal-width cells with linear interpolation
/// inside the selected cell; returns a position in [0, 1]. Exposed for the
/// closed-form convergence check.
pub fn inverse_cdf_interp<F: Real>(weights: &[F], u: f64) -> f64 {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    debug_assert!(total > 0.0);
    let target = u.clamp(0.0, 1.0) * total;
    let mut cum = 0.0;
    let n = weights.len();
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if cum + w >= target || i == n - 1 {
            let frac = if w > 0.0 { ((target - cum) / w).clamp(0.0, 1.0) } else { 0.5 };
            return (i as f64 + frac) / n as f64;
        }
        cum += w;
    }
    1.0
}

/// Draw `n` points from the model density via the gridded empirical CDF.
/// `grid_resolution` is the cell count per dimension.
pub fn inverse_transform_sample<F: Real, R: Rng>(
    n: usize,
    target: &impl DensityTarget<F>,
    dom: &Domain<F>,
    grid_resolution: usize,
    rng: &mut R,
) -> Result<CollocationBatch<F>, SamplerError> {
    let dim = dom.dim();
    if dim > 3 {
        return Err(SamplerError::TooManyDims(dim));
    }
    let bounds = dom
        .fully_bounded()
        .ok_or(SamplerError::UnboundedDomain(0))?;
    assert!(grid_resolution >= 2);

    let res = grid_resolution;
    let n_cells = res.pow(dim as u32);
    let mut scratch = SamplerScratch::new(dim);
    let mut weights = vec![0.0f64; n_cells];
    let mut point = vec![F::zero(); dim];
    let mut any_positive = false;
    for (ci, w) in weights.iter_mut().enumerate() {
        let mut rem = ci;
        for d in (0..dim).rev() {
            let idx = rem % res;
            rem /= res;
            let (a, b) = bounds[d];
            let frac = (idx as f64 + 0.5) / res as f64;
            point[d] = a + (b - a) * F::of(frac);
        }
        let rho = target.log_density(&point, &mut scratch).exp();
        let rho = rho.as_f64().max(0.0);
        if rho > 0.0 && rho > super::DENSITY_FLOOR * 2.0 {
            any_positive = true;
        }
        *w = rho;
    }
    if !any_positive {
        return Err(SamplerError::ZeroDensity(n_cells));
    }
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(n_cells);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cdf.push(acc);
    }

    let mut batch = CollocationBatch::new(dim);
    for _ in 0..n {
        let u: f64 = rng.random();
        let cell = match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) | Err(i) => i.min(n_cells - 1),
        };
        let mut rem = cell;
        for d in (0..dim).rev() {
            let idx = rem % res;
            rem /= res;
            let (a, b) = bounds[d];
            let jitter: f64 = rng.random();
            let frac = (idx as f64 + jitter) / res as f64;
            point[d] = a + (b - a) * F::of(frac);
        }
        batch.push(&point, Provenance::ModelDensity);
    }
    Ok(batch)
}
