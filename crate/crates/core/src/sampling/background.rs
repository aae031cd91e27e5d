//! Background collocation sources for the warm-up phase: time uniform on
//! [t₀, T], space from a fitted Gaussian, from random convex combinations
//! of data locations, or uniform in the box.

use rand::Rng;

use super::{Domain, Extent, SamplerError};
use crate::fieldnet::GaussianEnvelope;
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Gaussian,
    ConvexHull,
    Uniform,
}

/// Rows mixed by the convex-hull mode per sample.
const HULL_ROWS: usize = 8;

/// Draw `n` background points: `t ~ U(t₀, T)` always; `x` from the chosen
/// spatial distribution.
///
/// * `Gaussian` needs the fitted envelope; on bounded spatial dims, draws
///   falling outside are redrawn (up to a cap, then clamped).
/// * `ConvexHull` draws Dirichlet(1) weights over `HULL_ROWS` randomly
///   chosen rows of `data_locations` and returns the weighted combination.
/// * `Uniform` needs every spatial dim bounded.
pub fn background_sample<F: Real, R: Rng>(
    n: usize,
    mode: BackgroundMode,
    data_locations: &[Vec<F>],
    envelope: Option<&GaussianEnvelope<F>>,
    dom: &Domain<F>,
    rng: &mut R,
) -> Result<CollocationBatch<F>, SamplerError> {
    let spatial = dom.spatial_dim();
    match mode {
        BackgroundMode::Gaussian => {
            if envelope.is_none() {
                return Err(SamplerError::BackgroundPrecondition(mode, "a fitted envelope"));
            }
        }
        BackgroundMode::ConvexHull => {
            if data_locations.len() < HULL_ROWS {
                return Err(SamplerError::BackgroundPrecondition(
                    mode,
                    "at least 8 data locations",
                ));
            }
        }
        BackgroundMode::Uniform => {
            if dom.fully_bounded().is_none() {
                return Err(SamplerError::BackgroundPrecondition(mode, "a bounded box"));
            }
        }
    }

    let mut batch = CollocationBatch::new(dom.dim());
    let mut point = vec![F::zero(); dom.dim()];
    for _ in 0..n {
        point[0] = util::draw_uniform(rng, dom.t.0, dom.t.1);
        match mode {
            BackgroundMode::Gaussian => {
                let env = envelope.expect("checked above");
                let mut x = env.sample(rng);
                for _try in 0..100 {
                    if spatial_in_bounds(dom, &x) {
                        break;
                    }
                    x = env.sample(rng);
                }
                clamp_spatial(dom, &mut x);
                point[1..].copy_from_slice(&x);
            }
            BackgroundMode::ConvexHull => {
                // Dirichlet(α=1) over the chosen rows via normalized
                // exponentials.
                let mut w = [0.0f64; HULL_ROWS];
                let mut total = 0.0;
                for wi in &mut w {
                    let e = -(rng.random::<f64>().max(1e-300)).ln();
                    *wi = e;
                    total += e;
                }
                for x in point[1..].iter_mut() {
                    *x = F::zero();
                }
                for wi in &w {
                    let row = &data_locations[rng.random_range(0..data_locations.len())];
                    let weight = F::of(wi / total);
                    for (d, x) in point[1..].iter_mut().enumerate() {
                        *x += weight * row[d];
                    }
                }
            }
            BackgroundMode::Uniform => {
                for d in 0..spatial {
                    let Extent::Bounded(a, b) = dom.space[d] else { unreachable!() };
                    point[1 + d] = util::draw_uniform(rng, a, b);
                }
            }
        }
        batch.push(&point, Provenance::Background);
    }
    Ok(batch)
}

fn spatial_in_bounds<F: Real>(dom: &Domain<F>, x: &[F]) -> bool {
    dom.space.iter().zip(x).all(|(e, &v)| match *e {
        Extent::Bounded(a, b) => v >= a && v <= b,
        Extent::Unbounded => v.is_finite(),
    })
}

fn clamp_spatial<F: Real>(dom: &Domain<F>, x: &mut [F]) {
    for (e, v) in dom.space.iter().zip(x.iter_mut()) {
        if let Extent::Bounded(a, b) = *e {
            *v = (*v).max(a).min(b);
        }
    }
}
