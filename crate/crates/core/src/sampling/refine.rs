//! Residual-refinement collocation baselines: keep the top-k points by
//! squared residual among old points and fresh uniform proposals, or fit a
//! linear optimal-transport map toward the high-residual empirical
//! distribution and push fresh uniforms through it.

use rand::Rng;

use super::{Domain, SamplerError};
use crate::linalg::{sample_mean_cov, Mat};
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};
use crate::util;

fn uniform_proposals<F: Real, R: Rng>(
    k: usize,
    dom: &Domain<F>,
    rng: &mut R,
) -> Result<CollocationBatch<F>, SamplerError> {
    let bounds = dom.fully_bounded().ok_or(SamplerError::UnboundedDomain(0))?;
    let mut batch = CollocationBatch::new(dom.dim());
    let mut p = vec![F::zero(); dom.dim()];
    for _ in 0..k {
        for (d, &(a, b)) in bounds.iter().enumerate() {
            p[d] = util::draw_uniform(rng, a, b);
        }
        batch.push(&p, Provenance::Refined);
    }
    Ok(batch)
}

/// Indices of the `k` largest scores; ties broken by the earliest index.
fn top_k_indices<F: Real>(scores: &[F], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Adapted residual refinement: draw `k` uniform proposals, concatenate
/// with the previous points, keep the `k` with the largest squared residual.
/// `residual` maps a point to the raw residual value.
pub fn rar_select<F: Real, R: Rng>(
    residual: impl Fn(&[F]) -> F,
    x_prev: &CollocationBatch<F>,
    k: usize,
    dom: &Domain<F>,
    rng: &mut R,
) -> Result<CollocationBatch<F>, SamplerError> {
    if k == 0 {
        return Err(SamplerError::BadK);
    }
    let proposals = uniform_proposals(k, dom, rng)?;
    let mut combined = CollocationBatch::new(dom.dim());
    combined.append(x_prev);
    combined.append(&proposals);
    let scores: Vec<F> = combined
        .iter_points()
        .map(|p| {
            let r = residual(p);
            r * r
        })
        .collect();
    let keep = top_k_indices(&scores, k);
    let mut out = CollocationBatch::new(dom.dim());
    for i in keep {
        out.push(combined.point(i), Provenance::Refined);
    }
    Ok(out)
}

/// Affine map `x ↦ A·x + b` with symmetric positive-definite `A`.
#[derive(Debug, Clone)]
pub struct LinearMap<F> {
    pub a: Mat<F>,
    pub b: Vec<F>,
}

impl<F: Real> LinearMap<F> {
    pub fn apply(&self, x: &[F]) -> Vec<F> {
        let mut y = self.a.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += *bi;
        }
        y
    }
}

/// Closed-form optimal transport between the Gaussian approximations of two
/// point clouds: `x ↦ μ_t + A(x - μ_s)` with
/// `A = Σs^{-1/2} (Σs^{1/2} Σt Σs^{1/2})^{1/2} Σs^{-1/2}`.
/// Sample covariances are regularized by `+1e-6·I`.
pub fn linear_ot_map<F: Real>(
    source: &[Vec<F>],
    target: &[Vec<F>],
) -> Result<LinearMap<F>, SamplerError> {
    assert!(!source.is_empty() && !target.is_empty());
    let d = source[0].len();
    assert!(source.len() > d && target.len() > d, "need at least d+1 points");
    let (mu_s, mut cov_s) = sample_mean_cov(source);
    let (mu_t, mut cov_t) = sample_mean_cov(target);
    let reg = F::of(1e-6);
    cov_s.add_scaled_identity(reg);
    cov_t.add_scaled_identity(reg);

    let s_half = cov_s.sym_sqrt().map_err(|_| SamplerError::DegenerateCovariance)?;
    let s_inv_half = cov_s
        .sym_inv_sqrt()
        .map_err(|_| SamplerError::DegenerateCovariance)?;
    let inner = s_half.matmul(&cov_t).matmul(&s_half);
    let inner_half = inner.sym_sqrt().map_err(|_| SamplerError::DegenerateCovariance)?;
    let a = s_inv_half.matmul(&inner_half).matmul(&s_inv_half);

    let a_mu_s = a.matvec(&mu_s);
    let b = mu_t
        .iter()
        .zip(&a_mu_s)
        .map(|(&t, &s)| t - s)
        .collect();
    Ok(LinearMap { a, b })
}

/// Adapted OT refinement: fit the linear map from `j` fresh uniforms toward
/// the top-`j` high-residual points of (previous ∪ k proposals), then map
/// `k` fresh uniforms through it, clipping into the domain box.
pub fn ot_rar_select<F: Real, R: Rng>(
    residual: impl Fn(&[F]) -> F,
    x_prev: &CollocationBatch<F>,
    k: usize,
    j: usize,
    dom: &Domain<F>,
    rng: &mut R,
) -> Result<CollocationBatch<F>, SamplerError> {
    if k == 0 {
        return Err(SamplerError::BadK);
    }
    if j >= 2 * k {
        return Err(SamplerError::BadJ { j, k });
    }
    let bounds = dom.fully_bounded().ok_or(SamplerError::UnboundedDomain(0))?;

    let proposals = uniform_proposals(k, dom, rng)?;
    let mut combined = CollocationBatch::new(dom.dim());
    combined.append(x_prev);
    combined.append(&proposals);
    let scores: Vec<F> = combined
        .iter_points()
        .map(|p| {
            let r = residual(p);
            r * r
        })
        .collect();
    let target_pts: Vec<Vec<F>> = top_k_indices(&scores, j.min(combined.len()))
        .into_iter()
        .map(|i| combined.point(i).to_vec())
        .collect();
    let source_pts: Vec<Vec<F>> = uniform_proposals(j, dom, rng)?
        .iter_points()
        .map(|p| p.to_vec())
        .collect();
    let map = linear_ot_map(&source_pts, &target_pts)?;

    let fresh = uniform_proposals(k, dom, rng)?;
    let mut out = CollocationBatch::new(dom.dim());
    for p in fresh.iter_points() {
        let mut y = map.apply(p);
        for (d, &(a, b)) in bounds.iter().enumerate() {
            y[d] = y[d].max(a).min(b);
        }
        out.push(&y, Provenance::Refined);
    }
    Ok(out)
}
