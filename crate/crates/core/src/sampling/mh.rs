//! Random-walk Metropolis-Hastings over the unconstrained space, with
//! parallel tempering ladders and Robbins-Monro proposal adaptation during
//! burn-in.

use rayon::prelude::*;

use super::bijection::Bijection;
use super::{DensityTarget, Domain, SamplerDiag, SamplerError, SamplerScratch, DENSITY_FLOOR};
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};
use crate::util;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MhOptions {
    /// Total chains; must be a positive multiple of the ladder length.
    pub chains: usize,
    /// Inverse temperatures, cold first (1.0).
    pub ladder: Vec<f64>,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub swap_every: usize,
    /// Initial proposal scale (adapted toward 23.4% acceptance).
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MhOptions {
    fn default() -> Self {
        MhOptions {
            chains: 32,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            burn_in: 200,
            thin: 4,
            swap_every: 10,
            init_scale: 0.25,
            seed: 0,
        }
    }
}

/// Draw `n` points from the target. Chains run in independent tempering
/// groups (one chain per ladder temperature); kept states come from the
/// cold chains only, thinned evenly, merged in group order.
///
/// `warm_starts` seeds initial positions (previous collocation batch);
/// otherwise standard-normal draws in the unconstrained space are used.
pub fn mh_sample<F: Real>(
    n: usize,
    target: &impl DensityTarget<F>,
    dom: &Domain<F>,
    opts: &MhOptions,
    warm_starts: Option<&CollocationBatch<F>>,
) -> Result<(CollocationBatch<F>, SamplerDiag), SamplerError> {
    let dim = dom.dim();
    assert_eq!(target.dim(), dim, "target dimension mismatch");
    let n_temps = opts.ladder.len();
    if opts.chains == 0 || n_temps == 0 || opts.chains % n_temps != 0 {
        return Err(SamplerError::BadChainCount { chains: opts.chains, ladder: n_temps });
    }
    let n_groups = opts.chains / n_temps;
    let bij = Bijection::for_domain(dom);

    // Initial unconstrained positions, one per (group, temp).
    let inits = initial_positions(target, dom, &bij, opts, n_groups, warm_starts)?;

    let quota = |g: usize| n / n_groups + usize::from(g < n % n_groups);
    let results: Vec<GroupResult<F>> = (0..n_groups)
        .into_par_iter()
        .map(|g| {
            run_group(
                target,
                &bij,
                opts,
                &inits[g * n_temps..(g + 1) * n_temps],
                quota(g),
                util::derive_seed_indexed(opts.seed, "mh-group", g as u64),
            )
        })
        .collect();

    let mut batch = CollocationBatch::new(dim);
    let mut x = vec![F::zero(); dim];
    let mut accepts = 0usize;
    let mut proposals = 0usize;
    let mut swaps = 0usize;
    let mut swap_tries = 0usize;
    let mut scale_sum = 0.0;
    for r in &results {
        for z in &r.kept {
            bij.forward(z, &mut x);
            batch.push(&x, Provenance::ModelDensity);
        }
        accepts += r.cold_accepts;
        proposals += r.cold_proposals;
        swaps += r.swaps;
        swap_tries += r.swap_tries;
        scale_sum += r.cold_scale;
    }
    let diag = SamplerDiag {
        accept_rate: accepts as f64 / proposals.max(1) as f64,
        swap_rate: swaps as f64 / swap_tries.max(1) as f64,
        divergences: 0,
        step_size: scale_sum / n_groups as f64,
    };
    Ok((batch, diag))
}

struct GroupResult<F> {
    kept: Vec<Vec<F>>,
    cold_accepts: usize,
    cold_proposals: usize,
    swaps: usize,
    swap_tries: usize,
    cold_scale: f64,
}

fn run_group<F: Real>(
    target: &impl DensityTarget<F>,
    bij: &Bijection<F>,
    opts: &MhOptions,
    inits: &[Vec<F>],
    quota: usize,
    seed: u64,
) -> GroupResult<F> {
    let dim = bij.dim();
    let n_temps = opts.ladder.len();
    let mut rng = util::rng_from(seed);
    let mut scratch = SamplerScratch::new(dim);
    let mut xbuf = vec![F::zero(); dim];

    let logp_of = |z: &[F], scratch: &mut SamplerScratch<F>, xb: &mut [F]| -> F {
        bij.forward(z, xb);
        target.log_density(xb, scratch) + bij.log_jacobian(z)
    };

    let mut z: Vec<Vec<F>> = inits.to_vec();
    let mut logp: Vec<F> = z
        .iter()
        .map(|zi| logp_of(zi, &mut scratch, &mut xbuf))
        .collect();
    let mut scale: Vec<f64> = vec![opts.init_scale; n_temps];
    let mut accept_window: Vec<f64> = vec![0.0; n_temps];

    let total = opts.burn_in + quota * opts.thin;
    let mut kept = Vec::with_capacity(quota);
    let mut cold_accepts = 0;
    let mut cold_proposals = 0;
    let mut swaps = 0;
    let mut swap_tries = 0;
    let mut prop = vec![F::zero(); dim];

    for step in 0..total {
        for k in 0..n_temps {
            let beta = F::of(opts.ladder[k]);
            for d in 0..dim {
                prop[d] = z[k][d] + util::draw_normal::<F, _>(&mut rng) * F::of(scale[k]);
            }
            let lp = logp_of(&prop, &mut scratch, &mut xbuf);
            let log_u = F::of(rng.random::<f64>().max(1e-300).ln());
            let accepted = log_u < beta * (lp - logp[k]);
            if accepted {
                z[k].copy_from_slice(&prop);
                logp[k] = lp;
            }
            if step < opts.burn_in {
                // Robbins-Monro drive toward 23.4% acceptance
                let gamma = (step as f64 + 1.0).powf(-0.6);
                let a = if accepted { 1.0 } else { 0.0 };
                accept_window[k] = 0.9 * accept_window[k] + 0.1 * a;
                scale[k] *= (gamma * (a - 0.234)).exp();
                scale[k] = scale[k].clamp(1e-6, 1e3);
            } else if k == 0 {
                cold_proposals += 1;
                cold_accepts += usize::from(accepted);
            }
        }
        if n_temps > 1 && step % opts.swap_every == 0 {
            for k in 0..n_temps - 1 {
                swap_tries += 1;
                let db = F::of(opts.ladder[k] - opts.ladder[k + 1]);
                let delta = db * (logp[k + 1] - logp[k]);
                let log_u = F::of(rng.random::<f64>().max(1e-300).ln());
                if log_u < delta {
                    z.swap(k, k + 1);
                    logp.swap(k, k + 1);
                    swaps += 1;
                }
            }
        }
        if step >= opts.burn_in && (step - opts.burn_in) % opts.thin == 0 && kept.len() < quota
        {
            kept.push(z[0].clone());
        }
    }
    GroupResult {
        kept,
        cold_accepts,
        cold_proposals,
        swaps,
        swap_tries,
        cold_scale: scale[0],
    }
}

/// Initial unconstrained positions for every chain: warm starts from a
/// previous batch when given (cycled over the chains), else standard-normal
/// draws. Errors when no position lands on positive density after a bounded
/// number of attempts.
pub(super) fn initial_positions<F: Real>(
    target: &impl DensityTarget<F>,
    dom: &Domain<F>,
    bij: &Bijection<F>,
    opts: &MhOptions,
    n_groups: usize,
    warm_starts: Option<&CollocationBatch<F>>,
) -> Result<Vec<Vec<F>>, SamplerError> {
    let dim = dom.dim();
    let n_chains = n_groups * opts.ladder.len();
    let mut rng = util::rng_from(util::derive_seed(opts.seed, "mh-init"));
    let mut scratch = SamplerScratch::new(dim);
    let mut out = Vec::with_capacity(n_chains);
    let floor_log = F::of((DENSITY_FLOOR * 2.0).ln());
    let mut alive = false;
    const ATTEMPTS: usize = 100;

    for c in 0..n_chains {
        let mut z = vec![F::zero(); dim];
        let mut found = false;
        for attempt in 0..ATTEMPTS {
            match warm_starts {
                Some(batch) if attempt == 0 && !batch.is_empty() => {
                    bij.inverse(batch.point(c % batch.len()), &mut z);
                }
                _ => {
                    for zd in z.iter_mut() {
                        *zd = util::draw_normal(&mut rng);
                    }
                }
            }
            let mut x = vec![F::zero(); dim];
            bij.forward(&z, &mut x);
            let lp = target.log_density(&x, &mut scratch);
            if lp > floor_log {
                found = true;
                alive = true;
                break;
            }
        }
        let _ = found; // a dead start keeps its last draw and walks out
        out.push(z);
    }
    if !alive {
        return Err(SamplerError::ZeroDensity(ATTEMPTS));
    }
    Ok(out)
}
