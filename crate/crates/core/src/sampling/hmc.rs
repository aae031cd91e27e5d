//! Hamiltonian Monte Carlo over the unconstrained space: leapfrog
//! integration, dual-averaging step-size adaptation during burn-in, optional
//! tempering ladder with state swaps, divergence accounting.

use rayon::prelude::*;

use super::bijection::Bijection;
use super::mh::initial_positions;
use super::{DensityTarget, Domain, MhOptions, SamplerDiag, SamplerError, SamplerScratch};
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};
use crate::util;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct HmcOptions {
    /// Total chains; must be a positive multiple of the ladder length.
    pub chains: usize,
    /// Inverse temperatures, cold first.
    pub ladder: Vec<f64>,
    pub leapfrog_steps: usize,
    /// Dual-averaging target acceptance.
    pub target_accept: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub swap_every: usize,
    pub init_step: f64,
    pub seed: u64,
}

impl Default for HmcOptions {
    fn default() -> Self {
        HmcOptions {
            chains: 8,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            leapfrog_steps: 12,
            target_accept: 0.75,
            burn_in: 200,
            thin: 2,
            swap_every: 10,
            init_step: 0.1,
            seed: 0,
        }
    }
}

/// Trajectories whose energy error exceeds this are counted as divergent
/// and rejected outright.
const DIVERGENCE_ENERGY: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct HmcReport {
    pub diag: SamplerDiag,
    /// Averaged step-size trace of the cold chains over burn-in (one entry
    /// per burn-in step).
    pub step_trace: Vec<f64>,
}

pub fn hmc_sample<F: Real>(
    n: usize,
    target: &impl DensityTarget<F>,
    dom: &Domain<F>,
    opts: &HmcOptions,
    warm_starts: Option<&CollocationBatch<F>>,
) -> Result<(CollocationBatch<F>, HmcReport), SamplerError> {
    let dim = dom.dim();
    assert_eq!(target.dim(), dim, "target dimension mismatch");
    let n_temps = opts.ladder.len();
    if opts.chains == 0 || n_temps == 0 || opts.chains % n_temps != 0 {
        return Err(SamplerError::BadChainCount { chains: opts.chains, ladder: n_temps });
    }
    let n_groups = opts.chains / n_temps;
    let bij = Bijection::for_domain(dom);

    let mh_like = MhOptions {
        chains: opts.chains,
        ladder: opts.ladder.clone(),
        burn_in: opts.burn_in,
        thin: opts.thin,
        swap_every: opts.swap_every,
        init_scale: opts.init_step,
        seed: opts.seed,
        ..Default::default()
    };
    let inits = initial_positions(target, dom, &bij, &mh_like, n_groups, warm_starts)?;

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
                util::derive_seed_indexed(opts.seed, "hmc-group", g as u64),
            )
        })
        .collect();

    let mut batch = CollocationBatch::new(dim);
    let mut x = vec![F::zero(); dim];
    let mut accepts = 0usize;
    let mut proposals = 0usize;
    let mut divergences = 0usize;
    let mut swaps = 0usize;
    let mut swap_tries = 0usize;
    let mut step_sum = 0.0;
    let mut trace = vec![0.0f64; opts.burn_in];
    for r in &results {
        for z in &r.kept {
            bij.forward(z, &mut x);
            batch.push(&x, Provenance::ModelDensity);
        }
        accepts += r.cold_accepts;
        proposals += r.cold_proposals;
        divergences += r.divergences;
        swaps += r.swaps;
        swap_tries += r.swap_tries;
        step_sum += r.cold_step;
        for (t, v) in trace.iter_mut().zip(&r.step_trace) {
            *t += v / n_groups as f64;
        }
    }
    let total_props = results
        .iter()
        .map(|r| r.total_proposals)
        .sum::<usize>()
        .max(1);
    if divergences * 2 > total_props {
        return Err(SamplerError::TooManyDivergences(divergences, total_props));
    }
    let report = HmcReport {
        diag: SamplerDiag {
            accept_rate: accepts as f64 / proposals.max(1) as f64,
            swap_rate: swaps as f64 / swap_tries.max(1) as f64,
            divergences,
            step_size: step_sum / n_groups as f64,
        },
        step_trace: trace,
    };
    Ok((batch, report))
}

struct GroupResult<F> {
    kept: Vec<Vec<F>>,
    cold_accepts: usize,
    cold_proposals: usize,
    total_proposals: usize,
    divergences: usize,
    swaps: usize,
    swap_tries: usize,
    cold_step: f64,
    step_trace: Vec<f64>,
}

/// Dual-averaging state (one per chain).
struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    m: f64,
    delta: f64,
}

impl DualAveraging {
    fn new(eps0: f64, delta: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            m: 0.0,
            delta,
        }
    }

    fn update(&mut self, accept_prob: f64) {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.m += 1.0;
        let frac = 1.0 / (self.m + T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.delta - accept_prob);
        self.log_eps = (self.mu - self.m.sqrt() / GAMMA * self.h_bar).clamp(-20.0, 5.0);
        let w = self.m.powf(-KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn settled(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

fn run_group<F: Real>(
    target: &impl DensityTarget<F>,
    bij: &Bijection<F>,
    opts: &HmcOptions,
    inits: &[Vec<F>],
    quota: usize,
    seed: u64,
) -> GroupResult<F> {
    let dim = bij.dim();
    let n_temps = opts.ladder.len();
    let mut rng = util::rng_from(seed);
    let mut scratch = SamplerScratch::new(dim);
    let mut xbuf = vec![F::zero(); dim];
    let mut gbuf = vec![F::zero(); dim];
    let mut jac = vec![F::zero(); dim];

    // log π(z) = log ρ(T(z)) + log|J(z)| and its z-gradient
    let logp_grad = |z: &[F],
                         scratch: &mut SamplerScratch<F>,
                         xb: &mut [F],
                         gb: &mut [F],
                         jc: &mut [F],
                         grad_out: &mut [F]|
     -> F {
        bij.forward(z, xb);
        let lp = target.grad_log_density(xb, scratch, gb);
        bij.jacobian_diag(z, jc);
        let mut dj = vec![F::zero(); z.len()];
        bij.dlog_jacobian(z, &mut dj);
        for d in 0..z.len() {
            grad_out[d] = gb[d] * jc[d] + dj[d];
        }
        lp + bij.log_jacobian(z)
    };

    let mut z: Vec<Vec<F>> = inits.to_vec();
    let mut logp = vec![F::zero(); n_temps];
    let mut grad: Vec<Vec<F>> = vec![vec![F::zero(); dim]; n_temps];
    for k in 0..n_temps {
        logp[k] = logp_grad(&z[k], &mut scratch, &mut xbuf, &mut gbuf, &mut jac, &mut grad[k]);
    }
    let mut da: Vec<DualAveraging> = (0..n_temps)
        .map(|_| DualAveraging::new(opts.init_step, opts.target_accept))
        .collect();

    let total = opts.burn_in + quota * opts.thin;
    let mut kept = Vec::with_capacity(quota);
    let mut cold_accepts = 0;
    let mut cold_proposals = 0;
    let mut total_proposals = 0;
    let mut divergences = 0;
    let mut swaps = 0;
    let mut swap_tries = 0;
    let mut step_trace = vec![0.0f64; opts.burn_in];

    let mut zp = vec![F::zero(); dim];
    let mut gp = vec![F::zero(); dim];
    let mut mom = vec![F::zero(); dim];

    for step in 0..total {
        for k in 0..n_temps {
            let beta = opts.ladder[k];
            let eps = if step < opts.burn_in { da[k].current() } else { da[k].settled() };
            let epsf = F::of(eps);

            for m in mom.iter_mut() {
                *m = util::draw_normal(&mut rng);
            }
            let kinetic0: F = mom.iter().map(|&m| m * m).fold(F::zero(), |a, b| a + b)
                * F::of(0.5);
            // Hamiltonian of the tempered target: -β·logπ + K
            let h0 = -F::of(beta) * logp[k] + kinetic0;

            zp.copy_from_slice(&z[k]);
            gp.copy_from_slice(&grad[k]);
            let mut lp = logp[k];
            // leapfrog
            let mut p = mom.clone();
            for d in 0..dim {
                p[d] += F::of(0.5) * epsf * F::of(beta) * gp[d];
            }
            for l in 0..opts.leapfrog_steps {
                for d in 0..dim {
                    zp[d] += epsf * p[d];
                }
                lp = logp_grad(&zp, &mut scratch, &mut xbuf, &mut gbuf, &mut jac, &mut gp);
                let half = if l + 1 == opts.leapfrog_steps { F::of(0.5) } else { F::one() };
                for d in 0..dim {
                    p[d] += half * epsf * F::of(beta) * gp[d];
                }
            }
            let kinetic1: F =
                p.iter().map(|&m| m * m).fold(F::zero(), |a, b| a + b) * F::of(0.5);
            let h1 = -F::of(beta) * lp + kinetic1;
            let delta_h = (h0 - h1).as_f64();

            total_proposals += 1;
            let diverged = !delta_h.is_finite() || delta_h.abs() > DIVERGENCE_ENERGY;
            let accept_prob = if diverged { 0.0 } else { delta_h.exp().min(1.0) };
            let accepted = !diverged && rng.random::<f64>() < accept_prob;
            if diverged {
                divergences += 1;
            }
            if accepted {
                z[k].copy_from_slice(&zp);
                grad[k].copy_from_slice(&gp);
                logp[k] = lp;
            }
            if step < opts.burn_in {
                da[k].update(accept_prob);
                if k == 0 {
                    step_trace[step] = da[k].settled();
                }
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
                    grad.swap(k, k + 1);
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
        total_proposals,
        divergences,
        swaps,
        swap_tries,
        cold_step: da[0].settled(),
        step_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{effective_sample_size, moments};
    use crate::fieldnet::{DensityModel, GaussianEnvelope};
    use crate::sampling::target::{FnTarget, ModelTarget};
    use crate::sampling::{mh_sample, MhOptions};

    fn normal_target_1d(
    ) -> FnTarget<f64, impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64], &mut [f64]) + Sync> {
        FnTarget::new(
            2,
            |p: &[f64]| -0.5 * (p[0] * p[0] + p[1] * p[1]),
            |p: &[f64], g: &mut [f64]| {
                g[0] = -p[0];
                g[1] = -p[1];
            },
        )
    }

    #[test]
    fn standard_normal_moments_and_energy_error() {
        let target = normal_target_1d();
        let dom = Domain::unbounded((-4.0f64, 4.0), 1);
        // unbounded in both coordinates: treat time as unbounded too by a
        // wide bounded range; the bijection handles it
        let opts = HmcOptions {
            chains: 8,
            ladder: vec![1.0],
            leapfrog_steps: 12,
            burn_in: 300,
            thin: 1,
            seed: 21,
            ..Default::default()
        };
        let (batch, report) = hmc_sample(20_000, &target, &dom, &opts, None).unwrap();
        let xs: Vec<f64> = batch.iter_points().map(|p| p[1]).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.1, "var {var}");
        // a handful of early-exploration divergences is fine; none should
        // persist once the step size settles
        assert!(report.diag.divergences < 50, "{}", report.diag.divergences);
        assert!(report.diag.accept_rate > 0.5);
    }

    #[test]
    fn ess_beats_random_walk_at_equal_kept_samples() {
        let env = GaussianEnvelope::<f64>::standard(1);
        let model = DensityModel::envelope_only(env, (0.0, 1.0)).unwrap();
        let target = ModelTarget::new(&model);
        let dom = Domain { t: (0.0, 1.0), space: vec![crate::sampling::Extent::Unbounded] };

        let n = 8_000;
        let groups = 4;
        let hopts = HmcOptions {
            chains: groups,
            ladder: vec![1.0],
            leapfrog_steps: 12,
            burn_in: 300,
            thin: 1,
            seed: 31,
            ..Default::default()
        };
        let (hb, _) = hmc_sample(n, &target, &dom, &hopts, None).unwrap();
        let mopts = MhOptions {
            chains: groups,
            ladder: vec![1.0],
            burn_in: 300,
            thin: 1,
            seed: 31,
            ..Default::default()
        };
        let (mb, _) = mh_sample(n, &target, &dom, &mopts, None).unwrap();

        // per-group contiguous blocks: sum ESS over groups
        let ess_of = |b: &CollocationBatch<f64>| -> f64 {
            let per = n / groups;
            (0..groups)
                .map(|g| {
                    let xs: Vec<f64> =
                        (g * per..(g + 1) * per).map(|i| b.point(i)[1]).collect();
                    effective_sample_size(&xs)
                })
                .sum()
        };
        let h_ess = ess_of(&hb);
        let m_ess = ess_of(&mb);
        assert!(
            h_ess >= 2.0 * m_ess,
            "hmc ess {h_ess} vs mh ess {m_ess}"
        );
    }

    #[test]
    fn step_size_stabilizes_during_burn_in() {
        let target = normal_target_1d();
        let dom = Domain::unbounded((-4.0f64, 4.0), 1);
        let opts = HmcOptions {
            chains: 4,
            ladder: vec![1.0],
            burn_in: 400,
            thin: 1,
            seed: 41,
            ..Default::default()
        };
        let (_b, report) = hmc_sample(200, &target, &dom, &opts, None).unwrap();
        let trace = &report.step_trace;
        let tail = &trace[trace.len() - 100..];
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(0.0f64, f64::max);
        assert!(
            (hi - lo) / hi < 0.1,
            "step size still moving: {lo}..{hi}"
        );
    }

    #[test]
    fn energy_is_conserved_to_first_order_at_tuned_step() {
        // mean |ΔH| ≤ 0.2 implied by acceptance ≥ ~0.82 on a Gaussian; check
        // directly via acceptance probability proxy: rerun and require high
        // acceptance at the settled step size
        let target = normal_target_1d();
        let dom = Domain::unbounded((-4.0f64, 4.0), 1);
        let opts = HmcOptions {
            chains: 4,
            ladder: vec![1.0],
            target_accept: 0.82,
            burn_in: 400,
            thin: 1,
            seed: 51,
            ..Default::default()
        };
        let (_b, report) = hmc_sample(4_000, &target, &dom, &opts, None).unwrap();
        // E[min(1, e^{ΔH})] ≥ e^{-E|ΔH|} by Jensen; acceptance ≥ 0.82
        // implies mean |ΔH| ≤ -ln(0.82) ≈ 0.2
        assert!(
            report.diag.accept_rate >= 0.8,
            "accept {}",
            report.diag.accept_rate
        );
    }

    #[test]
    fn hopeless_target_reports_divergences() {
        // non-finite gradients defeat the integrator at any step size
        let target = FnTarget::new(
            2,
            |p: &[f64]| -0.5 * p[1] * p[1],
            |_p: &[f64], g: &mut [f64]| g.fill(f64::INFINITY),
        );
        let dom = Domain::bounded((0.0f64, 1.0), &[(-1.0, 1.0)]);
        let opts = HmcOptions {
            chains: 2,
            ladder: vec![1.0],
            burn_in: 50,
            seed: 61,
            ..Default::default()
        };
        let err = hmc_sample(100, &target, &dom, &opts, None);
        assert!(matches!(err, Err(SamplerError::TooManyDivergences(_, _))));
    }
}
