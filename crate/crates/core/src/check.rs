//! Independent verification helpers shared by the test suites: finite
//! differences, moment estimates, histogram statistics, effective sample
//! size. These call back only into closures, never into the graph engine,
//! so they stay valid as oracles for it.

use crate::num::Real;
use crate::util::pairwise_mean;

/// Central finite difference of first order.
pub fn first_central<F: Real>(f: impl Fn(F) -> F, x: F, h: F) -> F {
    (f(x + h) - f(x - h)) / (F::of(2.0) * h)
}

/// Central finite difference of second order.
pub fn second_central<F: Real>(f: impl Fn(F) -> F, x: F, h: F) -> F {
    (f(x + h) - F::of(2.0) * f(x) + f(x - h)) / (h * h)
}

/// Gradient of a multivariate function by central differences, one
/// coordinate at a time.
pub fn grad_central<F: Real>(f: impl Fn(&[F]) -> F, x: &[F], h: F) -> Vec<F> {
    let mut out = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        p[i] = xi + h;
        let fp = f(&p);
        p[i] = xi - h;
        let fm = f(&p);
        p[i] = xi;
        out.push((fp - fm) / (F::of(2.0) * h));
    }
    out
}

/// `Σ_i ∂²f/∂x_i²` over `dims` by second-order central differences.
pub fn laplacian_central<F: Real>(
    f: impl Fn(&[F]) -> F,
    x: &[F],
    dims: &[usize],
    h: F,
) -> F {
    let f0 = f(x);
    let mut p = x.to_vec();
    let mut acc = F::zero();
    for &i in dims {
        let xi = x[i];
        p[i] = xi + h;
        let fp = f(&p);
        p[i] = xi - h;
        let fm = f(&p);
        p[i] = xi;
        acc += (fp - F::of(2.0) * f0 + fm) / (h * h);
    }
    acc
}

/// Mixed absolute/relative discrepancy: `|a-b| / max(1, |b|)`.
pub fn rel_err<F: Real>(a: F, b: F) -> F {
    (a - b).abs() / b.abs().max(F::one())
}

/// Sample mean and (biased) variance of scalar draws.
pub fn moments<F: Real>(xs: &[F]) -> (F, F) {
    let mean = pairwise_mean(xs);
    let sq: Vec<F> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_mean(&sq))
}

/// Pearson chi-square statistic of `counts` against uniform cell
/// probabilities. Degrees of freedom are `counts.len() - 1`.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper 1% quantile of the chi-square distribution by Wilson-Hilferty;
/// accurate to ~1e-3 relative for the dof used in the suites.
pub fn chi_square_crit_1pct(dof: usize) -> f64 {
    let k = dof as f64;
    let z = 2.326_347_874_040_841; // standard-normal 99% quantile
    let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
    k * t * t * t
}

/// Total-variation distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Effective sample size of one chain via the initial positive sequence of
/// autocovariance pairs (Geyer). Draws from several chains should be passed
/// per chain and the results summed.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = pairwise_mean(xs);
    let var: f64 =
        pairwise_mean(&xs.iter().map(|&x| (x - mean) * (x - mean)).collect::<Vec<_>>());
    if var <= 0.0 {
        return n as f64;
    }
    let acov = |lag: usize| -> f64 {
        let m = n - lag;
        let mut acc = 0.0;
        for i in 0..m {
            acc += (xs[i] - mean) * (xs[i + lag] - mean);
        }
        acc / n as f64
    };
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = acov(lag) + acov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_rho += pair / var;
        lag += 2;
    }
    n as f64 / (1.0 + 2.0 * sum_rho)
}

/// Empirical CDF sup-distance of draws against a reference CDF.
pub fn cdf_sup_error(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in draws.iter().enumerate() {
        let c = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        worst = worst.max((c - lo).abs()).max((c - hi).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_first_on_cubic() {
        let d = first_central(|x: f64| x * x * x, 2.0, 1e-5);
        assert!((d - 12.0).abs() < 1e-6);
    }

    #[test]
    fn fd_second_on_sin() {
        let d = second_central(|x: f64| x.sin(), 0.3, 1e-4);
        assert!((d + 0.3f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn chi_square_crit_sane() {
        // Reference values: 99% quantiles of chi-square.
        assert!((chi_square_crit_1pct(9) - 21.666).abs() < 0.05);
        assert!((chi_square_crit_1pct(49) - 74.919).abs() < 0.12);
    }

    #[test]
    fn ess_detects_iid() {
        let mut rng = crate::util::rng_from(3);
        let xs: Vec<f64> = (0..4000).map(|_| crate::util::draw_normal(&mut rng)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 2500.0, "iid ess {ess}");
    }

    #[test]
    fn ess_detects_correlation() {
        let mut rng = crate::util::rng_from(4);
        let mut xs = vec![0.0f64; 4000];
        for i in 1..xs.len() {
            let e: f64 = crate::util::draw_normal(&mut rng);
            xs[i] = 0.95 * xs[i - 1] + e;
        }
        let ess = effective_sample_size(&xs);
        assert!(ess < 400.0, "ar1 ess {ess}");
    }
}
