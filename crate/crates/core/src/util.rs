//! Deterministic reductions and seeded random-number plumbing shared across
//! the crate.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::num::Real;

/// Sum with a fixed pairwise reduction tree. The result depends only on the
/// order of `xs`, never on thread scheduling, and the error grows like
/// O(log n) instead of O(n).
pub fn pairwise_sum<F: Real>(xs: &[F]) -> F {
    if xs.len() <= 8 {
        let mut acc = F::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via [`pairwise_sum`]; empty slices return 0.
pub fn pairwise_mean<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    pairwise_sum(xs) / F::of(xs.len() as f64)
}

/// splitmix64 step; used to derive independent rng streams from one root
/// seed without any stream colliding with the root itself.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a stream label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = splitmix64(root ^ 0x5851_f42d_4c95_7f2d);
    for b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(*b));
    }
    h
}

/// Derive a child seed indexed by an integer (chain index, seed fan-out, ...).
pub fn derive_seed_indexed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(root, label) ^ splitmix64(index))
}

/// The rng used everywhere; ChaCha so streams are identical across platforms.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// One standard-normal draw via Box-Muller (two uniforms per call; the
/// second variate is discarded to keep the stream layout simple).
pub fn draw_normal<F: Real, R: Rng>(rng: &mut R) -> F {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    F::of((-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos())
}

/// Uniform draw in `[lo, hi)`.
pub fn draw_uniform<F: Real, R: Rng>(rng: &mut R, lo: F, hi: F) -> F {
    lo + (hi - lo) * F::of(rng.random::<f64>())
}

/// FNV-1a over bytes; stable content hash for run manifests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_ones() {
        let xs = vec![1.0f64; 1000];
        assert_eq!(pairwise_sum(&xs), 1000.0);
    }

    #[test]
    fn derived_seeds_differ_by_label_and_index() {
        let a = derive_seed(7, "proposals");
        let b = derive_seed(7, "swaps");
        let c = derive_seed_indexed(7, "proposals", 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "proposals"));
    }

    #[test]
    fn normal_draws_have_sane_moments() {
        let mut rng = rng_from(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| draw_normal(&mut rng)).collect();
        let mean = pairwise_mean(&xs);
        let var = pairwise_mean(&xs.iter().map(|x| (x - mean) * (x - mean)).collect::<Vec<_>>());
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
