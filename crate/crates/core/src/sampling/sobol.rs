//! Gray-code Sobol sequence over up to six dimensions, with the standard
//! direction numbers (first points after the origin: 0.5, then 0.75/0.25…).

use super::{Domain, SamplerError};
use crate::num::Real;
use crate::pde::{CollocationBatch, Provenance};

/// Primitive polynomial degrees, coefficient codes and seed values for
/// dimensions 2..=6 (dimension 1 is the van der Corput sequence).
const POLY: [(u32, u32, &[u32]); 5] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
];

const BITS: u32 = 32;

/// Direction numbers for one dimension, as fixed-point fractions in 2^32.
fn direction_numbers(dim: usize) -> [u32; BITS as usize] {
    let mut v = [0u32; BITS as usize];
    if dim == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k as u32);
        }
        return v;
    }
    let (s, a, m_init) = POLY[dim - 1];
    let s = s as usize;
    let mut m = vec![0u64; BITS as usize];
    for k in 0..s {
        m[k] = u64::from(m_init[k]);
    }
    for k in s..BITS as usize {
        // recurrence over the primitive polynomial coefficients
        let mut val = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            let coeff = (a >> (s - 1 - j)) & 1;
            if coeff == 1 {
                val ^= m[k - j] << j;
            }
        }
        m[k] = val;
    }
    for k in 0..BITS as usize {
        v[k] = (m[k] << (BITS - 1 - k as u32)) as u32;
    }
    v
}

/// Point `index` (1-based; the all-zero point at index 0 is skipped) of the
/// `dims`-dimensional sequence, in the unit cube.
fn sobol_point(dirs: &[[u32; BITS as usize]], index: u64) -> Vec<f64> {
    let gray = index ^ (index >> 1);
    dirs.iter()
        .map(|v| {
            let mut acc = 0u32;
            let mut g = gray;
            let mut k = 0;
            while g != 0 {
                if g & 1 == 1 {
                    acc ^= v[k];
                }
                g >>= 1;
                k += 1;
            }
            acc as f64 / (1u64 << BITS) as f64
        })
        .collect()
}

/// First `n` points of the sequence in the unit cube, starting after the
/// origin point.
pub fn sobol_raw(n: usize, dims: usize) -> Vec<Vec<f64>> {
    sobol_raw_from(n, dims, 1)
}

/// `n` points starting at 1-based `start` (for drawing fresh segments at
/// each resampling event).
pub fn sobol_raw_from(n: usize, dims: usize, start: u64) -> Vec<Vec<f64>> {
    assert!(dims >= 1 && dims <= 1 + POLY.len(), "supported dims: 1..=6");
    assert!(start >= 1);
    let dirs: Vec<[u32; BITS as usize]> = (0..dims).map(direction_numbers).collect();
    (0..n as u64).map(|i| sobol_point(&dirs, start + i)).collect()
}

/// First `n` Sobol points mapped affinely into the domain box.
pub fn sobol_uniform<F: Real>(
    n: usize,
    dom: &Domain<F>,
) -> Result<CollocationBatch<F>, SamplerError> {
    sobol_uniform_from(n, dom, 1)
}

/// Fresh Sobol segment starting at 1-based `start`, mapped into the box.
pub fn sobol_uniform_from<F: Real>(
    n: usize,
    dom: &Domain<F>,
    start: u64,
) -> Result<CollocationBatch<F>, SamplerError> {
    let bounds = dom.fully_bounded().ok_or_else(|| {
        let i = (0..dom.dim())
            .find(|&i| matches!(dom.extent(i), super::Extent::Unbounded))
            .unwrap_or(0);
        SamplerError::UnboundedDomain(i)
    })?;
    let raw = sobol_raw_from(n, dom.dim(), start);
    let mut batch = CollocationBatch::new(dom.dim());
    let mut point = vec![F::zero(); dom.dim()];
    for u in &raw {
        for (d, &(a, b)) in bounds.iter().enumerate() {
            point[d] = a + (b - a) * F::of(u[d]);
        }
        batch.push(&point, Provenance::Uniform);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_point_is_center() {
        for dims in 1..=6 {
            let p = sobol_raw(1, dims);
            assert!(p[0].iter().all(|&u| u == 0.5), "dims {dims}: {:?}", p[0]);
        }
    }

    #[test]
    fn one_dimensional_prefix() {
        let p = sobol_raw(3, 1);
        let xs: Vec<f64> = p.iter().map(|v| v[0]).collect();
        assert_eq!(xs, vec![0.5, 0.75, 0.25]);
    }

    #[test]
    fn two_dimensional_prefix() {
        let p = sobol_raw(3, 2);
        assert_eq!(p[0], vec![0.5, 0.5]);
        assert_eq!(p[1], vec![0.75, 0.25]);
        assert_eq!(p[2], vec![0.25, 0.75]);
    }

    #[test]
    fn all_points_inside_domain() {
        let dom = Domain::bounded((0.0f64, 3.0), &[(-2.0, 1.0), (5.0, 9.0)]);
        let b = sobol_uniform(257, &dom).unwrap();
        assert_eq!(b.len(), 257);
        for p in b.iter_points() {
            assert!(dom.contains(p), "{p:?}");
        }
    }

    #[test]
    fn unbounded_domain_is_rejected_with_guidance() {
        let dom = Domain::unbounded((0.0f64, 1.0), 2);
        let err = sobol_uniform(4, &dom).unwrap_err();
        assert!(err.to_string().contains("background"));
    }

    #[test]
    fn segments_continue_the_sequence() {
        let all = sobol_raw(10, 3);
        let tail = sobol_raw_from(4, 3, 7);
        assert_eq!(&all[6..10], &tail[..]);
    }

    #[test]
    fn low_discrepancy_beats_grid_noise() {
        // crude uniformity check: mean of 1024 points in each dim ~ 0.5
        let pts = sobol_raw(1024, 4);
        for d in 0..4 {
            let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / 1024.0;
            assert!((m - 0.5).abs() < 0.01, "dim {d}: {m}");
        }
    }
}
