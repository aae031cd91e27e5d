//! Per-dimension scaled logistic map between unconstrained space and a
//! (possibly partially) bounded domain, with its log-Jacobian. Markov
//! chains run unconstrained and target `density(T(z)) · |J(z)|`.

use super::{Domain, Extent};
use crate::num::Real;

#[derive(Debug, Clone)]
pub struct Bijection<F> {
    /// `Some((lo, hi))` per bounded dimension, `None` for identity dims.
    dims: Vec<Option<(F, F)>>,
}

fn sigmoid<F: Real>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable log σ(z).
fn log_sigmoid<F: Real>(z: F) -> F {
    if z >= F::zero() {
        -(F::one() + (-z).exp()).ln()
    } else {
        z - (F::one() + z.exp()).ln()
    }
}

impl<F: Real> Bijection<F> {
    pub fn for_domain(dom: &Domain<F>) -> Self {
        let dims = (0..dom.dim())
            .map(|i| match dom.extent(i) {
                Extent::Bounded(a, b) => Some((a, b)),
                Extent::Unbounded => None,
            })
            .collect();
        Bijection { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Unconstrained → domain: `x = lo + (hi - lo)·σ(z)` per bounded dim.
    pub fn forward(&self, z: &[F], x: &mut [F]) {
        for (i, d) in self.dims.iter().enumerate() {
            x[i] = match *d {
                Some((lo, hi)) => lo + (hi - lo) * sigmoid(z[i]),
                None => z[i],
            };
        }
    }

    /// Domain → unconstrained (logit); interior points only.
    pub fn inverse(&self, x: &[F], z: &mut [F]) {
        for (i, d) in self.dims.iter().enumerate() {
            z[i] = match *d {
                Some((lo, hi)) => {
                    let eps = F::of(1e-9);
                    let u = ((x[i] - lo) / (hi - lo)).max(eps).min(F::one() - eps);
                    (u / (F::one() - u)).ln()
                }
                None => x[i],
            };
        }
    }

    /// log |det ∂x/∂z| at `z`.
    pub fn log_jacobian(&self, z: &[F]) -> F {
        let mut acc = F::zero();
        for (i, d) in self.dims.iter().enumerate() {
            if let Some((lo, hi)) = *d {
                // log[(hi-lo)·σ(z)·(1-σ(z))] = log(hi-lo) + logσ(z) + logσ(-z)
                acc += (hi - lo).ln() + log_sigmoid(z[i]) + log_sigmoid(-z[i]);
            }
        }
        acc
    }

    /// d/dz_i of the log-Jacobian: `1 - 2σ(z_i)` on bounded dims, 0 otherwise.
    pub fn dlog_jacobian(&self, z: &[F], out: &mut [F]) {
        for (i, d) in self.dims.iter().enumerate() {
            out[i] = match *d {
                Some(_) => F::one() - F::of(2.0) * sigmoid(z[i]),
                None => F::zero(),
            };
        }
    }

    /// dx_i/dz_i, the diagonal Jacobian itself.
    pub fn jacobian_diag(&self, z: &[F], out: &mut [F]) {
        for (i, d) in self.dims.iter().enumerate() {
            out[i] = match *d {
                Some((lo, hi)) => {
                    let s = sigmoid(z[i]);
                    (hi - lo) * s * (F::one() - s)
                }
                None => F::one(),
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Domain;

    #[test]
    fn zero_maps_to_midpoint() {
        let dom = Domain::bounded((0.0f64, 4.0), &[(-3.0, 1.0)]);
        let b = Bijection::for_domain(&dom);
        let mut x = [0.0; 2];
        b.forward(&[0.0, 0.0], &mut x);
        assert!((x[0] - 2.0).abs() < 1e-15);
        assert!((x[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_to_1e12() {
        let dom = Domain::bounded((0.0f64, 1.0), &[(-1.5, 1.5), (2.0, 3.0)]);
        let b = Bijection::for_domain(&dom);
        let mut z = [0.0; 3];
        let mut x = [0.0; 3];
        for &p in &[[0.2, -1.0, 2.5], [0.9, 1.2, 2.01], [0.5, 0.0, 2.99]] {
            b.inverse(&p, &mut z);
            b.forward(&z, &mut x);
            for d in 0..3 {
                assert!((x[d] - p[d]).abs() < 1e-12, "{:?} -> {:?}", p, x);
            }
        }
    }

    #[test]
    fn log_jacobian_matches_finite_differences() {
        let dom = Domain::bounded((0.0f64, 2.0), &[(-1.0, 3.0)]);
        let b = Bijection::for_domain(&dom);
        let z = [0.3, -0.7];
        let mut dj = [0.0; 2];
        b.dlog_jacobian(&z, &mut dj);
        for i in 0..2 {
            let mut zp = z;
            zp[i] += 1e-6;
            let mut zm = z;
            zm[i] -= 1e-6;
            let fd = (b.log_jacobian(&zp) - b.log_jacobian(&zm)) / 2e-6;
            assert!((dj[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn unbounded_dims_are_identity() {
        let dom = Domain::unbounded((0.0f64, 1.0), 1);
        let mut b = Bijection::for_domain(&dom);
        // time dim bounded, space unbounded
        let mut x = [0.0; 2];
        b.forward(&[0.0, 7.5], &mut x);
        assert_eq!(x[1], 7.5);
        let mut dj = [9.0; 2];
        b.dlog_jacobian(&[0.0, 7.5], &mut dj);
        assert_eq!(dj[1], 0.0);
        let _ = &mut b;
    }
}
