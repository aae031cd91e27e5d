//! First-order dual numbers: the forward-mode tangent carrier.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::num::Real;

/// Value plus tangent. Running a tape in `Dual` arithmetic with the tangent
/// seeded on one input propagates a directional derivative through both the
/// forward and the reverse sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual<F> {
    pub re: F,
    pub dt: F,
}

impl<F: Real> Dual<F> {
    pub fn constant(re: F) -> Self {
        Dual { re, dt: F::zero() }
    }

    pub fn with_tangent(re: F, dt: F) -> Self {
        Dual { re, dt }
    }
}

impl<F: Real> Add for Dual<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, dt: self.dt + o.dt }
    }
}

impl<F: Real> Sub for Dual<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, dt: self.dt - o.dt }
    }
}

impl<F: Real> Mul for Dual<F> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual {
            re: self.re * o.re,
            dt: self.dt * o.re + self.re * o.dt,
        }
    }
}

impl<F: Real> Div for Dual<F> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = F::one() / o.re;
        let re = self.re * inv;
        Dual {
            re,
            dt: (self.dt - re * o.dt) * inv,
        }
    }
}

impl<F: Real> Neg for Dual<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { re: -self.re, dt: -self.dt }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::AdScalar;

    #[test]
    fn product_rule() {
        let x = Dual::with_tangent(3.0f64, 1.0);
        let y = x * x;
        assert_eq!(y.re, 9.0);
        assert_eq!(y.dt, 6.0);
    }

    #[test]
    fn chain_through_sin_and_exp() {
        let x = Dual::with_tangent(0.7f64, 1.0);
        let y = x.sin().exp();
        let expect = 0.7f64.sin().exp() * 0.7f64.cos();
        assert!((y.dt - expect).abs() < 1e-15);
    }

    #[test]
    fn division_quotient_rule() {
        let x = Dual::with_tangent(2.0f64, 1.0);
        let c = Dual::constant(3.0);
        let y = c / x;
        assert!((y.dt + 3.0 / 4.0).abs() < 1e-15);
    }
}
