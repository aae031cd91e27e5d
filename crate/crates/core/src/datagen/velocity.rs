//! The prescribed velocity field driving the particle simulation: a
//! divergence-carrying potential-flow part plus a divergence-free curl part,
//! modulated in amplitude over time, with a purely time-dependent vertical
//! component.

use crate::num::Real;

/// Scalar potential Φ(x, y) = -(x-2)(y-2)/2.
pub fn potential_phi<F: Real>(x: F, y: F) -> F {
    -F::of(0.5) * (x - F::of(2.0)) * (y - F::of(2.0))
}

/// ∇Φ, hand-derived.
pub fn grad_phi<F: Real>(x: F, y: F) -> (F, F) {
    (
        -F::of(0.5) * (y - F::of(2.0)),
        -F::of(0.5) * (x - F::of(2.0)),
    )
}

/// z-component of the vector potential,
/// a(x, y) = -(1/5)·exp(-(2x/3)² - (2y/3)²).
pub fn vector_potential_a<F: Real>(x: F, y: F) -> F {
    let u = -(F::of(2.0 / 3.0) * x) * (F::of(2.0 / 3.0) * x)
        - (F::of(2.0 / 3.0) * y) * (F::of(2.0 / 3.0) * y);
    -F::of(0.2) * u.exp()
}

/// ∇a, hand-derived.
pub fn grad_a<F: Real>(x: F, y: F) -> (F, F) {
    let u = -(F::of(2.0 / 3.0) * x) * (F::of(2.0 / 3.0) * x)
        - (F::of(2.0 / 3.0) * y) * (F::of(2.0 / 3.0) * y);
    let e = u.exp();
    (F::of(8.0 / 45.0) * x * e, F::of(8.0 / 45.0) * y * e)
}

/// Steady planar field -∇Φ + (∂a/∂y, -∂a/∂x).
pub fn velocity_xy_steady<F: Real>(x: F, y: F) -> (F, F) {
    let (px, py) = grad_phi(x, y);
    let (ax, ay) = grad_a(x, y);
    (-px + ay, -py - ax)
}

/// Amplitude modulation 1.5·|sin(2πt/3)| + 0.05.
pub fn modulation<F: Real>(t: F) -> F {
    F::of(1.5) * (F::of(2.0 / 3.0) * F::PI() * t).sin().abs() + F::of(0.05)
}

/// Time-modulated planar velocity.
pub fn velocity_xy<F: Real>(t: F, x: F, y: F) -> (F, F) {
    let (vx, vy) = velocity_xy_steady(x, y);
    let m = modulation(t);
    (vx * m, vy * m)
}

/// Vertical velocity 1.6·sin(4πt/3); depends on time only.
pub fn velocity_z<F: Real>(t: F) -> F {
    F::of(1.6) * (F::of(4.0 / 3.0) * F::PI() * t).sin()
}

/// Full velocity at a position of dimension 2 or 3.
pub fn velocity_at<F: Real>(t: F, pos: &[F]) -> Vec<F> {
    let (vx, vy) = velocity_xy(t, pos[0], pos[1]);
    match pos.len() {
        2 => vec![vx, vy],
        3 => vec![vx, vy, velocity_z(t)],
        d => panic!("velocity field defined for 2 or 3 dims, got {d}"),
    }
}
