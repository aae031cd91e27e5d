//! Scalar computation-graph engine.
//!
//! A [`Tape`] is a topologically ordered list of scalar operations over a
//! fixed set of input slots and external parameter banks. The same tape can
//! be evaluated repeatedly on different inputs and parameters through a
//! reusable [`TapeBuf`], in plain reals or in [`Dual`] numbers (forward
//! tangents).
//!
//! Three derivative mechanisms cover everything the residual losses need:
//!
//! * [`Tape::backward`] — a value-level reverse sweep giving exact first
//!   derivatives w.r.t. inputs and parameters;
//! * [`Tape::grad_graph`] — a graph-building reverse sweep whose outputs are
//!   new tape nodes, so derivative expressions can themselves be
//!   differentiated (used to put PDE residuals under the parameter
//!   gradient);
//! * forward-over-reverse: running forward and [`Tape::backward`] in
//!   [`Dual`] arithmetic with a tangent seeded on one input, which yields
//!   second derivatives like Laplacians, one sweep per spatial dimension.

mod dual;
mod tape;

pub use dual::Dual;
pub use tape::{AdError, AdScalar, Bias, Pack, Tape, TapeBuf, Var};

use crate::num::Real;

/// First derivatives of a scalar graph w.r.t. every input slot.
///
/// `build` constructs the graph once; the returned vector is
/// `(∂f/∂x_0, …, ∂f/∂x_{n-1})` at `point`, exact to rounding.
pub fn grad_input<F: Real>(
    build: impl FnOnce(&mut Tape<F>, &[Var]) -> Var,
    banks: &[&[F]],
    point: &[F],
) -> Result<Vec<F>, AdError> {
    let mut tape = Tape::new(point.len());
    let inputs = tape.input_vars();
    let y = build(&mut tape, &inputs);
    let mut buf = TapeBuf::new();
    tape.forward(&mut buf, banks, point);
    tape.check_finite(&buf)?;
    tape.backward(&mut buf, banks, &[(y, F::one())], None);
    Ok(inputs.iter().map(|&v| buf.adjoint(v)).collect())
}

/// Sum of second derivatives `Σ_i ∂²f/∂x_i²` over the index set `dims`,
/// computed by forward-mode tangents propagated through the reverse pass
/// (one tangent sweep per requested dimension).
///
/// `dims` indexes input slots; slot 0 is the time coordinate by convention
/// and is rejected (the Laplacian is spatial only).
pub fn laplacian_input<F: Real>(
    build: impl FnOnce(&mut Tape<F>, &[Var]) -> Var,
    banks: &[&[F]],
    point: &[F],
    dims: &[usize],
) -> Result<F, AdError> {
    if dims.contains(&0) {
        return Err(AdError::TimeInLaplacian);
    }
    let mut tape = Tape::new(point.len());
    let inputs = tape.input_vars();
    let y = build(&mut tape, &inputs);
    let mut buf: TapeBuf<Dual<F>> = TapeBuf::new();
    let mut acc = F::zero();
    for &d in dims {
        assert!(d < point.len(), "laplacian dim out of range");
        let seeded: Vec<Dual<F>> = point
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == d {
                    Dual::with_tangent(x, F::one())
                } else {
                    Dual::constant(x)
                }
            })
            .collect();
        tape.forward(&mut buf, banks, &seeded);
        tape.check_finite(&buf)?;
        tape.backward(&mut buf, banks, &[(y, Dual::constant(F::one()))], None);
        acc += buf.adjoint(inputs[d]).dt;
    }
    Ok(acc)
}

/// Exact gradient of a scalar graph w.r.t. every entry of every parameter
/// bank. Parameters not on any path to the output get an exact 0.
pub fn grad_params<F: Real>(
    build: impl FnOnce(&mut Tape<F>, &[Var]) -> Var,
    banks: &[&[F]],
    point: &[F],
) -> Result<Vec<Vec<F>>, AdError> {
    let mut tape = Tape::new(point.len());
    let inputs = tape.input_vars();
    let y = build(&mut tape, &inputs);
    let mut buf = TapeBuf::new();
    tape.forward(&mut buf, banks, point);
    tape.check_finite(&buf)?;
    let mut grads: Vec<Vec<F>> = banks.iter().map(|b| vec![F::zero(); b.len()]).collect();
    tape.backward(&mut buf, banks, &[(y, F::one())], Some(&mut grads));
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check;

    #[test]
    fn derivative_of_constant_is_zero_and_identity_is_one() {
        let g = grad_input(
            |t: &mut Tape<f64>, ins| {
                let c = t.constant(3.5);
                let _ = ins[0];
                c
            },
            &[],
            &[1.0],
        )
        .unwrap();
        assert_eq!(g, vec![0.0]);
        let g = grad_input(|_t, ins| ins[0], &[], &[1.0]).unwrap();
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn square_at_three() {
        // f(t, x) = x^2 at x = 3 -> df/dx = 6
        let g = grad_input(
            |t: &mut Tape<f64>, ins| t.sqr(ins[1]),
            &[],
            &[0.0, 3.0],
        )
        .unwrap();
        assert_eq!(g, vec![0.0, 6.0]);
    }

    #[test]
    fn travelling_wave_chain_rule() {
        // f(t, x) = sin(x - t) at (0, 0) -> (-1, 1)
        let g = grad_input(
            |t: &mut Tape<f64>, ins| {
                let d = t.sub(ins[1], ins[0]);
                t.sin(d)
            },
            &[],
            &[0.0, 0.0],
        )
        .unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_squared_norm() {
        // f = ||x||^2 in 3 spatial dims (slot 0 is time) -> 6
        let lap = laplacian_input(
            |t: &mut Tape<f64>, ins| {
                let s1 = t.sqr(ins[1]);
                let s2 = t.sqr(ins[2]);
                let s3 = t.sqr(ins[3]);
                let a = t.add(s1, s2);
                t.add(a, s3)
            },
            &[],
            &[0.0, 0.4, -1.2, 2.0],
            &[1, 2, 3],
        )
        .unwrap();
        assert!((lap - 6.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_sine() {
        let build = |t: &mut Tape<f64>, ins: &[Var]| t.sin(ins[1]);
        let at0 = laplacian_input(build, &[], &[0.0, 0.0], &[1]).unwrap();
        assert!(at0.abs() < 1e-15);
        let at_half_pi =
            laplacian_input(build, &[], &[0.0, core::f64::consts::FRAC_PI_2], &[1]).unwrap();
        assert!((at_half_pi + 1.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_rejects_time_slot() {
        let err = laplacian_input(
            |t: &mut Tape<f64>, ins| t.sqr(ins[0]),
            &[],
            &[0.0, 1.0],
            &[0, 1],
        )
        .unwrap_err();
        assert!(matches!(err, AdError::TimeInLaplacian));
    }

    #[test]
    fn param_gradient_of_theta_squared() {
        // loss = theta^2, theta = 2 -> gradient 4
        let g = grad_params(
            |t: &mut Tape<f64>, _ins| {
                let p = t.param(0, 0);
                t.sqr(p)
            },
            &[&[2.0]],
            &[0.0],
        )
        .unwrap();
        assert_eq!(g[0], vec![4.0]);
    }

    #[test]
    fn param_gradient_of_linear_fit() {
        // loss = (w*x - y)^2 over {(1, 1)} with w = 0 -> dloss/dw = -2
        let g = grad_params(
            |t: &mut Tape<f64>, _| {
                let w = t.param(0, 0);
                let x = t.constant(1.0);
                let y = t.constant(1.0);
                let pred = t.mul(w, x);
                let e = t.sub(pred, y);
                t.sqr(e)
            },
            &[&[0.0]],
            &[0.0],
        )
        .unwrap();
        assert_eq!(g[0], vec![-2.0]);
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let g = grad_params(
            |t: &mut Tape<f64>, _| {
                let p = t.param(0, 0);
                t.sqr(p)
            },
            &[&[2.0, 7.0]],
            &[0.0],
        )
        .unwrap();
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn nonfinite_forward_is_flagged_with_op() {
        let err = grad_params(
            |t: &mut Tape<f64>, _| {
                let z = t.constant(0.0);
                t.ln(z)
            },
            &[&[]],
            &[0.0],
        )
        .unwrap_err();
        match err {
            AdError::NonFinite { op, .. } => assert_eq!(op, "ln"),
            other => panic!("unexpected {other:?}"),
        }
    }

    // grad_graph composed with the value backward must agree with plain
    // finite differences of the first derivative (a second derivative).
    #[test]
    fn grad_graph_second_derivative_matches_fd() {
        let f = |x: f64| (2.0 * x).sin() * x;
        let second = |point: f64| {
            let mut tape = Tape::<f64>::new(1);
            let ins = tape.input_vars();
            let s = tape.sin_scaled(2.0, ins[0]);
            let y = tape.mul(s, ins[0]);
            let g = tape.grad_graph(y, &ins);
            let mut buf = TapeBuf::new();
            tape.forward(&mut buf, &[], &[point]);
            tape.backward(&mut buf, &[], &[(g[0], 1.0)], None);
            buf.adjoint(ins[0])
        };
        for &x in &[0.3, -1.1, 2.4] {
            let fd = check::second_central(f, x, 1e-4);
            let got = second(x);
            assert!((got - fd).abs() < 1e-5, "x={x}: {got} vs {fd}");
        }
    }

    // Gradient linearity holds bitwise when the combination scalars are
    // powers of two (scaling is then exact in floating point).
    #[test]
    fn gradient_linearity_exact_for_pow2_weights() {
        let combo = |t: &mut Tape<f64>, ins: &[Var]| {
            let f = {
                let s = t.sin(ins[0]);
                t.mul(s, ins[1])
            };
            let g = {
                let e = t.exp(ins[1]);
                t.mul(e, ins[0])
            };
            let af = t.mul_const(2.0, f);
            let bg = t.mul_const(0.5, g);
            t.add(af, bg)
        };
        let p = [0.7, -0.3];
        let grad_combo = grad_input(combo, &[], &p).unwrap();

        let grad_f = grad_input(
            |t: &mut Tape<f64>, ins| {
                let s = t.sin(ins[0]);
                t.mul(s, ins[1])
            },
            &[],
            &p,
        )
        .unwrap();
        let grad_g = grad_input(
            |t: &mut Tape<f64>, ins| {
                let e = t.exp(ins[1]);
                t.mul(e, ins[0])
            },
            &[],
            &p,
        )
        .unwrap();
        for i in 0..2 {
            assert_eq!(grad_combo[i], 2.0 * grad_f[i] + 0.5 * grad_g[i]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut tape = Tape::<f64>::new(2);
        let ins = tape.input_vars();
        let s = tape.sin_scaled(3.0, ins[0]);
        let e = tape.exp(ins[1]);
        let y = tape.mul(s, e);
        let mut buf = TapeBuf::new();
        tape.forward(&mut buf, &[], &[0.3, 0.4]);
        let a = buf.value(y);
        tape.forward(&mut buf, &[], &[0.3, 0.4]);
        assert_eq!(a.to_bits(), buf.value(y).to_bits());
    }

    #[test]
    fn works_in_f32_too() {
        let g = grad_input(
            |t: &mut Tape<f32>, ins| t.sqr(ins[0]),
            &[],
            &[3.0f32],
        )
        .unwrap();
        assert_eq!(g, vec![6.0f32]);
    }
}
