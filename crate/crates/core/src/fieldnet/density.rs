//! The Gaussian envelope, the non-negative bounded density head, and the
//! velocity field network.

use rand::Rng;

use super::{init_params, FieldError, FieldNet, MlpConfig, ParamVector};
use crate::autodiff::{Tape, TapeBuf, Var};
use crate::linalg::{sample_mean_cov, Mat};
use crate::num::Real;
use crate::util;

/// Normalized Gaussian factor that multiplies the network head so the
/// predicted density integrates to a finite total. Σ is the inflated
/// covariance `Σ̄ + c·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEnvelope<F> {
    pub mu: Vec<F>,
    pub sigma: Mat<F>,
    pub c: F,
    chol: Mat<F>,
    inv_chol: Mat<F>,
    log_norm: F,
}

impl<F: Real> GaussianEnvelope<F> {
    /// Build from a base covariance; adds `c·I` and requires the result to
    /// be positive definite.
    pub fn new(mu: Vec<F>, sigma_bar: Mat<F>, c: F) -> Result<Self, FieldError> {
        assert_eq!(mu.len(), sigma_bar.n);
        let mut sigma = sigma_bar;
        sigma.add_scaled_identity(c);
        let chol = sigma.cholesky().map_err(|_| FieldError::SingularCovariance)?;
        let inv_chol = chol.lower_triangular_inverse();
        let d = mu.len();
        let mut log_det_half = F::zero();
        for i in 0..d {
            log_det_half += chol[(i, i)].ln();
        }
        let log_norm =
            -F::of(d as f64 / 2.0) * F::of(core::f64::consts::TAU).ln() - log_det_half;
        Ok(GaussianEnvelope { mu, sigma, c, chol, inv_chol, log_norm })
    }

    /// Isotropic unit Gaussian at the origin; the envelope used by sampler
    /// oracle tests.
    pub fn standard(dim: usize) -> Self {
        Self::new(vec![F::zero(); dim], Mat::identity(dim), F::zero()).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn log_pdf(&self, x: &[F]) -> F {
        debug_assert_eq!(x.len(), self.dim());
        let d = self.dim();
        let mut q = F::zero();
        for i in 0..d {
            let mut y = F::zero();
            for j in 0..d {
                y += self.inv_chol[(i, j)] * (x[j] - self.mu[j]);
            }
            q += y * y;
        }
        self.log_norm - F::of(0.5) * q
    }

    pub fn pdf(&self, x: &[F]) -> F {
        self.log_pdf(x).exp()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<F> {
        let d = self.dim();
        let z: Vec<F> = (0..d).map(|_| util::draw_normal(rng)).collect();
        (0..d)
            .map(|i| {
                let mut acc = self.mu[i];
                for j in 0..=i {
                    acc += self.chol[(i, j)] * z[j];
                }
                acc
            })
            .collect()
    }

    /// Push the envelope pdf onto a tape over the spatial input nodes.
    pub fn emit(&self, tape: &mut Tape<F>, x: &[Var]) -> Var {
        assert_eq!(x.len(), self.dim());
        let d = self.dim();
        let diffs: Vec<Var> =
            x.iter().zip(&self.mu).map(|(&v, &m)| tape.add_const(-m, v)).collect();
        let mut sq = Vec::with_capacity(d);
        for i in 0..d {
            let row: Vec<F> = (0..d).map(|j| self.inv_chol[(i, j)]).collect();
            let y = tape.lin_local(&row, None, &diffs);
            sq.push(tape.sqr(y));
        }
        let q = if d == 1 {
            sq[0]
        } else {
            tape.lin_local(&vec![F::one(); d], None, &sq)
        };
        let h = tape.mul_const(-F::of(0.5), q);
        let e = tape.add_const(self.log_norm, h);
        tape.exp(e)
    }

    /// Plain evaluation mirroring [`GaussianEnvelope::emit`] bit for bit.
    pub fn forward(&self, x: &[F]) -> F {
        let d = self.dim();
        let diffs: Vec<F> = x.iter().zip(&self.mu).map(|(&v, &m)| v + (-m)).collect();
        let mut q = F::zero();
        let mut sq = Vec::with_capacity(d);
        for i in 0..d {
            let mut y = F::zero();
            for j in 0..d {
                y += self.inv_chol[(i, j)] * diffs[j];
            }
            sq.push(y * y);
        }
        if d == 1 {
            q = sq[0];
        } else {
            for &s in &sq {
                q += s;
            }
        }
        (q * (-F::of(0.5)) + self.log_norm).exp()
    }
}

/// Maximum-likelihood envelope from sensor locations: sample mean and
/// unbiased sample covariance, inflated by `c·I`.
pub fn fit_envelope<F: Real>(
    locations: &[Vec<F>],
    c: F,
) -> Result<GaussianEnvelope<F>, FieldError> {
    if locations.len() < 2 {
        return Err(FieldError::TooFewSensors);
    }
    let (mu, cov) = sample_mean_cov(locations);
    GaussianEnvelope::new(mu, cov, c)
}

/// Density field: a scalar network body squashed through a squared, bounded
/// activation and multiplied by the Gaussian envelope, so that
/// `0 ≤ ρ(t,x) ≤ c_max · envelope(x)` and the total mass is finite.
///
/// The bounded activation is `g(y) = c_max·tanh(y/c_max)`: smooth, zero at
/// zero, asymptoting to `c_max`, and close to the identity for `y ≪ c_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel<F: Real> {
    pub net: FieldNet,
    pub params: ParamVector<F>,
    pub envelope: GaussianEnvelope<F>,
    pub c_max: F,
    /// Output units per normalized unit: the head works in normalized
    /// units (so the body trains at O(1) scale) and predictions are scaled
    /// back to data units. The bound becomes
    /// `rho <= output_scale · c_max · envelope`.
    pub output_scale: F,
    /// Test hook: force the head to 1 so the density equals the envelope.
    pub unit_head: bool,
}

impl<F: Real> DensityModel<F> {
    pub fn init(
        cfg: MlpConfig,
        rescale: Vec<(f64, f64)>,
        envelope: GaussianEnvelope<F>,
        c_max: F,
    ) -> Result<Self, FieldError> {
        if cfg.output_dim != 1 {
            return Err(FieldError::InvalidConfig("density body must have 1 output".into()));
        }
        if cfg.input_dim != envelope.dim() + 1 {
            return Err(FieldError::InvalidConfig(format!(
                "density body input_dim {} != 1 + envelope dim {}",
                cfg.input_dim,
                envelope.dim()
            )));
        }
        let params = init_params(&cfg)?;
        let net = FieldNet::new(cfg, rescale)?;
        Ok(DensityModel {
            net,
            params,
            envelope,
            c_max,
            output_scale: F::one(),
            unit_head: false,
        })
    }

    /// Envelope-only density (head forced to one); used as a rigged target
    /// with known statistics.
    pub fn envelope_only(
        envelope: GaussianEnvelope<F>,
        t_range: (f64, f64),
    ) -> Result<Self, FieldError> {
        let d = envelope.dim();
        let cfg = MlpConfig {
            input_dim: d + 1,
            output_dim: 1,
            hidden_layers: 1,
            hidden_units: 1,
            activation: super::ActivationKind::Tanh,
            omega0: 1.0,
            seed: 0,
        };
        let mut rescale = vec![(1.0, 0.0); d + 1];
        rescale[0] = unit_map(t_range);
        let mut m = Self::init(cfg, rescale, envelope, F::of(1e3))?;
        m.unit_head = true;
        Ok(m)
        // output_scale stays 1: rigged targets are exactly the envelope
    }

    pub fn spatial_dim(&self) -> usize {
        self.envelope.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.cfg.input_dim
    }

    /// Push `ρ(t, x)` onto the tape; parameters read from `bank`.
    pub fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Var {
        assert_eq!(inputs.len(), self.input_dim());
        let env = self.envelope.emit(tape, &inputs[1..]);
        if self.unit_head {
            return self.emit_scaled(tape, env);
        }
        let body = self.net.emit(tape, bank, inputs);
        let y = tape.sqr(body[0]);
        let s = tape.mul_const(F::one() / self.c_max, y);
        let t = tape.tanh(s);
        let g = tape.mul_const(self.c_max, t);
        let rho = tape.mul(env, g);
        self.emit_scaled(tape, rho)
    }

    fn emit_scaled(&self, tape: &mut Tape<F>, rho: Var) -> Var {
        if self.output_scale == F::one() {
            rho
        } else {
            tape.mul_const(self.output_scale, rho)
        }
    }

    /// Plain forward, arithmetic-identical to the emitted graph.
    pub fn forward(&self, point: &[F]) -> F {
        let env = self.envelope.forward(&point[1..]);
        let raw = if self.unit_head {
            env
        } else {
            let body = self.net.forward(&self.params.data, point);
            let y = body[0] * body[0];
            let g = (y * (F::one() / self.c_max)).tanh() * self.c_max;
            env * g
        };
        if self.output_scale == F::one() {
            raw
        } else {
            raw * self.output_scale
        }
    }

    /// Checked density evaluation.
    pub fn density_forward(&self, point: &[F]) -> Result<F, FieldError> {
        let v = self.forward(point);
        if !v.is_finite() {
            return Err(FieldError::NonFiniteOutput(
                point.iter().map(|x| x.as_f64()).collect(),
            ));
        }
        Ok(v)
    }

    /// Floored log density `ln(ρ + floor)`; finite everywhere.
    pub fn log_density_floored(&self, point: &[F], floor: F) -> F {
        (self.forward(point) + floor).ln()
    }

    /// Gradient of the floored log density w.r.t. the spacetime input, for
    /// gradient-based samplers. One tape forward+backward per call; hot
    /// loops should compile a [`DensityGraph`] instead.
    pub fn grad_log_density(&self, point: &[F], floor: F) -> Vec<F> {
        let g = DensityGraph::compile(self, floor);
        let mut buf = TapeBuf::new();
        let mut out = vec![F::zero(); point.len()];
        g.grad_log_density(self, point, &mut buf, &mut out);
        out
    }
}

/// Compiled density graph reused across many evaluations (MCMC chains).
#[derive(Debug, Clone)]
pub struct DensityGraph<F: Real> {
    tape: Tape<F>,
    inputs: Vec<Var>,
    pub rho: Var,
    pub log_rho: Var,
}

impl<F: Real> DensityGraph<F> {
    pub fn compile(model: &DensityModel<F>, floor: F) -> Self {
        let mut tape = Tape::new(model.input_dim());
        let inputs = tape.input_vars();
        let rho = model.emit(&mut tape, 0, &inputs);
        let shifted = tape.add_const(floor, rho);
        let log_rho = tape.ln(shifted);
        DensityGraph { tape, inputs, rho, log_rho }
    }

    pub fn log_density(&self, model: &DensityModel<F>, point: &[F], buf: &mut TapeBuf<F>) -> F {
        self.tape.forward(buf, &[&model.params.data], point);
        buf.value(self.log_rho)
    }

    pub fn grad_log_density(
        &self,
        model: &DensityModel<F>,
        point: &[F],
        buf: &mut TapeBuf<F>,
        out: &mut [F],
    ) -> F {
        self.tape.forward(buf, &[&model.params.data], point);
        self.tape
            .backward(buf, &[&model.params.data], &[(self.log_rho, F::one())], None);
        for (o, &v) in out.iter_mut().zip(&self.inputs) {
            *o = buf.adjoint(v);
        }
        buf.value(self.log_rho)
    }
}

/// Vector field network `v(t, x) ∈ R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel<F: Real> {
    pub net: FieldNet,
    pub params: ParamVector<F>,
}

impl<F: Real> VelocityModel<F> {
    pub fn init(cfg: MlpConfig, rescale: Vec<(f64, f64)>) -> Result<Self, FieldError> {
        if cfg.output_dim != cfg.input_dim - 1 {
            return Err(FieldError::InvalidConfig(
                "velocity output dim must equal the spatial dimension".into(),
            ));
        }
        let params = init_params(&cfg)?;
        let net = FieldNet::new(cfg, rescale)?;
        Ok(VelocityModel { net, params })
    }

    pub fn spatial_dim(&self) -> usize {
        self.net.cfg.output_dim
    }

    pub fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Vec<Var> {
        self.net.emit(tape, bank, inputs)
    }

    pub fn forward(&self, point: &[F]) -> Vec<F> {
        self.net.forward(&self.params.data, point)
    }
}

fn unit_map(range: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = range;
    if hi > lo {
        let w = hi - lo;
        (2.0 / w, -(hi + lo) / w)
    } else {
        (1.0, 0.0)
    }
}
