//! Field networks: sine/tanh multilayer perceptrons, their seeded
//! initializations, and the non-negative bounded density head.

mod checkpoint;
mod density;

pub use checkpoint::{load_models, save_models, CheckpointError, ModelSet};
pub use density::{fit_envelope, DensityGraph, DensityModel, GaussianEnvelope, VelocityModel};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Bias, Tape, Var};
use crate::num::Real;
use crate::util;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("sensor covariance is singular; fit the envelope with a positive inflation c")]
    SingularCovariance,
    #[error("need at least two distinct sensor locations to fit an envelope")]
    TooFewSensors,
    #[error("non-finite network output at {0:?}")]
    NonFiniteOutput(Vec<f64>),
    #[error("parameter vector has {got} entries, layout wants {want}")]
    LayoutMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Sine,
    Tanh,
}

/// Fully-connected network shape. `omega0` is the sine frequency scale and
/// is ignored for tanh activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub activation: ActivationKind,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    pub seed: u64,
}

fn default_omega0() -> f64 {
    1.0
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(FieldError::InvalidConfig("zero input or output dim".into()));
        }
        if self.hidden_layers < 1 {
            return Err(FieldError::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.hidden_units < 1 {
            return Err(FieldError::InvalidConfig("hidden_units must be >= 1".into()));
        }
        if self.activation == ActivationKind::Sine && !(self.omega0 > 0.0) {
            return Err(FieldError::InvalidConfig("omega0 must be > 0 for sine".into()));
        }
        Ok(())
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push(LayerShape { fan_in, fan_out: self.hidden_units });
            fan_in = self.hidden_units;
        }
        shapes.push(LayerShape { fan_in, fan_out: self.output_dim });
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|s| (s.fan_in + 1) * s.fan_out).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Flat parameter storage plus the layer-structure descriptor needed to
/// interpret it. Layout per layer: weights row-major `[fan_out × fan_in]`,
/// then biases `[fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<F> {
    pub layout: Vec<LayerShape>,
    pub activation: ActivationKind,
    pub data: Vec<F>,
}

impl<F: Real> ParamVector<F> {
    pub fn zeros(layout: Vec<LayerShape>, activation: ActivationKind) -> Self {
        let n = layout.iter().map(|s| (s.fan_in + 1) * s.fan_out).sum();
        ParamVector { layout, activation, data: vec![F::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flatten(&self) -> Vec<F> {
        self.data.clone()
    }

    pub fn unflatten(
        layout: Vec<LayerShape>,
        activation: ActivationKind,
        flat: Vec<F>,
    ) -> Result<Self, FieldError> {
        let want: usize = layout.iter().map(|s| (s.fan_in + 1) * s.fan_out).sum();
        if flat.len() != want {
            return Err(FieldError::LayoutMismatch { got: flat.len(), want });
        }
        Ok(ParamVector { layout, activation, data: flat })
    }
}

/// Initialize per the sine-network scheme: first layer weights uniform in
/// `±1/fan_in`, deeper layers `±sqrt(6/fan_in)/omega0`, biases uniform in
/// `±1/sqrt(fan_in)`. Deterministic in the seed.
pub fn init_siren<F: Real>(cfg: &MlpConfig) -> Result<ParamVector<F>, FieldError> {
    cfg.validate()?;
    if cfg.activation != ActivationKind::Sine {
        return Err(FieldError::InvalidConfig("init_siren wants sine activation".into()));
    }
    let mut rng = util::rng_from(util::derive_seed(cfg.seed, "siren-init"));
    let mut pv = ParamVector::zeros(cfg.layer_shapes(), cfg.activation);
    let mut off = 0;
    for (li, shape) in pv.layout.clone().iter().enumerate() {
        let w_bound = if li == 0 {
            1.0 / shape.fan_in as f64
        } else {
            (6.0 / shape.fan_in as f64).sqrt() / cfg.omega0
        };
        let b_bound = 1.0 / (shape.fan_in as f64).sqrt();
        for w in &mut pv.data[off..off + shape.fan_in * shape.fan_out] {
            *w = F::of(rng.random_range(-w_bound..w_bound));
        }
        off += shape.fan_in * shape.fan_out;
        for b in &mut pv.data[off..off + shape.fan_out] {
            *b = F::of(rng.random_range(-b_bound..b_bound));
        }
        off += shape.fan_out;
    }
    Ok(pv)
}

/// Glorot-uniform weights, zero biases; for tanh networks.
pub fn init_tanh<F: Real>(cfg: &MlpConfig) -> Result<ParamVector<F>, FieldError> {
    cfg.validate()?;
    if cfg.activation != ActivationKind::Tanh {
        return Err(FieldError::InvalidConfig("init_tanh wants tanh activation".into()));
    }
    let mut rng = util::rng_from(util::derive_seed(cfg.seed, "tanh-init"));
    let mut pv = ParamVector::zeros(cfg.layer_shapes(), cfg.activation);
    let mut off = 0;
    for shape in pv.layout.clone() {
        let bound = (6.0 / (shape.fan_in + shape.fan_out) as f64).sqrt();
        for w in &mut pv.data[off..off + shape.fan_in * shape.fan_out] {
            *w = F::of(rng.random_range(-bound..bound));
        }
        off += shape.fan_in * shape.fan_out + shape.fan_out;
    }
    Ok(pv)
}

pub fn init_params<F: Real>(cfg: &MlpConfig) -> Result<ParamVector<F>, FieldError> {
    match cfg.activation {
        ActivationKind::Sine => init_siren(cfg),
        ActivationKind::Tanh => init_tanh(cfg),
    }
}

/// Network structure plus the affine input normalization. The rescale maps
/// each raw coordinate through `s·x + o` before the first layer; physics is
/// always evaluated in raw coordinates by chaining this map into the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNet {
    pub cfg: MlpConfig,
    /// Per input dimension `(scale, offset)`.
    pub rescale: Vec<(f64, f64)>,
}

impl FieldNet {
    pub fn new(cfg: MlpConfig, rescale: Vec<(f64, f64)>) -> Result<Self, FieldError> {
        cfg.validate()?;
        if rescale.len() != cfg.input_dim {
            return Err(FieldError::InvalidConfig(format!(
                "rescale has {} dims, input_dim is {}",
                rescale.len(),
                cfg.input_dim
            )));
        }
        Ok(FieldNet { cfg, rescale })
    }

    /// Identity input normalization.
    pub fn raw(cfg: MlpConfig) -> Result<Self, FieldError> {
        let d = cfg.input_dim;
        Self::new(cfg, vec![(1.0, 0.0); d])
    }

    /// Map each bounded coordinate range onto [-1, 1].
    pub fn unit_rescale(ranges: &[(f64, f64)]) -> Vec<(f64, f64)> {
        ranges
            .iter()
            .map(|&(lo, hi)| {
                let w = hi - lo;
                (2.0 / w, -(hi + lo) / w)
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.cfg.n_params()
    }

    /// Push the network onto a tape, reading parameters from `bank`.
    /// Returns the output nodes.
    pub fn emit<F: Real>(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Vec<Var> {
        assert_eq!(inputs.len(), self.cfg.input_dim);
        let mut cur: Vec<Var> = inputs
            .iter()
            .zip(&self.rescale)
            .map(|(&v, &(s, o))| {
                let m = tape.mul_const(F::of(s), v);
                tape.add_const(F::of(o), m)
            })
            .collect();
        let shapes = self.cfg.layer_shapes();
        let last = shapes.len() - 1;
        let mut off = 0usize;
        for (li, shape) in shapes.iter().enumerate() {
            let w_off = off;
            let b_off = off + shape.fan_in * shape.fan_out;
            let mut next = Vec::with_capacity(shape.fan_out);
            for o in 0..shape.fan_out {
                let z = tape.lin_param(
                    bank,
                    w_off + o * shape.fan_in,
                    1,
                    Bias::Param { bank: bank as u8, idx: (b_off + o) as u32 },
                    &cur,
                );
                let a = if li == last {
                    z
                } else {
                    match self.cfg.activation {
                        ActivationKind::Sine => tape.sin_scaled(F::of(self.cfg.omega0), z),
                        ActivationKind::Tanh => tape.tanh(z),
                    }
                };
                next.push(a);
            }
            cur = next;
            off = b_off + shape.fan_out;
        }
        cur
    }

    /// Plain forward pass, arithmetic-identical to the tape evaluation.
    pub fn forward<F: Real>(&self, params: &[F], point: &[F]) -> Vec<F> {
        debug_assert_eq!(point.len(), self.cfg.input_dim);
        let mut cur: Vec<F> = point
            .iter()
            .zip(&self.rescale)
            .map(|(&x, &(s, o))| x * F::of(s) + F::of(o))
            .collect();
        let shapes = self.cfg.layer_shapes();
        let last = shapes.len() - 1;
        let mut off = 0usize;
        let mut next = Vec::new();
        for (li, shape) in shapes.iter().enumerate() {
            let w_off = off;
            let b_off = off + shape.fan_in * shape.fan_out;
            next.clear();
            for o in 0..shape.fan_out {
                let mut acc = params[b_off + o];
                let row = &params[w_off + o * shape.fan_in..w_off + (o + 1) * shape.fan_in];
                for (w, x) in row.iter().zip(&cur) {
                    acc = acc + *w * *x;
                }
                let a = if li == last {
                    acc
                } else {
                    match self.cfg.activation {
                        ActivationKind::Sine => (acc * F::of(self.cfg.omega0)).sin(),
                        ActivationKind::Tanh => acc.tanh(),
                    }
                };
                next.push(a);
            }
            core::mem::swap(&mut cur, &mut next);
            off = b_off + shape.fan_out;
        }
        cur
    }
}
