//! PDE residual graphs for the four supported equations and the loss terms
//! assembled from them.
//!
//! A residual is compiled once per batch into a [`ResidualProgram`] — a tape
//! whose residual node depends on the model parameter banks — then evaluated
//! per collocation point. Parameter banks are fixed by convention: bank 0 is
//! the density (or scalar field) network, bank 1 the velocity network.

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AdScalar, Pack, Tape, TapeBuf, Var};
use crate::datagen::SensorObservation;
use crate::num::Real;
use crate::util::{pairwise_mean, pairwise_sum};

/// Lane width for packed batch evaluation.
pub const LANES: usize = 8;
type Lanes<F> = Pack<F, LANES>;



#[derive(Debug, Error)]
pub enum PdeError {
    #[error("this equation needs a velocity field")]
    MissingVelocity,
    #[error("equation supports {want} spatial dims, got {got}")]
    WrongDimension { want: usize, got: usize },
    #[error("collocation batch is empty")]
    EmptyBatch,
    #[error("observation set is empty")]
    EmptyObservations,
    #[error("loss weights must be non-negative")]
    NegativeWeight,
    #[error("non-finite residual at point {0:?}")]
    NonFiniteResidual(Vec<f64>),
    #[error("observation dimension mismatch: point has {got} spatial dims, model wants {want}")]
    DimensionMismatch { want: usize, got: usize },
}

/// Where a collocation point came from; training diagnostics track the mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Background,
    ModelDensity,
    Uniform,
    Refined,
}

/// A set of spacetime points `(t, x…)` with per-point provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationBatch<F> {
    dim: usize,
    coords: Vec<F>,
    provenance: Vec<Provenance>,
}

impl<F: Real> CollocationBatch<F> {
    pub fn new(dim: usize) -> Self {
        CollocationBatch { dim, coords: Vec::new(), provenance: Vec::new() }
    }

    pub fn from_points(points: &[Vec<F>], prov: Provenance) -> Self {
        assert!(!points.is_empty());
        let dim = points[0].len();
        let mut b = CollocationBatch::new(dim);
        for p in points {
            b.push(p, prov);
        }
        b
    }

    pub fn push(&mut self, point: &[F], prov: Provenance) {
        assert_eq!(point.len(), self.dim);
        self.coords.extend_from_slice(point);
        self.provenance.push(prov);
    }

    pub fn append(&mut self, other: &CollocationBatch<F>) {
        assert_eq!(self.dim, other.dim);
        self.coords.extend_from_slice(&other.coords);
        self.provenance.extend_from_slice(&other.provenance);
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[F] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn provenance(&self, i: usize) -> Provenance {
        self.provenance[i]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[F]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Count of points per provenance tag (background, model, uniform,
    /// refined).
    pub fn provenance_counts(&self) -> [usize; 4] {
        let mut c = [0usize; 4];
        for p in &self.provenance {
            c[*p as usize] += 1;
        }
        c
    }

    /// Subset by indices, keeping tags.
    pub fn select(&self, idx: &[usize]) -> CollocationBatch<F> {
        let mut out = CollocationBatch::new(self.dim);
        for &i in idx {
            out.push(self.point(i), self.provenance[i]);
        }
        out
    }
}

/// Time-dependent coefficient functions (drift); emitted into the graph so
/// products like μ(t)·p stay differentiable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftFn<F> {
    Const(F),
    /// `amplitude · sin(frequency · t)`
    SineOfTime { amplitude: F, frequency: F },
}

impl<F: Real> DriftFn<F> {
    fn emit(&self, tape: &mut Tape<F>, t: Var) -> Var {
        match *self {
            DriftFn::Const(c) => tape.constant(c),
            DriftFn::SineOfTime { amplitude, frequency } => {
                let s = tape.sin_scaled(frequency, t);
                tape.mul_const(amplitude, s)
            }
        }
    }
}

/// Which residual to enforce. Velocity fields are passed alongside the
/// density at compile time; the remaining coefficients live here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeSpec<F> {
    /// ∂t ρ + v·∇ρ = 0
    Advection,
    /// ∂t ρ + ∇ρ·v + ρ(∇·v) = 0 (product rule applied)
    Continuity,
    /// ∂t T − α ∇²T = 0
    Heat { alpha: F },
    /// ∂t p + ∂x(μ(t)·p) − D·∂²x p = 0 (1 spatial dim, constant D)
    FokkerPlanck { drift: DriftFn<F>, diffusion: F },
}

impl<F: Real> PdeSpec<F> {
    pub fn needs_velocity(&self) -> bool {
        matches!(self, PdeSpec::Advection | PdeSpec::Continuity)
    }
}

/// Scalar field expressed as graph construction over `(t, x…)` inputs.
/// Parameter reads go through the given bank.
pub trait ScalarFieldGraph<F: Real> {
    fn input_dim(&self) -> usize;
    fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Var;
    /// The parameter bank backing this field; empty for closed-form fields.
    fn bank(&self) -> &[F] {
        &[]
    }
}

/// Vector field expressed as graph construction.
pub trait VectorFieldGraph<F: Real> {
    fn spatial_dim(&self) -> usize;
    fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Vec<Var>;
    fn bank(&self) -> &[F] {
        &[]
    }
}

impl<F: Real> ScalarFieldGraph<F> for crate::fieldnet::DensityModel<F> {
    fn input_dim(&self) -> usize {
        self.net.cfg.input_dim
    }
    fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Var {
        crate::fieldnet::DensityModel::emit(self, tape, bank, inputs)
    }
    fn bank(&self) -> &[F] {
        &self.params.data
    }
}

impl<F: Real> VectorFieldGraph<F> for crate::fieldnet::VelocityModel<F> {
    fn spatial_dim(&self) -> usize {
        self.net.cfg.output_dim
    }
    fn emit(&self, tape: &mut Tape<F>, bank: usize, inputs: &[Var]) -> Vec<Var> {
        crate::fieldnet::VelocityModel::emit(self, tape, bank, inputs)
    }
    fn bank(&self) -> &[F] {
        &self.params.data
    }
}

/// Constant velocity field, for manufactured solutions.
#[derive(Debug, Clone)]
pub struct ConstVelocity<F>(pub Vec<F>);

impl<F: Real> VectorFieldGraph<F> for ConstVelocity<F> {
    fn spatial_dim(&self) -> usize {
        self.0.len()
    }
    fn emit(&self, tape: &mut Tape<F>, _bank: usize, _inputs: &[Var]) -> Vec<Var> {
        self.0.iter().map(|&c| tape.constant(c)).collect()
    }
}

/// Linear velocity field `v_k(x) = scale · x_k`, for manufactured solutions.
#[derive(Debug, Clone)]
pub struct LinearVelocity<F> {
    pub dim: usize,
    pub scale: F,
}

impl<F: Real> VectorFieldGraph<F> for LinearVelocity<F> {
    fn spatial_dim(&self) -> usize {
        self.dim
    }
    fn emit(&self, tape: &mut Tape<F>, _bank: usize, inputs: &[Var]) -> Vec<Var> {
        (0..self.dim)
            .map(|k| tape.mul_const(self.scale, inputs[1 + k]))
            .collect()
    }
}

/// A compiled residual: tape plus the residual node. Banks are
/// `[scalar-field params, velocity params]`.
#[derive(Debug, Clone)]
pub struct ResidualProgram<F: Real> {
    pub tape: Tape<F>,
    pub inputs: Vec<Var>,
    pub residual: Var,
    pub dim: usize,
}

pub const RHO_BANK: usize = 0;
pub const VEL_BANK: usize = 1;

/// Build the residual graph for `spec` over the given fields.
pub fn compile_residual<F: Real>(
    spec: &PdeSpec<F>,
    rho: &impl ScalarFieldGraph<F>,
    vel: Option<&impl VectorFieldGraph<F>>,
    spatial_dim: usize,
) -> Result<ResidualProgram<F>, PdeError> {
    let dim = 1 + spatial_dim;
    if rho.input_dim() != dim {
        return Err(PdeError::WrongDimension { want: rho.input_dim() - 1, got: spatial_dim });
    }
    let mut tape = Tape::new(dim);
    let inputs = tape.input_vars();
    let rho_var = rho.emit(&mut tape, RHO_BANK, &inputs);

    let residual = match *spec {
        PdeSpec::Advection => {
            let v = vel.ok_or(PdeError::MissingVelocity)?;
            let vs = v.emit(&mut tape, VEL_BANK, &inputs);
            if vs.len() != spatial_dim {
                return Err(PdeError::WrongDimension { want: vs.len(), got: spatial_dim });
            }
            let g = tape.grad_graph(rho_var, &inputs);
            let mut acc = g[0];
            for k in 0..spatial_dim {
                let adv = tape.mul(vs[k], g[1 + k]);
                acc = tape.add(acc, adv);
            }
            acc
        }
        PdeSpec::Continuity => {
            let v = vel.ok_or(PdeError::MissingVelocity)?;
            let vs = v.emit(&mut tape, VEL_BANK, &inputs);
            if vs.len() != spatial_dim {
                return Err(PdeError::WrongDimension { want: vs.len(), got: spatial_dim });
            }
            let g = tape.grad_graph(rho_var, &inputs);
            let mut acc = g[0];
            for k in 0..spatial_dim {
                let adv = tape.mul(vs[k], g[1 + k]);
                acc = tape.add(acc, adv);
            }
            // ρ·(∇·v), each ∂v_k/∂x_k from its own sweep
            let mut div = None;
            for k in 0..spatial_dim {
                let dvk = tape.grad_graph(vs[k], &[inputs[1 + k]])[0];
                div = Some(match div {
                    None => dvk,
                    Some(d) => tape.add(d, dvk),
                });
            }
            let dil = tape.mul(rho_var, div.expect("spatial_dim >= 1"));
            tape.add(acc, dil)
        }
        PdeSpec::Heat { alpha } => {
            let g = tape.grad_graph(rho_var, &inputs);
            let mut lap = None;
            for k in 0..spatial_dim {
                let second = tape.grad_graph(g[1 + k], &[inputs[1 + k]])[0];
                lap = Some(match lap {
                    None => second,
                    Some(l) => tape.add(l, second),
                });
            }
            let scaled = tape.mul_const(alpha, lap.expect("spatial_dim >= 1"));
            tape.sub(g[0], scaled)
        }
        PdeSpec::FokkerPlanck { drift, diffusion } => {
            if spatial_dim != 1 {
                return Err(PdeError::WrongDimension { want: 1, got: spatial_dim });
            }
            let mu = drift.emit(&mut tape, inputs[0]);
            let flux = tape.mul(mu, rho_var);
            let g = tape.grad_graph(rho_var, &inputs);
            let dflux = tape.grad_graph(flux, &[inputs[1]])[0];
            let second = tape.grad_graph(g[1], &[inputs[1]])[0];
            let diff = tape.mul_const(diffusion, second);
            let a = tape.add(g[0], dflux);
            tape.sub(a, diff)
        }
    };

    let (tape, kept) = tape.compact(&[residual]);
    let inputs = tape.input_vars();
    Ok(ResidualProgram { tape, inputs, residual: kept[0], dim })
}

impl<F: Real> ResidualProgram<F> {
    /// Residual value at one point.
    pub fn eval(&self, banks: &[&[F]], point: &[F], buf: &mut TapeBuf<F>) -> F {
        self.tape.forward(buf, banks, point);
        buf.value(self.residual)
    }

    /// Residual values over a batch; parallel, deterministic order.
    pub fn eval_batch(&self, banks: &[&[F]; 2], batch: &CollocationBatch<F>) -> Vec<F> {
        let n = batch.len();
        (0..n)
            .into_par_iter()
            .map_init(TapeBuf::new, |buf, i| self.eval(banks, batch.point(i), buf))
            .collect()
    }

    /// Mean squared residual and its gradient w.r.t. both banks, scaled by
    /// `weight`. Gradients accumulate into `grads` (callers zero them).
    /// Returns (unweighted loss, per-point residuals).
    ///
    /// Points are evaluated in lane packs of [`LANES`]; each lane stays
    /// bit-identical to a scalar evaluation, only the graph walk is shared.
    pub fn loss_and_grad(
        &self,
        banks: &[&[F]; 2],
        batch: &CollocationBatch<F>,
        weight: F,
        grads: &mut [Vec<F>; 2],
    ) -> Result<(F, Vec<F>), PdeError> {
        if batch.is_empty() {
            return Err(PdeError::EmptyBatch);
        }
        let n = batch.len();
        let nf = F::of(n as f64);
        let dim = self.dim;
        let chunk = LANES * 16;
        let n_chunks = n.div_ceil(chunk);
        let results: Vec<(Vec<F>, [Vec<F>; 2])> = (0..n_chunks)
            .into_par_iter()
            .map_init(
                TapeBuf::new,
                |buf, ci| {
                    let lo = ci * chunk;
                    let hi = (lo + chunk).min(n);
                    let mut local = [
                        vec![F::zero(); banks[0].len()],
                        vec![F::zero(); banks[1].len()],
                    ];
                    let mut rs = Vec::with_capacity(hi - lo);
                    let mut inputs = vec![Lanes::<F>::zero(); dim];
                    for base in (lo..hi).step_by(LANES) {
                        let count = (hi - base).min(LANES);
                        for (d, slot) in inputs.iter_mut().enumerate() {
                            *slot = Lanes::<F>::from_fn(|l| {
                                batch.point(base + l.min(count - 1))[d]
                            });
                        }
                        self.tape.forward(buf, banks, &inputs);
                        let r = buf.value(self.residual);
                        rs.extend_from_slice(&r.0[..count]);
                        let seed = Lanes::<F>::from_fn(|l| {
                            if l < count {
                                weight * F::of(2.0) * r.0[l] / nf
                            } else {
                                F::zero()
                            }
                        });
                        self.tape.backward(
                            buf,
                            banks,
                            &[(self.residual, seed)],
                            Some(&mut local[..]),
                        );
                    }
                    (rs, local)
                },
            )
            .collect();
        let mut residuals = Vec::with_capacity(n);
        for (rs, local) in &results {
            residuals.extend_from_slice(rs);
            for b in 0..2 {
                for (g, l) in grads[b].iter_mut().zip(&local[b]) {
                    *g += *l;
                }
            }
        }
        for (i, r) in residuals.iter().enumerate() {
            if !r.is_finite() {
                return Err(PdeError::NonFiniteResidual(
                    batch.point(i).iter().map(|x| x.as_f64()).collect(),
                ));
            }
        }
        let sq: Vec<F> = residuals.iter().map(|&r| r * r).collect();
        Ok((pairwise_mean(&sq), residuals))
    }
}

/// Compiled observation-fit graph: density output plus velocity components
/// at one spacetime input, for gradient descent on the data term.
#[derive(Debug, Clone)]
pub struct ObsProgram<F: Real> {
    pub tape: Tape<F>,
    inputs: Vec<crate::autodiff::Var>,
    rho_out: crate::autodiff::Var,
    vel_outs: Vec<crate::autodiff::Var>,
}

pub fn compile_obs<F: Real>(
    rho: &crate::fieldnet::DensityModel<F>,
    vel: Option<&crate::fieldnet::VelocityModel<F>>,
) -> ObsProgram<F> {
    let dim = rho.input_dim();
    let mut tape = Tape::new(dim);
    let inputs = tape.input_vars();
    let rho_out = crate::fieldnet::DensityModel::emit(rho, &mut tape, RHO_BANK, &inputs);
    let vel_outs = vel
        .map(|v| crate::fieldnet::VelocityModel::emit(v, &mut tape, VEL_BANK, &inputs))
        .unwrap_or_default();
    let mut keep = vec![rho_out];
    keep.extend_from_slice(&vel_outs);
    let (tape, kept) = tape.compact(&keep);
    let inputs = tape.input_vars();
    ObsProgram { tape, inputs, rho_out: kept[0], vel_outs: kept[1..].to_vec() }
}

impl<F: Real> ObsProgram<F> {
    /// Mean-squared observation loss over the indexed subset and its
    /// gradient (×`weight`) accumulated into `grads`. Lane-packed like the
    /// residual loss.
    pub fn loss_and_grad(
        &self,
        banks: &[&[F]; 2],
        data: &[SensorObservation<F>],
        idx: &[usize],
        weight: F,
        grads: &mut [Vec<F>; 2],
    ) -> Result<F, PdeError> {
        if idx.is_empty() {
            return Err(PdeError::EmptyObservations);
        }
        let n = idx.len();
        let nf = F::of(n as f64);
        let dim = self.inputs.len();
        let chunk = LANES * 32;
        let n_chunks = n.div_ceil(chunk);
        let fit_velocity = !self.vel_outs.is_empty();
        let results: Vec<(Vec<F>, [Vec<F>; 2])> = (0..n_chunks)
            .into_par_iter()
            .map_init(TapeBuf::new, |buf, ci| {
                let lo = ci * chunk;
                let hi = (lo + chunk).min(n);
                let mut local = [
                    vec![F::zero(); banks[0].len()],
                    vec![F::zero(); banks[1].len()],
                ];
                let mut sq = Vec::with_capacity(hi - lo);
                let mut seeds = Vec::with_capacity(1 + self.vel_outs.len());
                let mut inputs = vec![Lanes::<F>::zero(); dim];
                for base in (lo..hi).step_by(LANES) {
                    let count = (hi - base).min(LANES);
                    let row = |l: usize| &data[idx[base + l.min(count - 1)]];
                    for (d, slot) in inputs.iter_mut().enumerate() {
                        *slot = Lanes::<F>::from_fn(|l| {
                            let o = row(l);
                            if d == 0 {
                                o.t
                            } else {
                                o.pos[d - 1]
                            }
                        });
                    }
                    self.tape.forward(buf, banks, &inputs);
                    seeds.clear();
                    let pred = buf.value(self.rho_out);
                    let e = Lanes::<F>::from_fn(|l| {
                        if l < count {
                            pred.0[l] - row(l).rho
                        } else {
                            F::zero()
                        }
                    });
                    let mut acc: Vec<F> = (0..count).map(|l| e.0[l] * e.0[l]).collect();
                    seeds.push((self.rho_out, e.scale(weight * F::of(2.0) / nf)));
                    if fit_velocity {
                        for (k, &vout) in self.vel_outs.iter().enumerate() {
                            let predv = buf.value(vout);
                            let ev = Lanes::<F>::from_fn(|l| {
                                let o = row(l);
                                if l < count && !o.vel.is_empty() {
                                    predv.0[l] - o.vel[k]
                                } else {
                                    F::zero()
                                }
                            });
                            for (l, a) in acc.iter_mut().enumerate() {
                                *a += ev.0[l] * ev.0[l];
                            }
                            seeds.push((vout, ev.scale(weight * F::of(2.0) / nf)));
                        }
                    }
                    sq.extend_from_slice(&acc);
                    self.tape.backward(buf, banks, &seeds, Some(&mut local[..]));
                }
                (sq, local)
            })
            .collect();
        let mut sq = Vec::with_capacity(n);
        for (s, local) in &results {
            sq.extend_from_slice(s);
            for b in 0..2 {
                for (g, l) in grads[b].iter_mut().zip(&local[b]) {
                    *g += *l;
                }
            }
        }
        Ok(pairwise_mean(&sq))
    }

    /// Density prediction at one point (no gradient).
    pub fn predict(&self, banks: &[&[F]; 2], point: &[F], buf: &mut TapeBuf<F>) -> F {
        self.tape.forward(buf, banks, point);
        buf.value(self.rho_out)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.len()
    }
}

/// Residual at a single point (one-shot convenience: compiles the graph).
pub fn residual<F: Real>(
    spec: &PdeSpec<F>,
    rho: &impl ScalarFieldGraph<F>,
    vel: Option<&impl VectorFieldGraph<F>>,
    point: &[F],
) -> Result<F, PdeError> {
    let spatial = point.len() - 1;
    let prog = compile_residual(spec, rho, vel, spatial)?;
    let banks = [rho.bank(), vel.map_or(&[] as &[F], |v| v.bank())];
    let mut buf = TapeBuf::new();
    let r = prog.eval(&banks, point, &mut buf);
    if !r.is_finite() {
        return Err(PdeError::NonFiniteResidual(
            point.iter().map(|x| x.as_f64()).collect(),
        ));
    }
    Ok(r)
}

/// Mean squared residual over a batch. Estimates the density-weighted loss
/// when the batch was drawn from the model density and the uniform-measure
/// loss when drawn uniformly; the estimator itself is identical.
pub fn loss_pde<F: Real>(
    spec: &PdeSpec<F>,
    rho: &impl ScalarFieldGraph<F>,
    vel: Option<&impl VectorFieldGraph<F>>,
    batch: &CollocationBatch<F>,
) -> Result<F, PdeError> {
    if batch.is_empty() {
        return Err(PdeError::EmptyBatch);
    }
    let prog = compile_residual(spec, rho, vel, batch.dim() - 1)?;
    let banks = [rho.bank(), vel.map_or(&[] as &[F], |v| v.bank())];
    let rs = prog.eval_batch(&banks, batch);
    let sq: Vec<F> = rs.iter().map(|&r| r * r).collect();
    Ok(pairwise_mean(&sq))
}

/// Observation loss: MSE of the density prediction plus, when velocity
/// observations are present, the MSE over velocity components (summed per
/// point, averaged over points, the two parts added).
pub fn loss_obs<F: Real>(
    rho: &crate::fieldnet::DensityModel<F>,
    vel: Option<&crate::fieldnet::VelocityModel<F>>,
    data: &[SensorObservation<F>],
) -> Result<F, PdeError> {
    if data.is_empty() {
        return Err(PdeError::EmptyObservations);
    }
    let want = rho.spatial_dim();
    let mut rho_sq = Vec::with_capacity(data.len());
    let mut vel_sq = Vec::with_capacity(data.len());
    for obs in data {
        if obs.pos.len() != want {
            return Err(PdeError::DimensionMismatch { want, got: obs.pos.len() });
        }
        let p = obs.point();
        let e = rho.forward(&p) - obs.rho;
        rho_sq.push(e * e);
        if let (Some(v), false) = (vel, obs.vel.is_empty()) {
            let pred = v.forward(&p);
            let mut acc = F::zero();
            for (pv, ov) in pred.iter().zip(&obs.vel) {
                let d = *pv - *ov;
                acc += d * d;
            }
            vel_sq.push(acc);
        }
    }
    let mut loss = pairwise_mean(&rho_sq);
    if !vel_sq.is_empty() {
        loss += pairwise_sum(&vel_sq) / F::of(data.len() as f64);
    }
    Ok(loss)
}

/// Weighted total loss `w_obs·L_obs + w_pde·L_pde + w_init·L_init`.
pub fn loss_total<F: Real>(
    weights: (F, F, F),
    parts: (F, F, F),
) -> Result<F, PdeError> {
    let (w1, w2, w4) = weights;
    if w1 < F::zero() || w2 < F::zero() || w4 < F::zero() {
        return Err(PdeError::NegativeWeight);
    }
    Ok(w1 * parts.0 + w2 * parts.1 + w4 * parts.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Var;

    /// ρ(t, x) = sin(x - t): the travelling wave.
    struct TravellingWave;
    impl ScalarFieldGraph<f64> for TravellingWave {
        fn input_dim(&self) -> usize {
            2
        }
        fn emit(&self, tape: &mut Tape<f64>, _bank: usize, ins: &[Var]) -> Var {
            let d = tape.sub(ins[1], ins[0]);
            tape.sin(d)
        }
    }

    /// ρ(t) = exp(-t), constant in space.
    struct ExpDecay {
        dim: usize,
    }
    impl ScalarFieldGraph<f64> for ExpDecay {
        fn input_dim(&self) -> usize {
            1 + self.dim
        }
        fn emit(&self, tape: &mut Tape<f64>, _bank: usize, ins: &[Var]) -> Var {
            let n = tape.neg(ins[0]);
            tape.exp(n)
        }
    }

    /// T(t, x, y) = exp(-2αk²t)·sin(kx)·sin(ky).
    struct SeparableHeat {
        alpha: f64,
        k: f64,
    }
    impl ScalarFieldGraph<f64> for SeparableHeat {
        fn input_dim(&self) -> usize {
            3
        }
        fn emit(&self, tape: &mut Tape<f64>, _bank: usize, ins: &[Var]) -> Var {
            let decay = tape.mul_const(-2.0 * self.alpha * self.k * self.k, ins[0]);
            let e = tape.exp(decay);
            let sx = tape.sin_scaled(self.k, ins[1]);
            let sy = tape.sin_scaled(self.k, ins[2]);
            let s = tape.mul(sx, sy);
            tape.mul(e, s)
        }
    }

    /// The closed-form drift-diffusion density as a graph.
    pub struct FpAnalyticField;
    impl ScalarFieldGraph<f64> for FpAnalyticField {
        fn input_dim(&self) -> usize {
            2
        }
        fn emit(&self, tape: &mut Tape<f64>, _bank: usize, ins: &[Var]) -> Var {
            // mean(t) = (cos 10 - cos 10t)/10
            let c = tape.cos_scaled(10.0, ins[0]);
            let nc = tape.mul_const(-0.1, c);
            let mean = tape.add_const(10.0f64.cos() / 10.0, nc);
            // var(t) = sigma^2 (t+1) + 0.02^2
            let s2 = crate::datagen::FP_SIGMA * crate::datagen::FP_SIGMA;
            let vt = tape.mul_const(s2, ins[0]);
            let var = tape.add_const(s2 + 0.02 * 0.02, vt);
            // N(x; mean, var)
            let d = tape.sub(ins[1], mean);
            let q = tape.sqr(d);
            let two_var = tape.mul_const(2.0, var);
            let frac = tape.div(q, two_var);
            let neg = tape.neg(frac);
            let e = tape.exp(neg);
            let tau_var = tape.mul_const(core::f64::consts::TAU, var);
            let root = tape.sqrt(tau_var);
            let norm = tape.recip(root);
            tape.mul(e, norm)
        }
    }

    #[test]
    fn advection_travelling_wave_residual_is_zero() {
        let spec = PdeSpec::Advection;
        let v = ConstVelocity(vec![1.0]);
        for &p in &[[0.0, 0.0], [0.7, -0.2], [2.0, 5.0]] {
            let r = residual(&spec, &TravellingWave, Some(&v), &p).unwrap();
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn continuity_manufactured_solution_residual_is_zero() {
        // ρ = e^{-t}, v(x) = x/d: ∂tρ = -e^{-t}, ∇ρ = 0, ρ∇·v = e^{-t}
        for d in 1..=3usize {
            let spec = PdeSpec::Continuity;
            let v = LinearVelocity { dim: d, scale: 1.0 / d as f64 };
            let rho = ExpDecay { dim: d };
            let mut p = vec![0.4; 1 + d];
            p[0] = 0.9;
            let r = residual(&spec, &rho, Some(&v), &p).unwrap();
            assert!(r.abs() < 1e-12, "d={d}: {r}");
        }
    }

    #[test]
    fn heat_separable_solution_residual_is_zero() {
        let alpha = 0.37;
        let k = 2.1;
        let spec = PdeSpec::Heat { alpha };
        let rho = SeparableHeat { alpha, k };
        let mut rng = crate::util::rng_from(5);
        use rand::Rng;
        for _ in 0..100 {
            let p = [
                rng.random_range(0.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let r = residual(&spec, &rho, None::<&ConstVelocity<f64>>, &p).unwrap();
            assert!(r.abs() <= 1e-10, "{r} at {p:?}");
        }
    }

    #[test]
    fn fokker_planck_analytic_residual_is_tiny() {
        let spec = PdeSpec::FokkerPlanck {
            drift: DriftFn::SineOfTime { amplitude: 1.0, frequency: 10.0 },
            diffusion: crate::datagen::FP_DIFFUSION,
        };
        let mut rng = crate::util::rng_from(11);
        use rand::Rng;
        for _ in 0..200 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.5..1.5)];
            let r = residual(&spec, &FpAnalyticField, None::<&ConstVelocity<f64>>, &p).unwrap();
            assert!(r.abs() <= 1e-8, "{r} at {p:?}");
        }
    }

    #[test]
    fn continuity_with_zero_velocity_reduces_to_time_derivative() {
        let spec = PdeSpec::Continuity;
        let v = ConstVelocity(vec![0.0]);
        let prog = compile_residual(&spec, &TravellingWave, Some(&v), 1).unwrap();
        let mut buf = TapeBuf::new();
        let banks: [&[f64]; 2] = [&[], &[]];
        for &p in &[[0.0, 0.3], [1.0, -0.4]] {
            let r = prog.eval(&banks, &p, &mut buf);
            // ∂t sin(x - t) = -cos(x - t)
            let expect = -(p[1] - p[0]).cos();
            assert_eq!(r.to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn loss_pde_examples() {
        // batch where residual ≡ 0
        let spec = PdeSpec::Advection;
        let v = ConstVelocity(vec![1.0]);
        let batch = CollocationBatch::from_points(
            &[vec![0.1, 0.4], vec![0.5, 2.0]],
            Provenance::Uniform,
        );
        let l = loss_pde(&spec, &TravellingWave, Some(&v), &batch).unwrap();
        assert!(l < 1e-24);
        assert!(l >= 0.0);

        // residuals 1 and 3 -> mean of squares 5; use advection with v = 0
        // on ρ = sin(x - t): residual = -cos(x - t)
        let v0 = ConstVelocity(vec![0.0]);
        // choose points where cos(x - t) = 1 and... simpler: single-point r²
        let b1 = CollocationBatch::from_points(&[vec![0.0, 0.0]], Provenance::Uniform);
        let l1 = loss_pde(&spec, &TravellingWave, Some(&v0), &b1).unwrap();
        assert!((l1 - 1.0).abs() < 1e-12); // r = -cos(0) = -1, r² = 1
    }

    #[test]
    fn loss_pde_rejects_empty_batch() {
        let spec = PdeSpec::Advection;
        let v = ConstVelocity(vec![1.0]);
        let batch = CollocationBatch::new(2);
        assert!(matches!(
            loss_pde(&spec, &TravellingWave, Some(&v), &batch),
            Err(PdeError::EmptyBatch)
        ));
    }

    #[test]
    fn mean_of_squares_mixes_points() {
        // direct check of the estimator arithmetic on residuals 1 and 3
        let sq = [1.0f64, 9.0];
        assert_eq!(crate::util::pairwise_mean(&sq), 5.0);
    }

    #[test]
    fn loss_total_examples() {
        assert_eq!(loss_total((0.0, 0.0, 0.0), (9.0, 9.0, 9.0)).unwrap(), 0.0);
        assert_eq!(loss_total((1.0, 1.0, 0.0), (0.5, 0.25, 123.0)).unwrap(), 0.75);
        let a = loss_total((1.0, 2.0, 0.0), (0.0, 0.3, 0.0)).unwrap();
        let b = loss_total((1.0, 4.0, 0.0), (0.0, 0.3, 0.0)).unwrap();
        assert_eq!(b, 2.0 * a);
        assert!(matches!(
            loss_total((-1.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
            Err(PdeError::NegativeWeight)
        ));
    }

    #[test]
    fn residual_grad_matches_finite_differences_through_params() {
        // d loss_pde / d theta via the program must match finite differences
        use crate::fieldnet::{ActivationKind, DensityModel, GaussianEnvelope, MlpConfig};
        let env = GaussianEnvelope::standard(1);
        let mut model = DensityModel::init(
            MlpConfig {
                input_dim: 2,
                output_dim: 1,
                hidden_layers: 1,
                hidden_units: 6,
                activation: ActivationKind::Sine,
                omega0: 3.0,
                seed: 9,
            },
            vec![(1.0, 0.0), (1.0, 0.0)],
            env,
            1e3,
        )
        .unwrap();
        let spec = PdeSpec::FokkerPlanck {
            drift: DriftFn::SineOfTime { amplitude: 1.0, frequency: 10.0 },
            diffusion: 0.0018,
        };
        let batch = CollocationBatch::from_points(
            &[vec![0.1, 0.2], vec![-0.4, -0.1], vec![0.8, 0.05]],
            Provenance::Uniform,
        );
        let prog =
            compile_residual(&spec, &model, None::<&ConstVelocity<f64>>, 1).unwrap();
        let mut grads = [vec![0.0; model.params.data.len()], vec![]];
        let banks: [&[f64]; 2] = [&model.params.data.clone(), &[]];
        let (_l, _r) = prog.loss_and_grad(&banks, &batch, 1.0, &mut grads).unwrap();

        let h = 1e-6;
        for idx in [0usize, 3, 11, model.params.data.len() - 1] {
            let orig = model.params.data[idx];
            model.params.data[idx] = orig + h;
            let lp = loss_pde(&spec, &model, None::<&ConstVelocity<f64>>, &batch).unwrap();
            model.params.data[idx] = orig - h;
            let lm = loss_pde(&spec, &model, None::<&ConstVelocity<f64>>, &batch).unwrap();
            model.params.data[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                crate::check::rel_err(grads[0][idx], fd) < 1e-5,
                "idx {idx}: {} vs {}",
                grads[0][idx],
                fd
            );
        }
    }

    #[test]
    fn loss_obs_examples() {
        use crate::fieldnet::{DensityModel, GaussianEnvelope};
        let env = GaussianEnvelope::standard(1);
        let model = DensityModel::envelope_only(env, (0.0, 1.0)).unwrap();
        // perfect predictions -> 0
        let x = 0.3f64;
        let obs = vec![SensorObservation {
            t: 0.5,
            pos: vec![x],
            layer: 0,
            rho: model.forward(&[0.5, x]),
            vel: vec![],
        }];
        let l = loss_obs(&model, None, &obs).unwrap();
        assert_eq!(l, 0.0);

        // constant prediction 0 vs observation 2 -> 4 (build a zero model)
        let mut zero = crate::fieldnet::DensityModel::init(
            crate::fieldnet::MlpConfig {
                input_dim: 2,
                output_dim: 1,
                hidden_layers: 1,
                hidden_units: 2,
                activation: crate::fieldnet::ActivationKind::Tanh,
                omega0: 1.0,
                seed: 0,
            },
            vec![(1.0, 0.0); 2],
            GaussianEnvelope::standard(1),
            1e3,
        )
        .unwrap();
        for p in &mut zero.params.data {
            *p = 0.0;
        }
        let obs = vec![SensorObservation { t: 0.0, pos: vec![0.0], layer: 0, rho: 2.0, vel: vec![] }];
        let l = loss_obs(&zero, None, &obs).unwrap();
        assert_eq!(l, 4.0);
        assert!(matches!(
            loss_obs(&zero, None, &[]),
            Err(PdeError::EmptyObservations)
        ));
    }

    #[test]
    fn loss_obs_velocity_component_error() {
        use crate::fieldnet::{ActivationKind, MlpConfig, VelocityModel};
        // zero velocity model; observation with velocity (1, 0) and exact density
        let mut vmodel = VelocityModel::<f64>::init(
            MlpConfig {
                input_dim: 3,
                output_dim: 2,
                hidden_layers: 1,
                hidden_units: 4,
                activation: ActivationKind::Tanh,
                omega0: 1.0,
                seed: 1,
            },
            vec![(1.0, 0.0); 3],
        )
        .unwrap();
        for p in &mut vmodel.params.data {
            *p = 0.0;
        }
        let dmodel = crate::fieldnet::DensityModel::envelope_only(
            crate::fieldnet::GaussianEnvelope::standard(2),
            (0.0, 1.0),
        )
        .unwrap();
        let pos = vec![0.1, -0.2];
        let obs = vec![SensorObservation {
            t: 0.4,
            pos: pos.clone(),
            layer: 0,
            rho: dmodel.forward(&[0.4, 0.1, -0.2]),
            vel: vec![1.0, 0.0],
        }];
        let l = loss_obs(&dmodel, Some(&vmodel), &obs).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }
}
