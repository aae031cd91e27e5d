//! Mesh-free physics-informed field networks with particle-density
//! collocation sampling.
//!
//! A field network is trained to fit sparse sensor observations while a PDE
//! residual penalty regularizes it on a set of collocation points. Instead of
//! drawing those points uniformly from a bounded box, the samplers here can
//! draw them from the network's own predicted density, so the penalty
//! concentrates where the signal lives. The crate bundles:
//!
//! * [`autodiff`] — a scalar computation-graph engine with exact first
//!   derivatives w.r.t. inputs and parameters and second derivatives w.r.t.
//!   inputs (for Laplacians);
//! * [`fieldnet`] — sine/tanh multilayer perceptrons plus a non-negative,
//!   finite-total-mass density head;
//! * [`pde`] — residuals for advection, continuity, heat and Fokker-Planck
//!   equations, and the loss terms built from them;
//! * [`sampling`] — Sobol, background, inverse-transform, Metropolis-Hastings
//!   (with parallel tempering), Hamiltonian Monte Carlo (with dual averaging),
//!   and residual-refinement collocation sources;
//! * [`datagen`] — synthetic ground truth: particle advection with radar-like
//!   sensors, an FTCS heat solver, and an analytic Fokker-Planck density;
//! * [`training`] — Adam, experiment orchestration, and evaluation metrics.
//!
//! The numerical core is generic over the scalar type through [`num::Real`];
//! the experiment pipeline runs in `f64` via the aliases below.

pub mod autodiff;
pub mod check;
pub mod datagen;
pub mod fieldnet;
pub mod linalg;
pub mod num;
pub mod pde;
pub mod sampling;
pub mod training;
pub mod util;

/// Scalar precision used by the experiment pipeline and the CLI.
pub type Scalar = f64;

pub type Tape64 = autodiff::Tape<f64>;
pub type TapeBuf64 = autodiff::TapeBuf<f64>;
pub type Dual64 = autodiff::Dual<f64>;
pub type ParamVector64 = fieldnet::ParamVector<f64>;
pub type GaussianEnvelope64 = fieldnet::GaussianEnvelope<f64>;
pub type DensityModel64 = fieldnet::DensityModel<f64>;
pub type VelocityModel64 = fieldnet::VelocityModel<f64>;
pub type PdeSpec64 = pde::PdeSpec<f64>;
pub type CollocationBatch64 = pde::CollocationBatch<f64>;
pub type Domain64 = sampling::Domain<f64>;
