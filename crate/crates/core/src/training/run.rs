//! The training loop: warm-up and mixed sampling, periodic collocation
//! refresh through the configured sampler, Adam steps on the weighted loss,
//! periodic evaluation, best-checkpoint tracking and early stopping.

use std::time::Instant;

use rayon::prelude::*;

use super::adam::{lr_schedule, AdamState};
use super::config::{ExperimentConfig, ExperimentKind, SamplerKind};
use super::data::Dataset;
use super::metrics::{kl_estimate, r2_explained_variance, MetricsRecord};
use super::TrainError;
use crate::autodiff::TapeBuf;
use crate::datagen::{fp, SensorObservation};
use crate::fieldnet::{
    fit_envelope, DensityModel, FieldNet, MlpConfig, ModelSet, VelocityModel,
};

use crate::pde::{
    compile_obs, compile_residual, CollocationBatch, DriftFn, PdeSpec, Provenance,
};
use crate::sampling::{
    background_sample, hmc_sample, inverse_transform_sample, mh_sample, ot_rar_select,
    rar_select, sobol_uniform_from, Domain, HmcOptions, MhOptions, MixSchedule, ModelTarget,
    SamplerDiag,
};
use crate::util;

#[derive(Debug, Clone)]
pub struct SamplerEvent {
    pub epoch: usize,
    pub diag: SamplerDiag,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Models at the best validation metric.
    pub models: ModelSet<f64>,
    pub records: Vec<MetricsRecord>,
    pub sampler_log: Vec<SamplerEvent>,
    pub best_epoch: usize,
    /// Validation metric at the best epoch (explained variance, or KL for
    /// the forward problem).
    pub best_val: Option<f64>,
    /// Test metric of the best checkpoint (explained variance of √ρ or T);
    /// for the forward problem this is the final-epoch KL.
    pub test_metric: Option<f64>,
    /// KL divergence at the final epoch (forward problem only).
    pub final_kl: Option<f64>,
    pub wall_s: f64,
    /// Points per provenance tag in the last collocation batch.
    pub provenance_counts: [usize; 4],
}

/// Deterministic rotating minibatch cursor.
struct Rotation {
    order: Vec<usize>,
    cursor: usize,
    seed: u64,
    pass: u64,
}

impl Rotation {
    fn new(n: usize, seed: u64) -> Self {
        let mut r = Rotation { order: (0..n).collect(), cursor: 0, seed, pass: 0 };
        r.shuffle();
        r
    }

    fn shuffle(&mut self) {
        use rand::seq::SliceRandom;
        let mut rng = util::rng_from(util::derive_seed_indexed(self.seed, "shuffle", self.pass));
        self.order.shuffle(&mut rng);
        self.pass += 1;
        self.cursor = 0;
    }

    fn next(&mut self, batch: usize) -> Vec<usize> {
        if batch == 0 || batch >= self.order.len() {
            return (0..self.order.len()).collect();
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            if self.cursor >= self.order.len() {
                self.shuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Collocation state: the current batch plus whatever the configured
/// sampler needs to draw the next one.
struct Collocator {
    dom: Domain<f64>,
    schedule: MixSchedule,
    sobol_next: u64,
    event: u64,
    data_locations: Vec<Vec<f64>>,
}

impl Collocator {
    #[allow(clippy::too_many_arguments)]
    fn refresh(
        &mut self,
        cfg: &ExperimentConfig,
        epoch: usize,
        density: &DensityModel<f64>,
        velocity: Option<&VelocityModel<f64>>,
        spec: &PdeSpec<f64>,
        prev: Option<&CollocationBatch<f64>>,
    ) -> Result<(CollocationBatch<f64>, Option<SamplerDiag>), TrainError> {
        let s = &cfg.sampler;
        let n = s.n_collocation;
        self.event += 1;
        let event_seed =
            util::derive_seed_indexed(cfg.experiment.seed, "resample", self.event);
        let mut rng = util::rng_from(event_seed);

        match s.kind {
            SamplerKind::Uniform => {
                let b = sobol_uniform_from(n, &self.dom, self.sobol_next)?;
                self.sobol_next += n as u64;
                Ok((b, None))
            }
            SamplerKind::Rar | SamplerKind::OtRar => {
                let spatial = self.dom.spatial_dim();
                let prog = compile_residual(spec, density, velocity, spatial)?;
                let banks: [&[f64]; 2] = [
                    &density.params.data,
                    velocity.map_or(&[] as &[f64], |v| &v.params.data),
                ];
                let buf = std::cell::RefCell::new(TapeBuf::new());
                let residual =
                    |p: &[f64]| -> f64 { prog.eval(&banks, p, &mut buf.borrow_mut()) };
                let empty = CollocationBatch::new(self.dom.dim());
                let x_prev = prev.unwrap_or(&empty);
                let b = if s.kind == SamplerKind::Rar {
                    rar_select(residual, x_prev, n, &self.dom, &mut rng)?
                } else {
                    let j = s.ot_j.unwrap_or(n);
                    ot_rar_select(residual, x_prev, n, j, &self.dom, &mut rng)?
                };
                Ok((b, None))
            }
            SamplerKind::It | SamplerKind::Mh | SamplerKind::Hmc | SamplerKind::TruePdf => {
                let frac = self.schedule.density_fraction(epoch);
                let n_density = ((frac * n as f64).ceil() as usize).min(n);
                let n_background = n - n_density;
                let mut diag = None;

                let mut batch = CollocationBatch::new(self.dom.dim());
                if n_density > 0 {
                    let (b, d) = self.draw_density(
                        cfg,
                        n_density,
                        density,
                        prev,
                        event_seed,
                        &mut rng,
                    )?;
                    batch.append(&b);
                    diag = d;
                }
                if n_background > 0 {
                    let b = background_sample(
                        n_background,
                        s.background,
                        &self.data_locations,
                        Some(&density.envelope),
                        &self.dom,
                        &mut rng,
                    )?;
                    batch.append(&b);
                }
                Ok((batch, diag))
            }
        }
    }

    fn draw_density(
        &mut self,
        cfg: &ExperimentConfig,
        n: usize,
        density: &DensityModel<f64>,
        prev: Option<&CollocationBatch<f64>>,
        event_seed: u64,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> Result<(CollocationBatch<f64>, Option<SamplerDiag>), TrainError> {
        let s = &cfg.sampler;
        match s.kind {
            SamplerKind::It => {
                let target = ModelTarget::new(density);
                let b =
                    inverse_transform_sample(n, &target, &self.dom, s.it_grid, rng)?;
                Ok((b, None))
            }
            SamplerKind::Mh => {
                let target = ModelTarget::new(density);
                let opts = MhOptions {
                    chains: s.chains,
                    ladder: s.ladder.clone(),
                    burn_in: s.burn_in,
                    thin: s.thin,
                    seed: event_seed,
                    ..Default::default()
                };
                let (b, diag) = mh_sample(n, &target, &self.dom, &opts, prev)?;
                Ok((b, Some(diag)))
            }
            SamplerKind::Hmc => {
                let target = ModelTarget::new(density);
                let opts = HmcOptions {
                    chains: s.chains,
                    ladder: s.ladder.clone(),
                    leapfrog_steps: s.leapfrog_steps,
                    target_accept: s.target_accept,
                    burn_in: s.burn_in,
                    thin: s.thin,
                    seed: event_seed,
                    ..Default::default()
                };
                let (b, report) = hmc_sample(n, &target, &self.dom, &opts, prev)?;
                Ok((b, Some(report.diag)))
            }
            SamplerKind::TruePdf => {
                // oracle for the closed-form forward problem
                let mut batch = CollocationBatch::new(self.dom.dim());
                let (t0, t1) = self.dom.t;
                for _ in 0..n {
                    let t = util::draw_uniform(rng, t0, t1);
                    let x = fp::fp_mean(t)
                        + fp::fp_var(t).sqrt() * util::draw_normal::<f64, _>(rng);
                    let x = x.clamp(fp::FP_X_RANGE.0, fp::FP_X_RANGE.1);
                    batch.push(&[t, x], Provenance::ModelDensity);
                }
                Ok((batch, None))
            }
            _ => unreachable!("draw_density called for non-density sampler"),
        }
    }
}

fn better(kind: ExperimentKind, candidate: f64, incumbent: f64) -> bool {
    match kind {
        ExperimentKind::FokkerPlanck => candidate < incumbent, // KL: lower is better
        _ => candidate > incumbent,                            // R²: higher is better
    }
}

/// Fixed evaluation inputs for the forward problem: true-density draws plus
/// the quadrature grid resolution for the normalization constant.
struct FpEval {
    val_samples: Vec<[f64; 2]>,
    final_samples: Vec<[f64; 2]>,
    quad: [usize; 2],
}

impl FpEval {
    fn new(seed: u64) -> Self {
        let draw = |label: &str, n: usize| -> Vec<[f64; 2]> {
            let mut rng = util::rng_from(util::derive_seed(seed, label));
            (0..n)
                .map(|_| {
                    let t = util::draw_uniform(&mut rng, fp::FP_T0, fp::FP_T1);
                    let x = fp::fp_mean(t)
                        + fp::fp_var(t).sqrt() * util::draw_normal::<f64, _>(&mut rng);
                    [t, x]
                })
                .collect()
        };
        FpEval {
            val_samples: draw("kl-val", 4_000),
            final_samples: draw("kl-final", 10_000),
            quad: [24, 360],
        }
    }

    fn kl(&self, density: &DensityModel<f64>, dom: &Domain<f64>, final_eval: bool) -> Result<f64, TrainError> {
        let samples = if final_eval { &self.final_samples } else { &self.val_samples };
        let mut it = samples.iter();
        kl_estimate(
            move || {
                let s = it.next().expect("enough precomputed samples");
                vec![s[0], s[1]]
            },
            |p: &[f64]| fp::fp_log_pdf_joint(p[0], p[1]),
            |p: &[f64]| density.forward(p),
            dom,
            samples.len(),
            &self.quad,
        )
    }
}

fn sqrt_clamped(x: f64) -> f64 {
    x.max(0.0).sqrt()
}

/// Predictions over observation rows, in parallel, in row order.
fn predict_rows(density: &DensityModel<f64>, rows: &[SensorObservation<f64>]) -> Vec<f64> {
    rows.par_iter().map(|o| density.forward(&o.point())).collect()
}

fn val_metric(
    kind: ExperimentKind,
    density: &DensityModel<f64>,
    rows: &[SensorObservation<f64>],
) -> Result<f64, TrainError> {
    let pred = predict_rows(density, rows);
    match kind {
        ExperimentKind::Heat => {
            let truth: Vec<f64> = rows.iter().map(|o| o.rho).collect();
            r2_explained_variance(&pred, &truth)
        }
        _ => {
            let pred: Vec<f64> = pred.into_iter().map(sqrt_clamped).collect();
            let truth: Vec<f64> = rows.iter().map(|o| sqrt_clamped(o.rho)).collect();
            r2_explained_variance(&pred, &truth)
        }
    }
}

/// Train per the config on the loaded dataset. Returns the best-validation
/// checkpoint, the metrics history, and summary numbers; a non-finite loss
/// aborts with the last good state attached.
pub fn train(cfg: &ExperimentConfig, data: &Dataset) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    if data.kind != cfg.experiment.kind {
        return Err(TrainError::Config("dataset kind does not match config".into()));
    }
    if data.train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let kind = cfg.experiment.kind;
    let spatial = kind.spatial_dim();
    let dom = cfg.domain.to_domain();
    let seed = cfg.experiment.seed;
    let start = Instant::now();

    // --- envelope and models ------------------------------------------------
    let locations: Vec<Vec<f64>> = data.train.iter().map(|o| o.pos.clone()).collect();
    let envelope = fit_envelope(&locations, cfg.envelope.c)?;

    let data_bbox: Vec<(f64, f64)> = (0..spatial)
        .map(|d| {
            let lo = locations.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = locations.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            let pad = 0.1 * (hi - lo).max(1.0);
            (lo - pad, hi + pad)
        })
        .collect();
    let mut ranges = vec![(dom.t.0, dom.t.1)];
    for (d, b) in cfg.domain.rescale_box((0.0, 1.0)).iter().enumerate() {
        let bounded = matches!(cfg.domain.x[d], super::config::ExtentCfg::Box(_));
        ranges.push(if bounded { *b } else { data_bbox[d] });
    }
    let rescale = FieldNet::unit_rescale(&ranges);

    let dnet = &cfg.density_net;
    let mut density = DensityModel::init(
        MlpConfig {
            input_dim: 1 + spatial,
            output_dim: 1,
            hidden_layers: dnet.hidden_layers,
            hidden_units: dnet.hidden_units,
            activation: dnet.activation,
            omega0: dnet.omega0,
            seed: util::derive_seed(seed, "density-init"),
        },
        rescale.clone(),
        envelope,
        cfg.envelope.c_max,
    )?;
    // Train the head in normalized units: the body then works at O(1)
    // scale no matter what units the sensors report.
    let rho_scale = data
        .train
        .iter()
        .map(|o| o.rho.abs())
        .fold(0.0f64, f64::max);
    if rho_scale > 0.0 {
        density.output_scale = rho_scale;
    }
    let mut velocity: Option<VelocityModel<f64>> = match (&cfg.velocity_net, kind.has_velocity())
    {
        (Some(vnet), true) => Some(VelocityModel::init(
            MlpConfig {
                input_dim: 1 + spatial,
                output_dim: spatial,
                hidden_layers: vnet.hidden_layers,
                hidden_units: vnet.hidden_units,
                activation: vnet.activation,
                omega0: vnet.omega0,
                seed: util::derive_seed(seed, "velocity-init"),
            },
            rescale.clone(),
        )?),
        _ => None,
    };

    let spec: PdeSpec<f64> = match kind {
        ExperimentKind::Mass2d | ExperimentKind::Mass3d => PdeSpec::Continuity,
        ExperimentKind::Heat => {
            let alpha = cfg
                .heat_data
                .as_ref()
                .ok_or_else(|| {
                    TrainError::Config("heat training needs [heat_data] for alpha".into())
                })?
                .alpha;
            PdeSpec::Heat { alpha }
        }
        ExperimentKind::FokkerPlanck => PdeSpec::FokkerPlanck {
            drift: DriftFn::SineOfTime { amplitude: 1.0, frequency: 10.0 },
            diffusion: fp::FP_DIFFUSION,
        },
    };

    // --- samplers -----------------------------------------------------------
    let schedule = MixSchedule {
        warmup_epochs: cfg.sampler.warmup_epochs,
        ramp_epochs: cfg.sampler.ramp_epochs,
        final_density_fraction: cfg.sampler.final_density_fraction,
        resample_every: cfg.sampler.resample_every,
    };
    let mut collocator = Collocator {
        dom: dom.clone(),
        schedule,
        sobol_next: 1,
        event: 0,
        data_locations: locations,
    };
    let (mut collocation, mut last_diag) =
        collocator.refresh(cfg, 0, &density, velocity.as_ref(), &spec, None)?;
    let mut sampler_log = vec![SamplerEvent {
        epoch: 0,
        diag: last_diag.unwrap_or_default(),
    }];

    // --- optimizer state ------------------------------------------------------
    let mut adam_d = AdamState::<f64>::new(density.params.len());
    let mut adam_v = velocity.as_ref().map(|v| AdamState::<f64>::new(v.params.len()));
    let mut obs_rot = Rotation::new(data.train.len(), util::derive_seed(seed, "obs-batches"));
    let mut col_rot =
        Rotation::new(collocation.len(), util::derive_seed(seed, "collocation-batches"));

    let fp_eval =
        if kind == ExperimentKind::FokkerPlanck { Some(FpEval::new(seed)) } else { None };

    let (w_obs, w_pde, w_init) = (cfg.loss.w_obs, cfg.loss.w_pde, cfg.loss.w_init);
    // The forward problem has initial-condition rows instead of interior
    // observations; both enter through the same fit machinery.
    let data_weight = if kind == ExperimentKind::FokkerPlanck { w_init } else { w_obs };

    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val: Option<f64> = None;
    let mut best_params: Option<(Vec<f64>, Option<Vec<f64>>)> = None;
    let mut last_good: Option<(Vec<f64>, Option<Vec<f64>>)> = None;

    let epochs = cfg.optimizer.epochs;
    let mut grads: [Vec<f64>; 2] = [
        vec![0.0; density.params.len()],
        vec![0.0; velocity.as_ref().map_or(0, |v| v.params.len())],
    ];

    let abort = |epoch: usize,
                 density: &DensityModel<f64>,
                 velocity: &Option<VelocityModel<f64>>,
                 records: &[MetricsRecord],
                 sampler_log: &[SamplerEvent],
                 last_good: &Option<(Vec<f64>, Option<Vec<f64>>)>,
                 collocation: &CollocationBatch<f64>,
                 wall: f64|
     -> TrainError {
        let mut d = density.clone();
        let mut v = velocity.clone();
        if let Some((dp, vp)) = last_good {
            d.params.data = dp.clone();
            if let (Some(v), Some(vp)) = (v.as_mut(), vp.as_ref()) {
                v.params.data = vp.clone();
            }
        }
        TrainError::Diverged {
            epoch,
            output: Box::new(TrainOutput {
                models: ModelSet { density: d, velocity: v },
                records: records.to_vec(),
                sampler_log: sampler_log.to_vec(),
                best_epoch: epoch,
                best_val: None,
                test_metric: None,
                final_kl: None,
                wall_s: wall,
                provenance_counts: collocation.provenance_counts(),
            }),
        }
    };

    // Program structure depends only on the architecture; rebuild at each
    // resampling event, not every step.
    let mut obs_prog = compile_obs(&density, velocity.as_ref());
    let mut res_prog = compile_residual(&spec, &density, velocity.as_ref(), spatial)?;

    for epoch in 0..epochs {
        if epoch > 0 && cfg.sampler.resample_every > 0 && epoch % cfg.sampler.resample_every == 0
        {
            let (batch, diag) = collocator.refresh(
                cfg,
                epoch,
                &density,
                velocity.as_ref(),
                &spec,
                Some(&collocation),
            )?;
            collocation = batch;
            col_rot = Rotation::new(
                collocation.len(),
                util::derive_seed_indexed(seed, "collocation-batches", epoch as u64),
            );
            if let Some(d) = diag {
                last_diag = Some(d);
                sampler_log.push(SamplerEvent { epoch, diag: d });
            }
            obs_prog = compile_obs(&density, velocity.as_ref());
            res_prog = compile_residual(&spec, &density, velocity.as_ref(), spatial)?;
        }

        let lr = lr_schedule(epoch, cfg.optimizer.lr, cfg.optimizer.decay, cfg.optimizer.min_lr);

        let obs_idx = obs_rot.next(cfg.optimizer.batch_obs);
        let col_idx = col_rot.next(cfg.optimizer.batch_collocation);
        let col_batch = if col_idx.len() == collocation.len() {
            collocation.clone()
        } else {
            collocation.select(&col_idx)
        };

        grads[0].fill(0.0);
        grads[1].fill(0.0);
        let (l_data, l_pde) = {
            let banks: [&[f64]; 2] = [
                &density.params.data,
                velocity.as_ref().map_or(&[] as &[f64], |v| &v.params.data),
            ];
            let l_data =
                obs_prog.loss_and_grad(&banks, &data.train, &obs_idx, data_weight, &mut grads)?;
            let (l_pde, _residuals) =
                res_prog.loss_and_grad(&banks, &col_batch, w_pde, &mut grads)?;
            (l_data, l_pde)
        };
        let (l_obs_part, l_init_part) = if kind == ExperimentKind::FokkerPlanck {
            (0.0, l_data)
        } else {
            (l_data, 0.0)
        };
        let l_total = w_obs * l_obs_part + w_pde * l_pde + w_init * l_init_part;
        if !l_total.is_finite() {
            return Err(abort(
                epoch,
                &density,
                &velocity,
                &records,
                &sampler_log,
                &last_good,
                &collocation,
                start.elapsed().as_secs_f64(),
            ));
        }

        let step_result = adam_d
            .step(&mut density.params.data, &grads[0], lr)
            .and_then(|()| match (&mut velocity, &mut adam_v) {
                (Some(v), Some(a)) => a.step(&mut v.params.data, &grads[1], lr),
                _ => Ok(()),
            });
        if let Err(TrainError::NanGradient { .. }) = step_result {
            return Err(abort(
                epoch,
                &density,
                &velocity,
                &records,
                &sampler_log,
                &last_good,
                &collocation,
                start.elapsed().as_secs_f64(),
            ));
        }
        step_result?;

        let at_eval = epoch % cfg.optimizer.eval_every == 0 || epoch + 1 == epochs;
        if at_eval {
            let (val_r2, kl) = match kind {
                ExperimentKind::FokkerPlanck => {
                    let kl = fp_eval
                        .as_ref()
                        .expect("fp eval inputs")
                        .kl(&density, &dom, false)?;
                    (None, Some(kl))
                }
                _ => (Some(val_metric(kind, &density, &data.val)?), None),
            };
            let metric = match kind {
                ExperimentKind::FokkerPlanck => kl,
                _ => val_r2,
            };
            if let Some(m) = metric {
                if best_val.is_none() || better(kind, m, best_val.unwrap()) {
                    best_val = Some(m);
                    best_epoch = epoch;
                    best_params = Some((
                        density.params.data.clone(),
                        velocity.as_ref().map(|v| v.params.data.clone()),
                    ));
                }
            }
            last_good = Some((
                density.params.data.clone(),
                velocity.as_ref().map(|v| v.params.data.clone()),
            ));
            records.push(MetricsRecord {
                epoch,
                loss_obs: l_obs_part + l_init_part,
                loss_pde: l_pde,
                loss_total: l_total,
                val_r2,
                kl,
                accept_rate: last_diag.map(|d| d.accept_rate),
                wall_s: if cfg.experiment.timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
            if cfg.optimizer.patience > 0 && epoch.saturating_sub(best_epoch) >= cfg.optimizer.patience
            {
                break;
            }
        }
    }

    // final-epoch KL before restoring the best checkpoint
    let final_kl = match (&fp_eval, kind) {
        (Some(f), ExperimentKind::FokkerPlanck) => Some(f.kl(&density, &dom, true)?),
        _ => None,
    };

    if let Some((dp, vp)) = &best_params {
        density.params.data = dp.clone();
        if let (Some(v), Some(vp)) = (velocity.as_mut(), vp.as_ref()) {
            v.params.data = vp.clone();
        }
    }

    let test_metric = match kind {
        ExperimentKind::FokkerPlanck => final_kl,
        _ => {
            if data.test.is_empty() {
                None
            } else {
                Some(val_metric(kind, &density, &data.test)?)
            }
        }
    };

    Ok(TrainOutput {
        provenance_counts: collocation.provenance_counts(),
        models: ModelSet { density, velocity },
        records,
        sampler_log,
        best_epoch,
        best_val,
        test_metric,
        final_kl,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
