//! The four subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdpinn::datagen::fp;
use pdpinn::fieldnet::{load_models, save_models, ModelSet};
use pdpinn::pde::Provenance;
use pdpinn::sampling::Domain;
use pdpinn::training::{
    self, mass_projection, write_metrics_csv, ExperimentConfig, ExperimentKind, TrainError,
    TrainOutput,
};

use crate::config_io::{config_hash, dataset_hash, load_config, parse_seed_range};

pub fn gen_data(config: &Path, overrides: &[String], out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config, overrides)?;
    if let Some(dir) = &out {
        cfg.experiment.data_dir = dir.display().to_string();
    }
    let dir = PathBuf::from(&cfg.experiment.data_dir);
    let summary = training::generate_dataset(&cfg, &dir)?;
    println!(
        "wrote {} files to {} (train {} / val {} / test {})",
        summary.files.len(),
        dir.display(),
        summary.n_train,
        summary.n_val,
        summary.n_test
    );
    if let Some(mass) = summary.total_mass {
        println!("total simulated mass: {mass}");
    }
    if let Some(sigma) = summary.noise_sigma {
        println!("measurement noise sigma: {sigma}");
    }
    Ok(())
}

fn write_run_outputs(
    run_dir: &Path,
    cfg: &ExperimentConfig,
    config_path: &Path,
    out: &TrainOutput,
) -> Result<()> {
    std::fs::create_dir_all(run_dir)?;
    write_metrics_csv(&run_dir.join("metrics.csv"), &out.records)?;
    save_models(&run_dir.join("checkpoint.bin"), &out.models)?;

    let mut sampler_csv = String::from("epoch,accept_rate,swap_rate,divergences,step_size\n");
    for ev in &out.sampler_log {
        sampler_csv.push_str(&format!(
            "{},{:?},{:?},{},{:?}\n",
            ev.epoch, ev.diag.accept_rate, ev.diag.swap_rate, ev.diag.divergences,
            ev.diag.step_size
        ));
    }
    std::fs::write(run_dir.join("sampler.csv"), sampler_csv)?;

    let summary = serde_json::json!({
        "config": cfg,
        "config_hash": config_hash(cfg),
        "dataset_hash": dataset_hash(Path::new(&cfg.experiment.data_dir)),
        "best_epoch": out.best_epoch,
        "best_val": out.best_val,
        "test_metric": out.test_metric,
        "final_kl": out.final_kl,
        "wall_s": out.wall_s,
        "collocation_provenance": {
            "background": out.provenance_counts[0],
            "model_density": out.provenance_counts[1],
            "uniform": out.provenance_counts[2],
            "refined": out.provenance_counts[3],
        },
    });
    std::fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    let manifest = serde_json::json!({
        "config_path": config_path.display().to_string(),
        "config_hash": config_hash(cfg),
        "dataset_hash": dataset_hash(Path::new(&cfg.experiment.data_dir)),
        "out_dir": run_dir.display().to_string(),
        "created_unix": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    std::fs::write(
        run_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn train(
    config: &Path,
    overrides: &[String],
    seeds: Option<&str>,
    out: &Path,
) -> Result<()> {
    let base = load_config(config, overrides)?;
    let seed_range = match seeds {
        Some(s) => parse_seed_range(s)?,
        None => base.experiment.seed..=base.experiment.seed,
    };
    for seed in seed_range {
        let mut cfg = base.clone();
        cfg.experiment.seed = seed;
        let run_dir = out.join(&cfg.experiment.name).join(seed.to_string());
        let data = training::load_dataset(&cfg)
            .with_context(|| "loading dataset (run gen-data first?)")?;
        match training::train(&cfg, &data) {
            Ok(outp) => {
                write_run_outputs(&run_dir, &cfg, config, &outp)?;
                println!(
                    "seed {seed}: best epoch {} (val {:?}), test metric {:?} -> {}",
                    outp.best_epoch,
                    outp.best_val,
                    outp.test_metric,
                    run_dir.display()
                );
            }
            Err(TrainError::Diverged { epoch, output }) => {
                write_run_outputs(&run_dir, &cfg, config, &output)?;
                std::fs::write(
                    run_dir.join("diagnostics.json"),
                    serde_json::to_string_pretty(&serde_json::json!({
                        "aborted": true,
                        "reason": "non-finite loss or gradient",
                        "epoch": epoch,
                    }))?,
                )?;
                bail!("training diverged at epoch {epoch}; last good state persisted in {}",
                    run_dir.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn grid_points(dom: &Domain<f64>, per_dim: usize, n_times: usize) -> Vec<Vec<f64>> {
    let bounds = dom.fully_bounded().expect("eval grids need a bounded box");
    let mut pts = Vec::new();
    let (t0, t1) = bounds[0];
    let spatial = &bounds[1..];
    let mut idx = vec![0usize; spatial.len()];
    for ti in 0..n_times {
        let t = t0 + (t1 - t0) * ti as f64 / (n_times.max(2) - 1) as f64;
        idx.fill(0);
        loop {
            let mut p = vec![t];
            for (d, &(a, b)) in spatial.iter().enumerate() {
                p.push(a + (b - a) * idx[d] as f64 / (per_dim - 1) as f64);
            }
            pts.push(p);
            let mut d = 0;
            loop {
                if d == idx.len() {
                    break;
                }
                idx[d] += 1;
                if idx[d] < per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
    }
    pts
}

pub fn eval(
    checkpoint: &Path,
    config: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let set: ModelSet<f64> = load_models(checkpoint)?;
    let kind = cfg.experiment.kind;
    if set.density.spatial_dim() != kind.spatial_dim() {
        bail!(
            "checkpoint has {} spatial dims, config wants {}",
            set.density.spatial_dim(),
            kind.spatial_dim()
        );
    }
    let out_dir = out.unwrap_or_else(|| {
        checkpoint.parent().unwrap_or(Path::new(".")).join("plots")
    });
    std::fs::create_dir_all(&out_dir)?;

    let dom = cfg.domain.to_domain();
    let eval_box: Vec<(f64, f64)> = cfg.domain.rescale_box((-3.0, 3.0));

    // prediction grid CSV: t, x[, y[, z]], value
    let per_dim = match kind.spatial_dim() {
        1 => 201,
        2 => 41,
        _ => 17,
    };
    let pts = grid_points(
        &Domain::bounded(dom.t, &eval_box),
        per_dim,
        9,
    );
    let mut pred_csv = String::new();
    pred_csv.push_str(match kind.spatial_dim() {
        1 => "t,x,value\n",
        2 => "t,x,y,value\n",
        _ => "t,x,y,z,value\n",
    });
    for p in &pts {
        let v = set.density.forward(p);
        let coords: Vec<String> = p.iter().map(|c| format!("{c:?}")).collect();
        pred_csv.push_str(&format!("{},{:?}\n", coords.join(","), v));
    }
    std::fs::write(out_dir.join("prediction.csv"), pred_csv)?;

    // projections over the last spatial axis (z in 3D, x otherwise)
    let axis = if kind.spatial_dim() == 3 { 2 } else { 0 };
    let times: Vec<f64> = (0..9)
        .map(|i| dom.t.0 + (dom.t.1 - dom.t.0) * i as f64 / 8.0)
        .collect();
    let proj = mass_projection(
        |p| set.density.forward(p),
        &eval_box,
        48,
        &times,
        axis,
    );
    proj.write_csv(
        &out_dir.join("projection.csv"),
        ["x", "y", "z"][axis],
    )?;

    // test metric
    let mut lines = vec![format!("config_hash {}", config_hash(&cfg))];
    match kind {
        ExperimentKind::FokkerPlanck => {
            let fp_eval_seed = pdpinn::util::derive_seed(cfg.experiment.seed, "eval-kl");
            let mut rng = pdpinn::util::rng_from(fp_eval_seed);
            let kl = training::kl_estimate(
                || {
                    let t = pdpinn::util::draw_uniform(&mut rng, fp::FP_T0, fp::FP_T1);
                    let x = fp::fp_mean(t)
                        + fp::fp_var(t).sqrt() * pdpinn::util::draw_normal::<f64, _>(&mut rng);
                    vec![t, x]
                },
                |p: &[f64]| fp::fp_log_pdf_joint(p[0], p[1]),
                |p: &[f64]| set.density.forward(p),
                &dom,
                10_000,
                &[24, 360],
            )?;
            println!("kl {kl}");
            lines.push(format!("kl {kl:?}"));

            // log-density over the central crop, for side-by-side plots
            let mut crop = String::from("t,x,log_density\n");
            for ti in 0..81 {
                let t = -1.0 + 2.0 * ti as f64 / 80.0;
                for xi in 0..101 {
                    let x = -0.5 + ti_frac(xi, 101);
                    let v = (set.density.forward(&[t, x]).max(0.0)
                        + pdpinn::sampling::DENSITY_FLOOR)
                        .ln();
                    crop.push_str(&format!("{t:?},{x:?},{v:?}\n"));
                }
            }
            std::fs::write(out_dir.join("log_density_crop.csv"), crop)?;
        }
        _ => {
            if let Ok(data) = training::load_dataset(&cfg) {
                if !data.test.is_empty() {
                    let pred: Vec<f64> = data
                        .test
                        .iter()
                        .map(|o| {
                            let v = set.density.forward(&o.point());
                            if kind == ExperimentKind::Heat {
                                v
                            } else {
                                v.max(0.0).sqrt()
                            }
                        })
                        .collect();
                    let truth: Vec<f64> = data
                        .test
                        .iter()
                        .map(|o| {
                            if kind == ExperimentKind::Heat {
                                o.rho
                            } else {
                                o.rho.max(0.0).sqrt()
                            }
                        })
                        .collect();
                    let r2 = training::r2_explained_variance(&pred, &truth)?;
                    println!("test_r2 {r2}");
                    lines.push(format!("test_r2 {r2:?}"));
                }
            }
        }
    }
    std::fs::write(out_dir.join("metrics.txt"), lines.join("\n") + "\n")?;
    println!("eval outputs in {}", out_dir.display());
    Ok(())
}

fn ti_frac(i: usize, n: usize) -> f64 {
    i as f64 / (n - 1) as f64
}

pub fn sample_debug(
    checkpoint: &Path,
    config: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
) -> Result<()> {
    use pdpinn::sampling::{
        inverse_transform_sample, mh_sample, sobol_uniform, HmcOptions, MhOptions, ModelTarget,
    };
    use pdpinn::training::SamplerKind;

    let cfg = load_config(config, overrides)?;
    let set: ModelSet<f64> = load_models(checkpoint)?;
    let dom = cfg.domain.to_domain();
    let out_dir = out.unwrap_or_else(|| PathBuf::from("sample-debug"));
    std::fs::create_dir_all(&out_dir)?;
    let s = &cfg.sampler;
    let n = s.n_collocation;
    let seed = pdpinn::util::derive_seed(cfg.experiment.seed, "sample-debug");
    let mut rng = pdpinn::util::rng_from(seed);
    let target = ModelTarget::new(&set.density);

    let (batch, diag) = match s.kind {
        SamplerKind::Uniform => (sobol_uniform(n, &dom)?, None),
        SamplerKind::It => (
            inverse_transform_sample(n, &target, &dom, s.it_grid, &mut rng)?,
            None,
        ),
        SamplerKind::Mh => {
            let opts = MhOptions {
                chains: s.chains,
                ladder: s.ladder.clone(),
                burn_in: s.burn_in,
                thin: s.thin,
                seed,
                ..Default::default()
            };
            let (b, d) = mh_sample(n, &target, &dom, &opts, None)?;
            (b, Some(d))
        }
        SamplerKind::Hmc => {
            let opts = HmcOptions {
                chains: s.chains,
                ladder: s.ladder.clone(),
                leapfrog_steps: s.leapfrog_steps,
                target_accept: s.target_accept,
                burn_in: s.burn_in,
                thin: s.thin,
                seed,
                ..Default::default()
            };
            let (b, r) = pdpinn::sampling::hmc_sample(n, &target, &dom, &opts, None)?;
            (b, Some(r.diag))
        }
        other => bail!("sample-debug supports uniform/it/mh/hmc, not {other:?}"),
    };

    let mut csv = String::new();
    let dim = batch.dim();
    csv.push_str(match dim {
        2 => "t,x,provenance\n",
        3 => "t,x,y,provenance\n",
        _ => "t,x,y,z,provenance\n",
    });
    for i in 0..batch.len() {
        let coords: Vec<String> = batch.point(i).iter().map(|c| format!("{c:?}")).collect();
        let prov = match batch.provenance(i) {
            Provenance::Background => "background",
            Provenance::ModelDensity => "model_density",
            Provenance::Uniform => "uniform",
            Provenance::Refined => "refined",
        };
        csv.push_str(&format!("{},{prov}\n", coords.join(",")));
    }
    std::fs::write(out_dir.join("draws.csv"), csv)?;
    if let Some(d) = diag {
        println!(
            "accept_rate {:.3} swap_rate {:.3} divergences {} step_size {:.4}",
            d.accept_rate, d.swap_rate, d.divergences, d.step_size
        );
        std::fs::write(
            out_dir.join("diag.csv"),
            format!(
                "accept_rate,swap_rate,divergences,step_size\n{:?},{:?},{},{:?}\n",
                d.accept_rate, d.swap_rate, d.divergences, d.step_size
            ),
        )?;
    }
    println!("wrote {} draws to {}", batch.len(), out_dir.display());
    Ok(())
}
