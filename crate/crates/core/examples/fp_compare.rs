// dev driver: compare collocation samplers on the forward drift-diffusion
// problem; prints final KL per (method, seed)
use pdpinn::fieldnet::ActivationKind;
use pdpinn::sampling::BackgroundMode;
use pdpinn::training::{self, config::*};

fn fp_config(sampler: SamplerKind, seed: u64, epochs: usize, batch: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            kind: ExperimentKind::FokkerPlanck,
            name: format!("fp-{sampler:?}-{seed}"),
            seed,
            data_dir: "/tmp/fp-cmp-data".into(),
            timing: false,
        },
        domain: DomainSection { t: [-1.0, 1.0], x: vec![ExtentCfg::Box([-1.5, 1.5])] },
        density_net: NetSection { hidden_layers: 5, hidden_units: 64, activation: ActivationKind::Sine, omega0: 12.0 },
        velocity_net: None,
        envelope: EnvelopeSection { c: 0.5, c_max: 1e3 },
        sampler: SamplerSection {
            kind: sampler,
            n_collocation: 5000,
            resample_every: 500,
            warmup_epochs: 500,
            ramp_epochs: 1000,
            final_density_fraction: 0.9,
            background: BackgroundMode::Uniform,
            chains: 32,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            burn_in: 200,
            thin: 4,
            leapfrog_steps: 12,
            target_accept: 0.75,
            it_grid: 96,
            ot_j: None,
        },
        optimizer: OptimizerSection {
            lr: std::env::var("LR").map(|s| s.parse().unwrap()).unwrap_or(3e-4),
            decay: 1.0, min_lr: 0.0,
            batch_obs: batch, batch_collocation: batch,
            epochs, patience: 0, eval_every: 500,
        },
        loss: LossSection {
            w_obs: 1.0,
            w_pde: std::env::var("W2").map(|s| s.parse().unwrap()).unwrap_or(0.1),
            w_init: std::env::var("W4").map(|s| s.parse().unwrap()).unwrap_or(1.0),
        },
        mass_data: None, heat_data: None,
        fp_data: Some(pdpinn::datagen::fp::FpDataConfig { n_init: 5000, seed: 0 }),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5000);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(256);
    let seeds: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let methods: Vec<SamplerKind> = args.get(4).map(|s| {
        s.split(',').map(|m| match m {
            "uniform" => SamplerKind::Uniform,
            "rar" => SamplerKind::Rar,
            "ot_rar" => SamplerKind::OtRar,
            "it" => SamplerKind::It,
            "mh" => SamplerKind::Mh,
            "hmc" => SamplerKind::Hmc,
            "true_pdf" => SamplerKind::TruePdf,
            other => panic!("unknown method {other}"),
        }).collect()
    }).unwrap_or_else(|| vec![SamplerKind::Uniform, SamplerKind::Mh, SamplerKind::TruePdf]);

    let gen_cfg = fp_config(SamplerKind::Uniform, 0, 1, 1);
    training::generate_dataset(&gen_cfg, std::path::Path::new("/tmp/fp-cmp-data")).unwrap();
    let data = training::load_dataset(&gen_cfg).unwrap();

    println!("epochs={epochs} batch={batch} lr={} w2={} w4={}",
        std::env::var("LR").unwrap_or("3e-4".into()),
        std::env::var("W2").unwrap_or("0.1".into()),
        std::env::var("W4").unwrap_or("1.0".into()));
    for &m in &methods {
        for seed in 0..seeds {
            let t = std::time::Instant::now();
            let cfg = fp_config(m, seed, epochs, batch);
            match training::train(&cfg, &data) {
                Ok(out) => {
                    let traj: Vec<String> = out.records.iter().filter_map(|r| r.kl).map(|k| format!("{k:.3}")).collect();
                    println!("{m:?} seed {seed}: final_kl {:.4} best {:.4} [{}] ({:.0}s)",
                        out.final_kl.unwrap(), out.best_val.unwrap(), traj.join(" "), t.elapsed().as_secs_f64());
                }
                Err(e) => println!("{m:?} seed {seed}: ERROR {e}"),
            }
        }
    }
}
