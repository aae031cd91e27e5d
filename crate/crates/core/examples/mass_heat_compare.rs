// dev driver: mass-conservation 2D and heat comparisons
use pdpinn::fieldnet::ActivationKind;
use pdpinn::sampling::BackgroundMode;
use pdpinn::training::{self, config::*};

fn mass2d_config(sampler: SamplerKind, seed: u64, n_col: usize) -> ExperimentConfig {
    let unbounded = sampler.is_density_based();
    // the flow carries mass far past the sensed region; a fair uniform
    // baseline must regularize everywhere the model is evaluated
    let x = if unbounded {
        vec![ExtentCfg::Keyword(ExtentKeyword::Unbounded); 2]
    } else {
        vec![ExtentCfg::Box([-5.0, 5.0]), ExtentCfg::Box([-5.0, 5.0])]
    };
    ExperimentConfig {
        experiment: ExperimentSection {
            kind: ExperimentKind::Mass2d,
            name: format!("mass2d-{sampler:?}-{n_col}-{seed}"),
            seed,
            data_dir: "/tmp/mass2d-data".into(),
            timing: false,
        },
        domain: DomainSection { t: [0.0, 3.0], x },
        density_net: NetSection { hidden_layers: 2, hidden_units: 128, activation: ActivationKind::Sine, omega0: 12.0 },
        velocity_net: Some(NetSection { hidden_layers: 1, hidden_units: 64, activation: ActivationKind::Sine, omega0: 12.0 }),
        envelope: EnvelopeSection { c: 6.0, c_max: 1e6 },
        sampler: SamplerSection {
            kind: sampler,
            n_collocation: n_col,
            resample_every: 50,
            warmup_epochs: 50,
            ramp_epochs: 100,
            final_density_fraction: 0.9,
            background: BackgroundMode::Gaussian,
            chains: 32,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            burn_in: 150,
            thin: 4,
            leapfrog_steps: 12,
            target_accept: 0.75,
            it_grid: 64,
            ot_j: None,
        },
        optimizer: OptimizerSection {
            lr: std::env::var("LR").map(|s| s.parse().unwrap()).unwrap_or(8e-4),
            decay: 0.99, min_lr: 0.0,
            batch_obs: 0, batch_collocation: 0,
            epochs: std::env::var("EPOCHS").map(|s| s.parse().unwrap()).unwrap_or(500),
            patience: 0, eval_every: 50,
        },
        loss: LossSection {
            w_obs: 1.0,
            w_pde: std::env::var("W2").map(|s| s.parse().unwrap()).unwrap_or(0.01),
            w_init: 0.0,
        },
        mass_data: Some(pdpinn::datagen::mass::MassDataConfig {
            n_parcels: 20_000,
            steps: 200,
            test_range: Some((-5.0, 5.0)),
            test_grid: 41,
            ..Default::default()
        }),
        heat_data: None, fp_data: None,
    }
}

fn heat_config(sampler: SamplerKind, seed: u64, n_col: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            kind: ExperimentKind::Heat,
            name: format!("heat-{sampler:?}-{n_col}-{seed}"),
            seed,
            data_dir: "/tmp/heat-data".into(),
            timing: false,
        },
        domain: DomainSection { t: [0.0, 0.2], x: vec![ExtentCfg::Box([-2.0, 2.0]), ExtentCfg::Box([-2.0, 2.0])] },
        density_net: NetSection { hidden_layers: 2, hidden_units: 32, activation: ActivationKind::Tanh, omega0: 1.0 },
        velocity_net: None,
        envelope: EnvelopeSection { c: 0.5, c_max: 1e3 },
        sampler: SamplerSection {
            kind: sampler,
            n_collocation: n_col,
            resample_every: 500,
            warmup_epochs: 500,
            ramp_epochs: 500,
            final_density_fraction: 0.9,
            background: BackgroundMode::Uniform,
            chains: 32,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            burn_in: 150,
            thin: 4,
            leapfrog_steps: 12,
            target_accept: 0.75,
            it_grid: 48,
            ot_j: None,
        },
        optimizer: OptimizerSection {
            lr: std::env::var("LR").map(|s| s.parse().unwrap()).unwrap_or(1e-4),
            decay: 0.9999, min_lr: 1e-5,
            batch_obs: 0, batch_collocation: 0,
            epochs: std::env::var("EPOCHS").map(|s| s.parse().unwrap()).unwrap_or(12_000),
            patience: 3000, eval_every: 100,
        },
        loss: LossSection {
            w_obs: 1.0,
            w_pde: std::env::var("W2").map(|s| s.parse().unwrap()).unwrap_or(0.1),
            w_init: 0.0,
        },
        mass_data: None,
        heat_data: Some(pdpinn::datagen::heat::HeatDataConfig::default()),
        fp_data: None,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).cloned().unwrap_or_else(|| "mass".into());
    let n_col: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(512);
    let seeds: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let methods: Vec<SamplerKind> = args.get(4).map(|s| {
        s.split(',').map(|m| match m {
            "uniform" => SamplerKind::Uniform,
            "rar" => SamplerKind::Rar,
            "ot_rar" => SamplerKind::OtRar,
            "it" => SamplerKind::It,
            "mh" => SamplerKind::Mh,
            "hmc" => SamplerKind::Hmc,
            other => panic!("unknown {other}"),
        }).collect()
    }).unwrap_or_else(|| vec![SamplerKind::Uniform, SamplerKind::Mh]);

    let gen = if what == "mass" { mass2d_config(SamplerKind::Uniform, 0, 1) } else { heat_config(SamplerKind::Uniform, 0, 1) };
    let dir = std::path::PathBuf::from(&gen.experiment.data_dir);
    if !dir.join("train.csv").exists() {
        let s = training::generate_dataset(&gen, &dir).unwrap();
        println!("generated {} train / {} val / {} test", s.n_train, s.n_val, s.n_test);
    }
    let data = training::load_dataset(&gen).unwrap();

    for &m in &methods {
        for seed in 0..seeds {
            let cfg = if what == "mass" { mass2d_config(m, seed, n_col) } else { heat_config(m, seed, n_col) };
            let t = std::time::Instant::now();
            match training::train(&cfg, &data) {
                Ok(out) => println!(
                    "{what} {m:?} n={n_col} seed {seed}: test_r2 {:.4} best_val {:.4} best_ep {} ({:.0}s)",
                    out.test_metric.unwrap_or(f64::NAN), out.best_val.unwrap_or(f64::NAN), out.best_epoch,
                    t.elapsed().as_secs_f64()
                ),
                Err(e) => println!("{what} {m:?} n={n_col} seed {seed}: ERROR {e}"),
            }
        }
    }
}
