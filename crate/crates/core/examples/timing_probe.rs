// timing probe for the FP experiment step cost
use pdpinn::training::{self, config::*};
use pdpinn::training::{ExperimentConfig, ExperimentKind, SamplerKind};
use pdpinn::fieldnet::ActivationKind;
use pdpinn::sampling::BackgroundMode;

fn fp_config(sampler: SamplerKind, seed: u64, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            kind: ExperimentKind::FokkerPlanck,
            name: "fp-probe".into(),
            seed,
            data_dir: "/tmp/fp-probe-data".into(),
            timing: true,
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
            ramp_epochs: 500,
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
            lr: 2e-4, decay: 1.0, min_lr: 0.0,
            batch_obs: 512, batch_collocation: 512,
            epochs, patience: 0, eval_every: 250,
        },
        loss: LossSection { w_obs: 1.0, w_pde: 1.0, w_init: 1.0 },
        mass_data: None, heat_data: None,
        fp_data: Some(pdpinn::datagen::fp::FpDataConfig { n_init: 5000, seed }),
    }
}

fn main() {
    let cfg = fp_config(SamplerKind::Mh, 0, 1000);
    let dir = std::path::Path::new("/tmp/fp-probe-data");
    let summary = training::generate_dataset(&cfg, dir).unwrap();
    println!("generated: {} train rows", summary.n_train);
    let data = training::load_dataset(&cfg).unwrap();
    let t0 = std::time::Instant::now();
    let out = training::train(&cfg, &data).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("1000 epochs in {dt:.1}s -> {:.2} ms/epoch", dt * 1000.0 / 1000.0);
    println!("records: {}; last kl: {:?}", out.records.len(), out.records.last().map(|r| r.kl));
    println!("final_kl {:?} best {:?} prov {:?}", out.final_kl, out.best_val, out.provenance_counts);
}
