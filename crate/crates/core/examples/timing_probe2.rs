// fine-grained timing of the FP training step pieces
use pdpinn::datagen::fp;
use pdpinn::fieldnet::*;
use pdpinn::pde::*;
use pdpinn::sampling::{sobol_uniform, Domain};
use std::time::Instant;

fn main() {
    let env = fit_envelope(
        &(0..100).map(|i| vec![-1.5 + 3.0 * i as f64 / 99.0]).collect::<Vec<_>>(),
        0.5,
    )
    .unwrap();
    let density = DensityModel::init(
        MlpConfig {
            input_dim: 2, output_dim: 1, hidden_layers: 5, hidden_units: 64,
            activation: ActivationKind::Sine, omega0: 12.0, seed: 1,
        },
        vec![(1.0, 0.0), (2.0 / 3.0, 0.0)],
        env, 1e3,
    )
    .unwrap();
    let spec = PdeSpec::FokkerPlanck {
        drift: DriftFn::SineOfTime { amplitude: 1.0, frequency: 10.0 },
        diffusion: fp::FP_DIFFUSION,
    };
    let dom = Domain::bounded((-1.0, 1.0), &[(-1.5, 1.5)]);
    let batch = sobol_uniform(512, &dom).unwrap();

    // compile cost
    let t = Instant::now();
    let mut progs = Vec::new();
    for _ in 0..50 {
        progs.push(compile_residual(&spec, &density, None::<&ConstVelocity<f64>>, 1).unwrap());
    }
    println!("compile_residual: {:.2} ms (graph nodes: {})", t.elapsed().as_secs_f64() * 1000.0 / 50.0, progs[0].tape.len());

    let prog = &progs[0];
    let banks: [&[f64]; 2] = [&density.params.data, &[]];
    let mut grads = [vec![0.0; density.params.data.len()], vec![]];

    // warm
    let _ = prog.loss_and_grad(&banks, &batch, 1.0, &mut grads).unwrap();
    let t = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        grads[0].fill(0.0);
        let _ = prog.loss_and_grad(&banks, &batch, 1.0, &mut grads).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() * 1000.0 / reps as f64;
    println!("pde loss+grad 512 pts: {dt:.2} ms ({:.1} us/pt)", dt * 1000.0 / 512.0);

    // eval only
    let t = Instant::now();
    for _ in 0..reps {
        let _ = prog.eval_batch(&banks, &batch);
    }
    println!("pde eval 512 pts: {:.2} ms", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    // obs program
    let obs_prog = compile_obs(&density, None);
    let rows: Vec<_> = (0..512)
        .map(|i| pdpinn::datagen::SensorObservation {
            t: -1.0, pos: vec![-1.5 + 3.0 * i as f64 / 511.0], layer: 0,
            rho: 1.0, vel: vec![],
        })
        .collect();
    let idx: Vec<usize> = (0..512).collect();
    let _ = obs_prog.loss_and_grad(&banks, &rows, &idx, 1.0, &mut grads).unwrap();
    let t = Instant::now();
    for _ in 0..reps {
        grads[0].fill(0.0);
        let _ = obs_prog.loss_and_grad(&banks, &rows, &idx, 1.0, &mut grads).unwrap();
    }
    println!("obs loss+grad 512 pts: {:.2} ms (graph nodes: {})", t.elapsed().as_secs_f64() * 1000.0 / reps as f64, obs_prog.tape.len());
}
