use pdpinn::autodiff::{Pack, TapeBuf};
use pdpinn::datagen::fp;
use pdpinn::fieldnet::*;
use pdpinn::pde::*;
use std::time::Instant;

fn main() {
    let env = fit_envelope(
        &(0..100).map(|i| vec![-1.5 + 3.0 * i as f64 / 99.0]).collect::<Vec<_>>(),
        0.5,
    ).unwrap();
    let density = DensityModel::init(
        MlpConfig {
            input_dim: 2, output_dim: 1, hidden_layers: 5, hidden_units: 64,
            activation: ActivationKind::Sine, omega0: 12.0, seed: 1,
        },
        vec![(1.0, 0.0), (2.0 / 3.0, 0.0)],
        env, 1e3,
    ).unwrap();
    let spec = PdeSpec::FokkerPlanck {
        drift: DriftFn::SineOfTime { amplitude: 1.0, frequency: 10.0 },
        diffusion: fp::FP_DIFFUSION,
    };
    let prog = compile_residual(&spec, &density, None::<&ConstVelocity<f64>>, 1).unwrap();
    println!("residual graph: {:?}", prog.tape.op_stats());
    let banks: [&[f64]; 2] = [&density.params.data, &[]];

    // forward-only cost at different lane widths
    let mut buf1: TapeBuf<f64> = TapeBuf::new();
    let reps = 2000usize;
    prog.tape.forward(&mut buf1, &banks, &[0.3, 0.2]);
    let t = Instant::now();
    for i in 0..reps {
        prog.tape.forward(&mut buf1, &banks, &[0.3 + i as f64 * 1e-7, 0.2]);
    }
    let per1 = t.elapsed().as_secs_f64() * 1e9 / reps as f64;
    println!("scalar fwd: {:.0} ns/point", per1);

    let mut buf8: TapeBuf<Pack<f64, 8>> = TapeBuf::new();
    let ins8 = [Pack::splat(0.3), Pack::splat(0.2)];
    prog.tape.forward(&mut buf8, &banks, &ins8);
    let t = Instant::now();
    for _ in 0..reps / 8 {
        prog.tape.forward(&mut buf8, &banks, &ins8);
    }
    let per8 = t.elapsed().as_secs_f64() * 1e9 / (reps / 8) as f64;
    println!("pack8 fwd: {:.0} ns/pack = {:.0} ns/point", per8, per8 / 8.0);

    let mut buf4: TapeBuf<Pack<f64, 4>> = TapeBuf::new();
    let ins4 = [Pack::splat(0.3), Pack::splat(0.2)];
    prog.tape.forward(&mut buf4, &banks, &ins4);
    let t = Instant::now();
    for _ in 0..reps / 4 {
        prog.tape.forward(&mut buf4, &banks, &ins4);
    }
    let per4 = t.elapsed().as_secs_f64() * 1e9 / (reps / 4) as f64;
    println!("pack4 fwd: {:.0} ns/pack = {:.0} ns/point", per4, per4 / 4.0);
}
