//! End-to-end checks of the command-line surface: config validation before
//! side effects, deterministic outputs, override and seed fan-out
//! semantics.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdpinn"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("pdpinn-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_fp_config(dir: &Path, data_dir: &Path) -> PathBuf {
    let path = dir.join("fp.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[experiment]
kind = "fokker_planck"
name = "fp-tiny"
seed = 3
data_dir = "{data}"

[domain]
t = [-1.0, 1.0]
x = [[-1.5, 1.5]]

[density_net]
hidden_layers = 2
hidden_units = 12
activation = "sine"
omega0 = 8.0

[sampler]
kind = "mh"
n_collocation = 96
resample_every = 30
warmup_epochs = 15
ramp_epochs = 15
final_density_fraction = 0.9
background = "uniform"
chains = 8
ladder = [1.0, 0.5]
burn_in = 40
thin = 2

[optimizer]
lr = 3e-4
epochs = 61
eval_every = 20
batch_obs = 48
batch_collocation = 48

[loss]
w_obs = 1.0
w_pde = 0.1
w_init = 1.0

[fp_data]
n_init = 300
seed = 3
"#,
            data = data_dir.display()
        ),
    )
    .unwrap();
    path
}

fn write_heat_config(dir: &Path, data_dir: &Path) -> PathBuf {
    let path = dir.join("heat.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[experiment]
kind = "heat"
name = "heat-tiny"
seed = 5
data_dir = "{data}"

[domain]
t = [0.0, 0.2]
x = [[-1.0, 1.0], [-1.0, 1.0]]

[density_net]
hidden_layers = 1
hidden_units = 8
activation = "tanh"

[sampler]
kind = "uniform"
n_collocation = 64

[optimizer]
lr = 1e-3
epochs = 5
eval_every = 2

[loss]
w_pde = 0.1

[heat_data]
grid = 41
box_range = [-2.0, 2.0]
alpha = 0.1
t_end = 0.2
source_center = [-0.35, -0.25]
source_radius = 0.3
n_train = 150
train_spread = 0.55
eval_halfwidth = 1.0
eval_grid = 7
n_val_times = 3
n_test_times = 4
seed = 5
"#,
            data = data_dir.display()
        ),
    )
    .unwrap();
    path
}

fn write_mass_config(dir: &Path, data_dir: &Path) -> PathBuf {
    let path = dir.join("mass.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[experiment]
kind = "mass2d"
name = "mass-tiny"
seed = 11
data_dir = "{data}"

[domain]
t = [0.0, 3.0]
x = [[-3.0, 3.0], [-3.0, 3.0]]

[density_net]
hidden_layers = 1
hidden_units = 16
activation = "sine"
omega0 = 12.0

[velocity_net]
hidden_layers = 1
hidden_units = 8
activation = "sine"
omega0 = 12.0

[sampler]
kind = "uniform"
n_collocation = 64

[optimizer]
lr = 8e-4
epochs = 4
eval_every = 2

[loss]
w_pde = 0.01

[mass_data]
dim = 2
n_parcels = 800
steps = 20
t_end = 3.0
n_times = 4
sensor_per_side = 7
sensor_range = [-3.0, 3.0]
sensor_radius = 0.25
noise_rel = 0.02
test_grid = 7
seed = 11
"#,
            data = data_dir.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn heat_gen_data_writes_disjoint_splits() {
    let dir = tmp("heat-gen");
    let data = dir.join("data");
    let cfg = write_heat_config(&dir, &data);
    let out = bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.csv", "val.csv", "test.csv", "meta.json"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    let key_rows = |name: &str| -> std::collections::HashSet<String> {
        std::fs::read_to_string(data.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect()
    };
    let val = key_rows("val.csv");
    let test = key_rows("test.csv");
    assert!(val.is_disjoint(&test), "val and test share spacetime points");
}

#[test]
fn mass_gen_data_is_byte_deterministic() {
    let dir = tmp("mass-gen");
    let data = dir.join("data");
    let cfg = write_mass_config(&dir, &data);
    let run = || {
        let out = bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(data.join("train.csv")).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn fp_gen_data_is_initial_condition_only() {
    let dir = tmp("fp-gen");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    let out = bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    assert!(data.join("train.csv").exists());
    assert!(!data.join("val.csv").exists());
    assert!(!data.join("test.csv").exists());
    let body = std::fs::read_to_string(data.join("train.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "t,x,layer,rho");
    for l in lines {
        assert!(l.starts_with("-1.0,"), "non-initial row: {l}");
    }
}

#[test]
fn train_writes_outputs_and_is_deterministic_and_overridable() {
    let dir = tmp("fp-train");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    assert!(bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap().status.success());

    let runs_a = dir.join("runs-a");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&runs_a)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = runs_a.join("fp-tiny").join("3");
    for f in ["metrics.csv", "summary.json", "checkpoint.bin", "sampler.csv", "manifest.json"] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,loss_obs,loss_pde,loss_total,val_r2,kl,accept_rate,wall_s"));
    // kl column populated for the forward problem
    let second = metrics.lines().nth(1).unwrap();
    let kl_field = second.split(',').nth(5).unwrap();
    assert!(!kl_field.is_empty(), "kl column empty: {second}");

    // identical rerun -> identical metrics bytes
    let runs_b = dir.join("runs-b");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&runs_b)
        .output()
        .unwrap()
        .status
        .success());
    let a = std::fs::read(run_dir.join("metrics.csv")).unwrap();
    let b = std::fs::read(runs_b.join("fp-tiny/3/metrics.csv")).unwrap();
    assert_eq!(a, b);

    // --override swaps only the sampler
    let runs_c = dir.join("runs-c");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--override", "sampler=uniform", "--out"])
        .arg(&runs_c)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(runs_c.join("fp-tiny/3/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["sampler"]["kind"], "uniform");
    assert_eq!(summary["config"]["optimizer"]["epochs"], 61);
}

#[test]
fn train_seed_fanout_makes_one_directory_per_seed() {
    let dir = tmp("fp-seeds");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    assert!(bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap().status.success());
    let runs = dir.join("runs");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--seeds", "0..1", "--out"])
        .arg(&runs)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(runs.join("fp-tiny/0/metrics.csv").exists());
    assert!(runs.join("fp-tiny/1/metrics.csv").exists());
    let a = std::fs::read(runs.join("fp-tiny/0/metrics.csv")).unwrap();
    let b = std::fs::read(runs.join("fp-tiny/1/metrics.csv")).unwrap();
    assert_ne!(a, b, "different seeds should differ");
}

#[test]
fn unknown_config_keys_fail_before_any_output() {
    let dir = tmp("bad-key");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[optimizer_typo]\nlr = 1.0\n");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(!data.exists(), "no outputs on config error");
}

#[test]
fn eval_handles_fresh_checkpoints_deterministically() {
    let dir = tmp("fp-eval");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    assert!(bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap().status.success());
    let runs = dir.join("runs");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .output()
        .unwrap()
        .status
        .success());
    let ckpt = runs.join("fp-tiny/3/checkpoint.bin");

    let out1 = dir.join("eval1");
    let st = bin()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out1)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["prediction.csv", "projection.csv", "log_density_crop.csv", "metrics.txt"] {
        assert!(out1.join(f).exists(), "missing {f}");
    }
    let out2 = dir.join("eval2");
    assert!(bin()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap()
        .status
        .success());
    assert_eq!(
        std::fs::read(out1.join("prediction.csv")).unwrap(),
        std::fs::read(out2.join("prediction.csv")).unwrap()
    );
}

#[test]
fn sample_debug_dumps_draws_and_diagnostics() {
    let dir = tmp("fp-sample");
    let data = dir.join("data");
    let cfg = write_fp_config(&dir, &data);
    assert!(bin().args(["gen-data", "--config"]).arg(&cfg).output().unwrap().status.success());
    let runs = dir.join("runs");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&runs)
        .output()
        .unwrap()
        .status
        .success());
    let ckpt = runs.join("fp-tiny/3/checkpoint.bin");
    let out_dir = dir.join("draws");
    let st = bin()
        .args(["sample-debug", "--checkpoint"])
        .arg(&ckpt)
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let draws = std::fs::read_to_string(out_dir.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 97); // header + n_collocation
    assert!(draws.lines().nth(1).unwrap().ends_with("model_density")
        || draws.lines().nth(1).unwrap().ends_with("background"));
    assert!(out_dir.join("diag.csv").exists());
}
