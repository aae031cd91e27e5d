//! Radar-like sensor measurements over a parcel ensemble, and the full
//! mass-conservation dataset builder (train sensors, validation sensors,
//! test grid).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::parcels::{default_mixture, simulate_parcels, ParcelEnsemble, Snapshot};
use super::{DataGenError, SensorObservation};
use crate::num::Real;
use crate::util;

/// Square grid of circular sensors on the xy-plane; in 3D each sensor
/// reports per altitude layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorLayout {
    /// Sensors per side; centers are evenly spaced over `range` inclusive.
    pub per_side: usize,
    pub range: (f64, f64),
    pub radius: f64,
    /// Altitude layers as (z_min, z_max, count); `None` in 2D.
    pub layers: Option<(f64, f64, usize)>,
}

impl SensorLayout {
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.range;
        let k = self.per_side;
        let step = if k > 1 { (hi - lo) / (k - 1) as f64 } else { 0.0 };
        let mut out = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                out.push((lo + step * i as f64, lo + step * j as f64));
            }
        }
        out
    }
}

/// Count parcels within each sensor radius (per altitude layer in 3D) at
/// every snapshot time: density = count / (sensor area or volume), velocity
/// = mean of member-particle velocities (zero when empty). Adds i.i.d.
/// Gaussian noise of scale `noise_sigma` to every measured quantity.
pub fn measure_sensors<F: Real, R: Rng>(
    ens: &ParcelEnsemble<F>,
    layout: &SensorLayout,
    noise_sigma: f64,
    rng: &mut R,
) -> Vec<SensorObservation<F>> {
    assert!(layout.radius > 0.0);
    let mut out = Vec::new();
    for snap in &ens.snapshots {
        measure_snapshot(ens, snap, layout, noise_sigma, rng, &mut out);
    }
    out
}

fn measure_snapshot<F: Real, R: Rng>(
    ens: &ParcelEnsemble<F>,
    snap: &Snapshot<F>,
    layout: &SensorLayout,
    noise_sigma: f64,
    rng: &mut R,
    out: &mut Vec<SensorObservation<F>>,
) {
    let dim = ens.dim;
    let r2 = F::of(layout.radius * layout.radius);
    let area = core::f64::consts::PI * layout.radius * layout.radius;
    let n_layers = layout.layers.map_or(1, |(_, _, k)| k);
    let (z_min, layer_h) = match layout.layers {
        Some((lo, hi, k)) => (lo, (hi - lo) / k as f64),
        None => (0.0, 0.0),
    };
    let cell_measure = if layout.layers.is_some() { area * layer_h } else { area };

    for &(cx, cy) in &layout.centers() {
        let cxf = F::of(cx);
        let cyf = F::of(cy);
        let mut count = vec![0usize; n_layers];
        let mut vel_sum = vec![F::zero(); n_layers * dim];
        for i in 0..ens.n {
            let p = &snap.pos[i * dim..(i + 1) * dim];
            let dx = p[0] - cxf;
            let dy = p[1] - cyf;
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let li = if let Some((_, _, k)) = layout.layers {
                let z = p[2].as_f64();
                let li = ((z - z_min) / layer_h).floor();
                if li < 0.0 || li >= k as f64 {
                    continue;
                }
                li as usize
            } else {
                0
            };
            count[li] += 1;
            for d in 0..dim {
                vel_sum[li * dim + d] += snap.vel[i * dim + d];
            }
        }
        for li in 0..n_layers {
            let c = count[li];
            let rho = F::of(c as f64 / cell_measure);
            let vel: Vec<F> = (0..dim)
                .map(|d| {
                    if c > 0 {
                        vel_sum[li * dim + d] / F::of(c as f64)
                    } else {
                        F::zero()
                    }
                })
                .collect();
            let pos = if layout.layers.is_some() {
                vec![cxf, cyf, F::of(z_min + layer_h * (li as f64 + 0.5))]
            } else {
                vec![cxf, cyf]
            };
            let noise = |rng: &mut R| -> F {
                if noise_sigma > 0.0 {
                    util::draw_normal::<F, _>(rng) * F::of(noise_sigma)
                } else {
                    F::zero()
                }
            };
            let rho_noisy = rho + noise(rng);
            let vel_noisy: Vec<F> = vel.iter().map(|&v| v + noise(rng)).collect();
            out.push(SensorObservation {
                t: snap.t,
                pos,
                layer: li as u32,
                rho: rho_noisy,
                vel: vel_noisy,
            });
        }
    }
}

/// Configuration for the mass-conservation dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassDataConfig {
    /// 2 or 3 spatial dimensions.
    pub dim: usize,
    pub n_parcels: usize,
    pub steps: usize,
    pub t_end: f64,
    /// Sensor measurement times (equidistant over [0, t_end]).
    pub n_times: usize,
    /// Ground-truth grid snapshots; interleaves extra times between the
    /// sensor measurements so the test set probes temporal interpolation.
    #[serde(default = "default_truth_times")]
    pub n_truth_times: usize,
    pub sensor_per_side: usize,
    pub sensor_range: (f64, f64),
    pub sensor_radius: f64,
    /// Ground-truth grid extent; defaults to the sensor range but can be
    /// widened to follow mass that leaves the sensed region.
    #[serde(default)]
    pub test_range: Option<(f64, f64)>,
    /// Altitude layers in 3D.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_z_range")]
    pub z_range: (f64, f64),
    /// Noise scale as a fraction of the mean nonzero training density.
    pub noise_rel: f64,
    /// Cells per side of the ground-truth evaluation grid.
    pub test_grid: usize,
    pub seed: u64,
}

fn default_layers() -> usize {
    21
}

fn default_truth_times() -> usize {
    21
}

fn default_z_range() -> (f64, f64) {
    (-0.5, 1.5)
}

impl Default for MassDataConfig {
    fn default() -> Self {
        MassDataConfig {
            dim: 2,
            n_parcels: 20_000,
            steps: 200,
            t_end: 3.0,
            n_times: 11,
            n_truth_times: 21,
            sensor_per_side: 13,
            sensor_range: (-3.0, 3.0),
            sensor_radius: 0.25,
            test_range: None,
            layers: 21,
            z_range: (-0.5, 1.5),
            noise_rel: 0.02,
            test_grid: 31,
            seed: 0,
        }
    }
}

/// Generated splits plus bookkeeping totals.
#[derive(Debug, Clone)]
pub struct MassData<F> {
    pub train: Vec<SensorObservation<F>>,
    pub val: Vec<SensorObservation<F>>,
    pub test: Vec<SensorObservation<F>>,
    pub noise_sigma: f64,
    pub total_mass: f64,
}

/// Build train (noisy sensors), validation (offset sensors, noise-free) and
/// test (grid-cell densities, noise-free) observations.
pub fn generate_mass<F: Real>(cfg: &MassDataConfig) -> Result<MassData<F>, DataGenError> {
    if cfg.dim != 2 && cfg.dim != 3 {
        return Err(DataGenError::Config("mass data dim must be 2 or 3".into()));
    }
    let n_truth = cfg.n_truth_times.max(cfg.n_times);
    let truth_times: Vec<F> = (0..n_truth)
        .map(|i| F::of(cfg.t_end * i as f64 / (n_truth - 1) as f64))
        .collect();
    let sensor_times: Vec<F> = (0..cfg.n_times)
        .map(|i| F::of(cfg.t_end * i as f64 / (cfg.n_times - 1) as f64))
        .collect();
    let mut keep = truth_times.clone();
    for &t in &sensor_times {
        if !keep.iter().any(|&k| (k - t).abs() < F::of(1e-9)) {
            keep.push(t);
        }
    }
    keep.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ens = simulate_parcels::<F>(
        &default_mixture(cfg.dim),
        cfg.n_parcels,
        cfg.dim,
        cfg.steps,
        cfg.t_end,
        &keep,
        cfg.seed,
    )?;
    let sensor_ens = ParcelEnsemble {
        n: ens.n,
        dim: ens.dim,
        snapshots: ens
            .snapshots
            .iter()
            .filter(|s| sensor_times.iter().any(|&t| (s.t - t).abs() < F::of(1e-9)))
            .cloned()
            .collect(),
    };

    let layers = if cfg.dim == 3 {
        Some((cfg.z_range.0, cfg.z_range.1, cfg.layers))
    } else {
        None
    };
    let train_layout = SensorLayout {
        per_side: cfg.sensor_per_side,
        range: cfg.sensor_range,
        radius: cfg.sensor_radius,
        layers,
    };
    // Validation sensors sit on the half-spacing offset grid, so they are
    // disjoint from the training sensors.
    let (lo, hi) = cfg.sensor_range;
    let step = (hi - lo) / (cfg.sensor_per_side - 1) as f64;
    let val_layout = SensorLayout {
        per_side: cfg.sensor_per_side - 1,
        range: (lo + 0.5 * step, hi - 0.5 * step),
        radius: cfg.sensor_radius,
        layers,
    };

    // Noise scale: measure once noise-free to get the mean nonzero density.
    let mut rng = util::rng_from(util::derive_seed(cfg.seed, "sensor-noise"));
    let clean = measure_sensors(&sensor_ens, &train_layout, 0.0, &mut rng);
    let nonzero: Vec<f64> =
        clean.iter().map(|o| o.rho.as_f64()).filter(|&r| r > 0.0).collect();
    let mean_nonzero = if nonzero.is_empty() {
        0.0
    } else {
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    };
    let noise_sigma = cfg.noise_rel * mean_nonzero;

    let mut rng = util::rng_from(util::derive_seed(cfg.seed, "sensor-noise"));
    let mut train = measure_sensors(&sensor_ens, &train_layout, noise_sigma, &mut rng);
    // An empty sensor counts zero mass but measures no velocity at all;
    // drop those velocity labels so the fit is not dragged toward zero.
    for (row, clean_row) in train.iter_mut().zip(&clean) {
        if clean_row.rho == F::zero() {
            row.vel.clear();
        }
    }
    let val = measure_sensors(&sensor_ens, &val_layout, 0.0, &mut rng);
    let test = grid_truth(&ens, cfg);

    Ok(MassData {
        train,
        val,
        test,
        noise_sigma,
        total_mass: cfg.n_parcels as f64,
    })
}

/// Noise-free cell-count densities on a regular grid: the test-set truth.
fn grid_truth<F: Real>(ens: &ParcelEnsemble<F>, cfg: &MassDataConfig) -> Vec<SensorObservation<F>> {
    let (lo, hi) = cfg.test_range.unwrap_or(cfg.sensor_range);
    let k = cfg.test_grid;
    let cell = (hi - lo) / k as f64;
    let layers = if cfg.dim == 3 { cfg.layers } else { 1 };
    let (z_min, z_max) = cfg.z_range;
    let layer_h = (z_max - z_min) / layers as f64;
    let cell_measure = if cfg.dim == 3 { cell * cell * layer_h } else { cell * cell };

    let mut out = Vec::new();
    for snap in &ens.snapshots {
        let mut count = vec![0usize; k * k * layers];
        let mut vel_sum = vec![F::zero(); k * k * layers * ens.dim];
        for i in 0..ens.n {
            let p = &snap.pos[i * ens.dim..(i + 1) * ens.dim];
            let ix = ((p[0].as_f64() - lo) / cell).floor();
            let iy = ((p[1].as_f64() - lo) / cell).floor();
            if ix < 0.0 || ix >= k as f64 || iy < 0.0 || iy >= k as f64 {
                continue;
            }
            let li = if cfg.dim == 3 {
                let z = ((p[2].as_f64() - z_min) / layer_h).floor();
                if z < 0.0 || z >= layers as f64 {
                    continue;
                }
                z as usize
            } else {
                0
            };
            let idx = (ix as usize * k + iy as usize) * layers + li;
            count[idx] += 1;
            for d in 0..ens.dim {
                vel_sum[idx * ens.dim + d] += snap.vel[i * ens.dim + d];
            }
        }
        for ix in 0..k {
            for iy in 0..k {
                for li in 0..layers {
                    let idx = (ix * k + iy) * layers + li;
                    let c = count[idx];
                    let mut pos = vec![
                        F::of(lo + cell * (ix as f64 + 0.5)),
                        F::of(lo + cell * (iy as f64 + 0.5)),
                    ];
                    if cfg.dim == 3 {
                        pos.push(F::of(z_min + layer_h * (li as f64 + 0.5)));
                    }
                    let vel: Vec<F> = (0..ens.dim)
                        .map(|d| {
                            if c > 0 {
                                vel_sum[idx * ens.dim + d] / F::of(c as f64)
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    out.push(SensorObservation {
                        t: snap.t,
                        pos,
                        layer: li as u32,
                        rho: F::of(c as f64 / cell_measure),
                        vel,
                    });
                }
            }
        }
    }
    out
}
