//! Forward-time centered-space heat solver and the heat dataset builder.

use serde::{Deserialize, Serialize};

use super::{DataGenError, SensorObservation};
use crate::num::Real;
use crate::util;
use rand::Rng;

/// Dense FTCS solution: every frame of a `nx × ny` grid with the boundary
/// ring held at zero (Dirichlet conditions far from the relevant domain).
#[derive(Debug, Clone)]
pub struct HeatGrid<F> {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub origin: (f64, f64),
    pub dt: f64,
    pub alpha: f64,
    pub frames: Vec<Vec<F>>,
}

impl<F: Real> HeatGrid<F> {
    pub fn value(&self, frame: usize, ix: usize, iy: usize) -> F {
        self.frames[frame][ix * self.ny + iy]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.origin.0 + self.dx * ix as f64, self.origin.1 + self.dx * iy as f64)
    }

    pub fn time(&self, frame: usize) -> f64 {
        self.dt * frame as f64
    }

    /// Total heat `Σ T · dx²` of one frame.
    pub fn total_heat(&self, frame: usize) -> f64 {
        let s: f64 = self.frames[frame].iter().map(|v| v.as_f64()).sum();
        s * self.dx * self.dx
    }
}

/// Explicit 5-point stencil solve. `t_init` is row-major `nx × ny`.
/// Errors when `dt` violates the stability bound `dx²/(4α)`, reporting the
/// maximal admissible step.
pub fn ftcs_heat<F: Real>(
    nx: usize,
    ny: usize,
    dx: f64,
    origin: (f64, f64),
    alpha: f64,
    dt: f64,
    t_init: Vec<F>,
    steps: usize,
) -> Result<HeatGrid<F>, DataGenError> {
    assert_eq!(t_init.len(), nx * ny);
    assert!(alpha > 0.0 && dx > 0.0 && dt > 0.0);
    let max_dt = dx * dx / (4.0 * alpha);
    if dt > max_dt {
        return Err(DataGenError::Unstable { dt, max_dt });
    }
    let lam = F::of(alpha * dt / (dx * dx));
    let mut frames = Vec::with_capacity(steps + 1);
    let mut cur = t_init;
    // boundary ring at zero from the start
    for ix in 0..nx {
        cur[ix * ny] = F::zero();
        cur[ix * ny + ny - 1] = F::zero();
    }
    for iy in 0..ny {
        cur[iy] = F::zero();
        cur[(nx - 1) * ny + iy] = F::zero();
    }
    frames.push(cur.clone());
    let four = F::of(4.0);
    for _ in 0..steps {
        let mut next = cur.clone();
        for ix in 1..nx - 1 {
            for iy in 1..ny - 1 {
                let c = cur[ix * ny + iy];
                let lap = cur[(ix - 1) * ny + iy]
                    + cur[(ix + 1) * ny + iy]
                    + cur[ix * ny + iy - 1]
                    + cur[ix * ny + iy + 1]
                    - four * c;
                next[ix * ny + iy] = c + lam * lap;
            }
        }
        frames.push(next.clone());
        cur = next;
    }
    Ok(HeatGrid { nx, ny, dx, origin, dt, alpha, frames })
}

/// Configuration of the heat dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatDataConfig {
    /// Grid cells per side (the solver box spans `box_range` squared).
    pub grid: usize,
    pub box_range: (f64, f64),
    pub alpha: f64,
    pub t_end: f64,
    /// Initial hot disc: center and radius, unit temperature inside.
    pub source_center: (f64, f64),
    pub source_radius: f64,
    pub n_train: usize,
    /// Spread of training-point sampling around the source.
    pub train_spread: f64,
    /// Training measurements cover only this leading fraction of the time
    /// window (a third of them sit exactly at t = 0); the later evolution
    /// must come from the physics.
    #[serde(default = "default_train_time_frac")]
    pub train_time_frac: f64,
    /// Relevant-domain half-width for validation/test points.
    pub eval_halfwidth: f64,
    pub eval_grid: usize,
    pub n_val_times: usize,
    pub n_test_times: usize,
    pub seed: u64,
}

fn default_train_time_frac() -> f64 {
    0.05
}

impl Default for HeatDataConfig {
    fn default() -> Self {
        HeatDataConfig {
            grid: 101,
            box_range: (-2.0, 2.0),
            alpha: 0.1,
            t_end: 0.2,
            source_center: (-0.35, -0.25),
            source_radius: 0.2,
            n_train: 1_000,
            train_spread: 0.55,
            train_time_frac: default_train_time_frac(),
            eval_halfwidth: 1.0,
            eval_grid: 41,
            n_val_times: 5,
            n_test_times: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatData<F> {
    pub train: Vec<SensorObservation<F>>,
    pub val: Vec<SensorObservation<F>>,
    pub test: Vec<SensorObservation<F>>,
    pub grid: HeatGrid<F>,
}

/// Solve the PDE and sample the three splits. Training points concentrate
/// around the initial source (temperature measurements only); validation
/// and test points sit on uniform grids at interleaved, disjoint times.
pub fn generate_heat<F: Real>(cfg: &HeatDataConfig) -> Result<HeatData<F>, DataGenError> {
    let n = cfg.grid;
    let (lo, hi) = cfg.box_range;
    let dx = (hi - lo) / (n - 1) as f64;
    let max_dt = dx * dx / (4.0 * cfg.alpha);
    let dt = 0.5 * max_dt;
    let steps = (cfg.t_end / dt).ceil() as usize;
    let dt = cfg.t_end / steps as f64;

    let mut t_init = vec![F::zero(); n * n];
    for ix in 0..n {
        for iy in 0..n {
            let x = lo + dx * ix as f64;
            let y = lo + dx * iy as f64;
            let dxs = x - cfg.source_center.0;
            let dys = y - cfg.source_center.1;
            if dxs * dxs + dys * dys <= cfg.source_radius * cfg.source_radius {
                t_init[ix * n + iy] = F::one();
            }
        }
    }
    let grid = ftcs_heat(n, n, dx, (lo, lo), cfg.alpha, dt, t_init, steps)?;

    let mut rng = util::rng_from(util::derive_seed(cfg.seed, "heat-train"));
    let mut train = Vec::with_capacity(cfg.n_train);
    let n_frames = grid.frames.len();
    while train.len() < cfg.n_train {
        // around the source in space, uniform over time; a third of the
        // points pinned at t = 0 so the initial condition is well covered
        let x = cfg.source_center.0 + cfg.train_spread * util::draw_normal::<f64, _>(&mut rng);
        let y = cfg.source_center.1 + cfg.train_spread * util::draw_normal::<f64, _>(&mut rng);
        if x < lo || x > hi || y < lo || y > hi {
            continue;
        }
        let frame = if train.len() % 3 == 0 {
            0
        } else {
            let max_frame =
                (((n_frames - 1) as f64) * cfg.train_time_frac).ceil() as usize;
            rng.random_range(0..=max_frame.min(n_frames - 1))
        };
        let ix = ((x - lo) / dx).round() as usize;
        let iy = ((y - lo) / dx).round() as usize;
        let (cx, cy) = grid.cell_center(ix.min(n - 1), iy.min(n - 1));
        train.push(SensorObservation {
            t: F::of(grid.time(frame)),
            pos: vec![F::of(cx), F::of(cy)],
            layer: 0,
            rho: grid.value(frame, ix.min(n - 1), iy.min(n - 1)),
            vel: Vec::new(),
        });
    }

    let eval_cells: Vec<(usize, usize)> = {
        let k = cfg.eval_grid;
        let mut cells = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let x = -cfg.eval_halfwidth
                    + 2.0 * cfg.eval_halfwidth * i as f64 / (k - 1) as f64;
                let y = -cfg.eval_halfwidth
                    + 2.0 * cfg.eval_halfwidth * j as f64 / (k - 1) as f64;
                let ix = ((x - lo) / dx).round() as usize;
                let iy = ((y - lo) / dx).round() as usize;
                cells.push((ix.min(n - 1), iy.min(n - 1)));
            }
        }
        cells
    };
    // distinct evenly spaced frames, dealt alternately to the two splits,
    // so validation and test never share a time slice
    let (val_frames, test_frames) = {
        let want = cfg.n_val_times + cfg.n_test_times;
        let mut frames: Vec<usize> = (0..want)
            .map(|i| ((i as f64 + 0.5) / want as f64 * (n_frames - 1) as f64).round() as usize)
            .collect();
        frames.dedup();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for (i, f) in frames.into_iter().enumerate() {
            if i % 2 == 0 && test.len() < cfg.n_test_times {
                test.push(f);
            } else if val.len() < cfg.n_val_times {
                val.push(f);
            } else {
                test.push(f);
            }
        }
        (val, test)
    };

    let slice = |frames: &[usize]| -> Vec<SensorObservation<F>> {
        let mut out = Vec::new();
        for &f in frames {
            for &(ix, iy) in &eval_cells {
                let (cx, cy) = grid.cell_center(ix, iy);
                out.push(SensorObservation {
                    t: F::of(grid.time(f)),
                    pos: vec![F::of(cx), F::of(cy)],
                    layer: 0,
                    rho: grid.value(f, ix, iy),
                    vel: Vec::new(),
                });
            }
        }
        out
    };
    let val = slice(&val_frames);
    let test = slice(&test_frames);
    Ok(HeatData { train, val, test, grid })
}
