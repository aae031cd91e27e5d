//! Evaluation metrics: explained variance, KL divergence against a known
//! density, mass projections, and the per-epoch metrics records.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::TrainError;
use crate::num::Real;
use crate::sampling::Domain;
use crate::util::{pairwise_mean, pairwise_sum};

/// One evaluation row. `wall_s` is written as 0 unless timing is enabled so
/// reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss_obs: f64,
    pub loss_pde: f64,
    pub loss_total: f64,
    pub val_r2: Option<f64>,
    pub kl: Option<f64>,
    pub accept_rate: Option<f64>,
    pub wall_s: f64,
}

pub const METRICS_HEADER: &str = "epoch,loss_obs,loss_pde,loss_total,val_r2,kl,accept_rate,wall_s";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{},{},{},{:?}",
            self.epoch,
            self.loss_obs,
            self.loss_pde,
            self.loss_total,
            fmt_opt(self.val_r2),
            fmt_opt(self.kl),
            fmt_opt(self.accept_rate),
            self.wall_s,
        )
    }
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Explained variance `1 - SSE/SST` with SST about the truth mean.
/// Errors on constant truth (SST = 0).
pub fn r2_explained_variance<F: Real>(pred: &[F], truth: &[F]) -> Result<f64, TrainError> {
    assert_eq!(pred.len(), truth.len());
    if truth.len() < 2 {
        return Err(TrainError::DegenerateTruth);
    }
    let mean = pairwise_mean(truth);
    let sst: F = pairwise_sum(
        &truth.iter().map(|&t| (t - mean) * (t - mean)).collect::<Vec<_>>(),
    );
    if sst <= F::zero() {
        return Err(TrainError::DegenerateTruth);
    }
    let sse: F = pairwise_sum(
        &pred
            .iter()
            .zip(truth)
            .map(|(&p, &t)| (p - t) * (p - t))
            .collect::<Vec<_>>(),
    );
    Ok(1.0 - (sse / sst).as_f64())
}

/// Monte-Carlo estimate of `KL(p ‖ q_model)`: draws from the true density,
/// scores against the model density normalized by trapezoidal quadrature
/// over a grid on the bounded domain.
///
/// `sample_true` yields spacetime draws from p; `log_p` is the true joint
/// log density; `density` is the unnormalized model density.
pub fn kl_estimate<F: Real>(
    mut sample_true: impl FnMut() -> Vec<F>,
    log_p: impl Fn(&[F]) -> F + Sync,
    density: impl Fn(&[F]) -> F + Sync,
    dom: &Domain<F>,
    n: usize,
    grid_res: &[usize],
) -> Result<f64, TrainError> {
    let bounds = dom.fully_bounded().ok_or(TrainError::UnboundedKlDomain)?;
    let d = bounds.len();
    assert_eq!(grid_res.len(), d);

    // trapezoid: product weights, 1/2 at each grid edge per dimension
    let n_nodes: usize = grid_res.iter().map(|r| r + 1).product();
    let cell: f64 = bounds
        .iter()
        .zip(grid_res)
        .map(|(&(a, b), &r)| ((b - a).as_f64()) / r as f64)
        .product();
    // ordered collect + fixed pairwise reduce: the normalization constant
    // must not depend on thread scheduling
    let node_terms: Vec<f64> = (0..n_nodes)
        .into_par_iter()
        .map(|mut idx| {
            let mut point = vec![F::zero(); d];
            let mut w = 1.0f64;
            for k in 0..d {
                let r = grid_res[k] + 1;
                let i = idx % r;
                idx /= r;
                let (a, b) = bounds[k];
                point[k] = a + (b - a) * F::of(i as f64 / grid_res[k] as f64);
                if i == 0 || i == r - 1 {
                    w *= 0.5;
                }
            }
            w * density(&point).as_f64().max(0.0)
        })
        .collect();
    let z: f64 = crate::util::pairwise_sum(&node_terms) * cell;
    if !(z > 0.0) || !z.is_finite() {
        return Err(TrainError::DegenerateNormalization(z));
    }
    let log_z = z.ln();

    let floor = crate::sampling::DENSITY_FLOOR;
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let s = sample_true();
        let lp = log_p(&s).as_f64();
        let lq = (density(&s).as_f64().max(0.0) + floor).ln() - log_z;
        terms.push(lp - lq);
    }
    Ok(pairwise_mean(&terms))
}

/// Project a density onto one retained axis by midpoint quadrature over the
/// collapsed spatial dimensions, per requested time.
#[derive(Debug, Clone)]
pub struct ProjectionTable {
    pub axis: usize,
    pub times: Vec<f64>,
    pub coords: Vec<f64>,
    /// `times.len() × coords.len()`, row-major.
    pub values: Vec<f64>,
}

pub fn mass_projection(
    rho: impl Fn(&[f64]) -> f64 + Sync,
    space_box: &[(f64, f64)],
    res: usize,
    times: &[f64],
    axis: usize,
) -> ProjectionTable {
    let d = space_box.len();
    assert!(axis < d);
    let steps: Vec<f64> = space_box.iter().map(|&(a, b)| (b - a) / res as f64).collect();
    let collapsed: Vec<usize> = (0..d).filter(|&k| k != axis).collect();
    let cell: f64 = collapsed.iter().map(|&k| steps[k]).product();
    let coords: Vec<f64> = (0..res)
        .map(|i| space_box[axis].0 + steps[axis] * (i as f64 + 0.5))
        .collect();

    let mut values = vec![0.0f64; times.len() * res];
    for (ti, &t) in times.iter().enumerate() {
        let row: Vec<f64> = (0..res)
            .into_par_iter()
            .map(|i| {
                let n_inner: usize = collapsed.iter().map(|_| res).product();
                let mut acc = 0.0;
                let mut point = vec![0.0f64; 1 + d];
                point[0] = t;
                point[1 + axis] = coords[i];
                for mut idx in 0..n_inner {
                    for &k in &collapsed {
                        let j = idx % res;
                        idx /= res;
                        point[1 + k] = space_box[k].0 + steps[k] * (j as f64 + 0.5);
                    }
                    acc += rho(&point);
                }
                acc * cell
            })
            .collect();
        values[ti * res..(ti + 1) * res].copy_from_slice(&row);
    }
    ProjectionTable { axis, times: times.to_vec(), coords, values }
}

impl ProjectionTable {
    /// Total projected mass at one time (trapezoid-free sum × step).
    pub fn total(&self, ti: usize) -> f64 {
        let step = if self.coords.len() > 1 {
            self.coords[1] - self.coords[0]
        } else {
            1.0
        };
        self.values[ti * self.coords.len()..(ti + 1) * self.coords.len()]
            .iter()
            .sum::<f64>()
            * step
    }

    pub fn write_csv(&self, path: &Path, axis_name: &str) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,{axis_name},mass")?;
        for (ti, &t) in self.times.iter().enumerate() {
            for (ci, &c) in self.coords.iter().enumerate() {
                writeln!(w, "{t:?},{c:?},{:?}", self.values[ti * self.coords.len() + ci])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldnet::{DensityModel, GaussianEnvelope};
    use crate::linalg::Mat;
    use crate::util;

    #[test]
    fn r2_reference_values() {
        assert_eq!(
            r2_explained_variance(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0
        );
        assert!(
            r2_explained_variance(&[1.0f64, 1.0, 1.0], &[0.0, 1.0, 2.0])
                .unwrap()
                .abs()
                < 1e-15
        );
        let r = r2_explained_variance(&[0.0f64, 1.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-15, "{r}");
        assert!(matches!(
            r2_explained_variance(&[0.0f64, 1.0], &[2.0, 2.0]),
            Err(TrainError::DegenerateTruth)
        ));
    }

    #[test]
    fn kl_of_identical_densities_is_near_zero() {
        // true = model = envelope N(0,1) over x, uniform t on [0,1]
        let env = GaussianEnvelope::<f64>::standard(1);
        let model = DensityModel::envelope_only(env, (0.0, 1.0)).unwrap();
        let dom = Domain::bounded((0.0f64, 1.0), &[(-8.0, 8.0)]);
        let mut rng = util::rng_from(3);
        let kl = kl_estimate(
            || {
                vec![
                    util::draw_uniform(&mut rng, 0.0, 1.0),
                    util::draw_normal(&mut rng),
                ]
            },
            |p: &[f64]| -0.5 * p[1] * p[1] - 0.5 * core::f64::consts::TAU.ln(),
            |p: &[f64]| model.forward(p),
            &dom,
            10_000,
            &[16, 400],
        )
        .unwrap();
        assert!(kl.abs() <= 0.01, "{kl}");
        assert!(kl >= -0.01);
    }

    #[test]
    fn kl_of_doubled_variance_matches_closed_form() {
        // model N(0,2) against true N(0,1): KL = (1/2)(1/2 + ln 2 - 1)
        let env =
            GaussianEnvelope::<f64>::new(vec![0.0], Mat::from_rows(&[&[2.0]]), 0.0).unwrap();
        let model = DensityModel::envelope_only(env, (0.0, 1.0)).unwrap();
        let dom = Domain::bounded((0.0f64, 1.0), &[(-10.0, 10.0)]);
        let mut rng = util::rng_from(4);
        let kl = kl_estimate(
            || {
                vec![
                    util::draw_uniform(&mut rng, 0.0, 1.0),
                    util::draw_normal(&mut rng),
                ]
            },
            |p: &[f64]| -0.5 * p[1] * p[1] - 0.5 * core::f64::consts::TAU.ln(),
            |p: &[f64]| model.forward(p),
            &dom,
            10_000,
            &[16, 500],
        )
        .unwrap();
        let expect = 0.5 * (0.5 + 2.0f64.ln() - 1.0);
        assert!((kl - expect).abs() <= 0.01, "{kl} vs {expect}");
    }

    #[test]
    fn projection_of_zero_density_is_zero() {
        let t = mass_projection(|_p| 0.0, &[(-1.0, 1.0), (-1.0, 1.0)], 32, &[0.0, 1.0], 0);
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_of_separable_gaussian_matches_marginal() {
        let env = GaussianEnvelope::<f64>::standard(2);
        let model = DensityModel::envelope_only(env, (0.0, 1.0)).unwrap();
        let table = mass_projection(
            |p| model.forward(p),
            &[(-8.0, 8.0), (-8.0, 8.0)],
            240,
            &[0.5],
            0,
        );
        for (ci, &x) in table.coords.iter().enumerate() {
            let marginal =
                (-0.5 * x * x).exp() / core::f64::consts::TAU.sqrt();
            assert!(
                (table.values[ci] - marginal).abs() < 1e-3,
                "x={x}: {} vs {marginal}",
                table.values[ci]
            );
        }
        // total mass ~ 1
        assert!((table.total(0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn metrics_csv_rows_are_stable() {
        let r = MetricsRecord {
            epoch: 50,
            loss_obs: 0.125,
            loss_pde: 1.5e-3,
            loss_total: 0.1265,
            val_r2: Some(0.875),
            kl: None,
            accept_rate: Some(0.25),
            wall_s: 0.0,
        };
        assert_eq!(r.csv_row(), "50,0.125,0.0015,0.1265,0.875,,0.25,0.0");
    }
}
