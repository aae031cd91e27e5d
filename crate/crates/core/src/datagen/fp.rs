//! Closed-form solution of the drift-diffusion problem used by the forward
//! experiment: sinusoidal drift μ(t) = sin(10t), constant noise σ = 0.06,
//! initial particles N(0, 0.02²) at t₀ = -1.
//!
//! The density stays Gaussian: mean follows the integrated drift,
//! variance grows linearly at rate σ².

use serde::{Deserialize, Serialize};

use super::{DataGenError, SensorObservation};
use crate::num::Real;

pub const FP_SIGMA: f64 = 0.06;
/// Diffusion coefficient D = σ²/2.
pub const FP_DIFFUSION: f64 = FP_SIGMA * FP_SIGMA / 2.0;
pub const FP_T0: f64 = -1.0;
pub const FP_T1: f64 = 1.0;
pub const FP_X_RANGE: (f64, f64) = (-1.5, 1.5);
const FP_INIT_STD: f64 = 0.02;

/// Drift μ(t) = sin(10t).
pub fn fp_drift<F: Real>(t: F) -> F {
    (F::of(10.0) * t).sin()
}

/// Mean of the solution: (cos(10) - cos(10t))/10; zero at t = -1.
pub fn fp_mean<F: Real>(t: F) -> F {
    (F::of(10.0).cos() - (F::of(10.0) * t).cos()) / F::of(10.0)
}

/// Variance of the solution: σ²·(t + 1) + 0.02²; exactly the initial
/// variance at t = -1.
pub fn fp_var<F: Real>(t: F) -> F {
    F::of(FP_SIGMA * FP_SIGMA) * (t + F::one()) + F::of(FP_INIT_STD * FP_INIT_STD)
}

/// The density p(x | t) = N(x; mean(t), var(t)).
pub fn fp_analytic<F: Real>(t: F, x: F) -> F {
    fp_log_pdf(t, x).exp()
}

/// log p(x | t).
pub fn fp_log_pdf<F: Real>(t: F, x: F) -> F {
    let var = fp_var(t);
    let d = x - fp_mean(t);
    -F::of(0.5) * (F::of(core::f64::consts::TAU) * var).ln() - d * d / (F::of(2.0) * var)
}

/// Joint log density over (t, x) with t uniform on [t₀, t₁].
pub fn fp_log_pdf_joint<F: Real>(t: F, x: F) -> F {
    fp_log_pdf(t, x) - F::of(FP_T1 - FP_T0).ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpDataConfig {
    /// Initial-condition points placed quasi-uniformly over the x range at
    /// t = t₀, labelled with the exact density.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for FpDataConfig {
    fn default() -> Self {
        FpDataConfig { n_init: 5_000, seed: 0 }
    }
}

/// The forward problem provides data only at the initial time: points over
/// the x range at t₀ carrying the exact initial density.
pub fn generate_fp_init<F: Real>(
    cfg: &FpDataConfig,
) -> Result<Vec<SensorObservation<F>>, DataGenError> {
    if cfg.n_init == 0 {
        return Err(DataGenError::Config("n_init must be positive".into()));
    }
    let (lo, hi) = FP_X_RANGE;
    let t0 = F::of(FP_T0);
    let cells = crate::sampling::sobol_raw(cfg.n_init, 1);
    let out = cells
        .iter()
        .map(|u| {
            let x = F::of(lo + (hi - lo) * u[0]);
            SensorObservation {
                t: t0,
                pos: vec![x],
                layer: 0,
                rho: fp_analytic(t0, x),
                vel: Vec::new(),
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_moments_are_exact() {
        assert_eq!(fp_mean(-1.0f64), 0.0);
        assert_eq!(fp_var(-1.0f64), 0.02f64 * 0.02f64);
    }

    #[test]
    fn density_value_at_final_time() {
        // var(1) = 0.0036 + 0.004 = 0.0076, mean(1) = 0
        let v = fp_var(1.0f64);
        assert!((v - 0.0076).abs() < 1e-15);
        let p = fp_analytic(1.0f64, 0.0);
        assert!((p - 4.576).abs() < 1e-3, "{p}");
    }

    #[test]
    fn integrates_to_one_by_trapezoid() {
        let n = 4001;
        let (lo, hi) = (-1.5f64, 1.5);
        let h = (hi - lo) / (n - 1) as f64;
        for k in 0..=10 {
            let t = -1.0 + 0.2 * k as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let x = lo + h * i as f64;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                acc += w * fp_analytic(t, x);
            }
            acc *= h;
            assert!((acc - 1.0).abs() <= 1e-6, "t={t}: {acc}");
        }
    }

    #[test]
    fn drift_is_sin_10t() {
        assert!((fp_drift(0.3f64) - 3.0f64.sin()).abs() < 1e-15);
    }
}
