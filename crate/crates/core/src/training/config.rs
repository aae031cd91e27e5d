//! Declarative run description. The CLI deserializes this from TOML;
//! unknown keys are rejected everywhere so sweep typos fail fast.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::datagen::{fp::FpDataConfig, heat::HeatDataConfig, mass::MassDataConfig};
use crate::fieldnet::ActivationKind;
use crate::sampling::{BackgroundMode, Domain, Extent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mass2d,
    Mass3d,
    Heat,
    FokkerPlanck,
}

impl ExperimentKind {
    pub fn spatial_dim(self) -> usize {
        match self {
            ExperimentKind::Mass2d => 2,
            ExperimentKind::Mass3d => 3,
            ExperimentKind::Heat => 2,
            ExperimentKind::FokkerPlanck => 1,
        }
    }

    pub fn has_velocity(self) -> bool {
        matches!(self, ExperimentKind::Mass2d | ExperimentKind::Mass3d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Rar,
    OtRar,
    It,
    Mh,
    Hmc,
    /// Oracle: draw collocation points from the known true density
    /// (available for the closed-form forward problem only).
    TruePdf,
}

impl SamplerKind {
    pub fn is_density_based(self) -> bool {
        matches!(self, SamplerKind::It | SamplerKind::Mh | SamplerKind::Hmc | SamplerKind::TruePdf)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub name: String,
    pub seed: u64,
    /// Directory the dataset was generated into.
    pub data_dir: String,
    /// Record real wall-clock seconds in metrics rows. Off by default so a
    /// rerun with the same config and seed is byte-identical.
    #[serde(default)]
    pub timing: bool,
}

/// One spatial extent: `[lo, hi]` or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtentCfg {
    Box([f64; 2]),
    Keyword(ExtentKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtentKeyword {
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub t: [f64; 2],
    pub x: Vec<ExtentCfg>,
}

impl DomainSection {
    pub fn to_domain(&self) -> Domain<f64> {
        Domain {
            t: (self.t[0], self.t[1]),
            space: self
                .x
                .iter()
                .map(|e| match e {
                    ExtentCfg::Box([a, b]) => Extent::Bounded(*a, *b),
                    ExtentCfg::Keyword(_) => Extent::Unbounded,
                })
                .collect(),
        }
    }

    /// Bounding box used for input rescaling and evaluation grids; falls
    /// back to `fallback` for unbounded dimensions.
    pub fn rescale_box(&self, fallback: (f64, f64)) -> Vec<(f64, f64)> {
        self.x
            .iter()
            .map(|e| match e {
                ExtentCfg::Box([a, b]) => (*a, *b),
                ExtentCfg::Keyword(_) => fallback,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub activation: ActivationKind,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega0() -> f64 {
    12.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    /// Inflation added to the fitted covariance diagonal.
    #[serde(default = "default_env_c")]
    pub c: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
}

fn default_env_c() -> f64 {
    0.25
}

fn default_c_max() -> f64 {
    1e3
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        EnvelopeSection { c: default_env_c(), c_max: default_c_max() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: SamplerKind,
    pub n_collocation: usize,
    #[serde(default = "d_resample")]
    pub resample_every: usize,
    #[serde(default = "d_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "d_warmup")]
    pub ramp_epochs: usize,
    #[serde(default = "d_frac")]
    pub final_density_fraction: f64,
    #[serde(default = "d_background")]
    pub background: BackgroundMode,
    #[serde(default = "d_chains")]
    pub chains: usize,
    #[serde(default = "d_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    #[serde(default = "d_thin")]
    pub thin: usize,
    #[serde(default = "d_leapfrog")]
    pub leapfrog_steps: usize,
    #[serde(default = "d_target_accept")]
    pub target_accept: f64,
    #[serde(default = "d_it_grid")]
    pub it_grid: usize,
    /// OT refinement fit size j (< 2k); defaults to k.
    #[serde(default)]
    pub ot_j: Option<usize>,
}

fn d_resample() -> usize {
    500
}
fn d_warmup() -> usize {
    500
}
fn d_frac() -> f64 {
    0.9
}
fn d_background() -> BackgroundMode {
    BackgroundMode::Gaussian
}
fn d_chains() -> usize {
    32
}
fn d_ladder() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125]
}
fn d_burn_in() -> usize {
    200
}
fn d_thin() -> usize {
    4
}
fn d_leapfrog() -> usize {
    12
}
fn d_target_accept() -> f64 {
    0.75
}
fn d_it_grid() -> usize {
    96
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    #[serde(default = "d_decay")]
    pub decay: f64,
    #[serde(default)]
    pub min_lr: f64,
    /// Observation rows per step; 0 = full batch.
    #[serde(default)]
    pub batch_obs: usize,
    /// Collocation points per step; 0 = full batch.
    #[serde(default)]
    pub batch_collocation: usize,
    pub epochs: usize,
    /// Early-stopping patience in epochs; 0 disables.
    #[serde(default)]
    pub patience: usize,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
}

fn d_decay() -> f64 {
    1.0
}
fn d_eval_every() -> usize {
    50
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "d_one")]
    pub w_obs: f64,
    pub w_pde: f64,
    #[serde(default = "d_one")]
    pub w_init: f64,
}

fn d_one() -> f64 {
    1.0
}

/// The full declarative run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub domain: DomainSection,
    pub density_net: NetSection,
    #[serde(default)]
    pub velocity_net: Option<NetSection>,
    #[serde(default)]
    pub envelope: EnvelopeSection,
    pub sampler: SamplerSection,
    pub optimizer: OptimizerSection,
    pub loss: LossSection,
    #[serde(default)]
    pub mass_data: Option<MassDataConfig>,
    #[serde(default)]
    pub heat_data: Option<HeatDataConfig>,
    #[serde(default)]
    pub fp_data: Option<FpDataConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let kind = self.experiment.kind;
        if self.domain.x.len() != kind.spatial_dim() {
            return Err(TrainError::Config(format!(
                "{:?} wants {} spatial dims, domain.x has {}",
                kind,
                kind.spatial_dim(),
                self.domain.x.len()
            )));
        }
        if self.sampler.n_collocation == 0 {
            return Err(TrainError::Config("n_collocation must be >= 1".into()));
        }
        if kind.has_velocity() && self.velocity_net.is_none() {
            return Err(TrainError::Config(
                "mass experiments need a [velocity_net] section".into(),
            ));
        }
        if self.loss.w_obs < 0.0 || self.loss.w_pde < 0.0 || self.loss.w_init < 0.0 {
            return Err(TrainError::Config("loss weights must be non-negative".into()));
        }
        if self.sampler.kind == SamplerKind::TruePdf && kind != ExperimentKind::FokkerPlanck {
            return Err(TrainError::Config(
                "the true_pdf oracle sampler is only defined for the closed-form forward problem"
                    .into(),
            ));
        }
        if self.optimizer.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.optimizer.decay > 0.0 && self.optimizer.decay <= 1.0) {
            return Err(TrainError::Config("decay must be in (0, 1]".into()));
        }
        if let Some(j) = self.sampler.ot_j {
            if j >= 2 * self.sampler.n_collocation {
                return Err(TrainError::Config("ot_j must be < 2·n_collocation".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extent_cfg_parses_boxes_and_keyword() {
        let d: DomainSection =
            serde_json::from_str(r#"{"t": [0.0, 3.0], "x": [[-3.0, 3.0], "unbounded"]}"#)
                .unwrap();
        let dom = d.to_domain();
        assert_eq!(dom.space[0], Extent::Bounded(-3.0, 3.0));
        assert_eq!(dom.space[1], Extent::Unbounded);
    }
}
