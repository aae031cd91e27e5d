//! Dataset generation entry point and the loader used by training.

use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, ExperimentKind};
use super::TrainError;
use crate::datagen::dataset::{write_csv, write_metadata, Schema};
use crate::datagen::{fp, heat, mass, read_csv, SensorObservation};

/// In-memory splits; the forward problem carries initial-condition points
/// in `train` and no measured validation/test rows (its truth is analytic).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: ExperimentKind,
    pub train: Vec<SensorObservation<f64>>,
    pub val: Vec<SensorObservation<f64>>,
    pub test: Vec<SensorObservation<f64>>,
}

#[derive(Debug, Clone)]
pub struct GenSummary {
    pub files: Vec<PathBuf>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Total simulated mass (particle count) for the mass experiments.
    pub total_mass: Option<f64>,
    pub noise_sigma: Option<f64>,
}

/// Generate the dataset described by the config into `dir` (train/val/test
/// CSVs plus a metadata sidecar).
pub fn generate_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<GenSummary, TrainError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let seed = cfg.experiment.seed;
    match cfg.experiment.kind {
        ExperimentKind::Mass2d | ExperimentKind::Mass3d => {
            let mut mcfg = cfg
                .mass_data
                .clone()
                .ok_or_else(|| TrainError::Config("missing [mass_data] section".into()))?;
            mcfg.dim = cfg.experiment.kind.spatial_dim();
            mcfg.seed = seed;
            let data = mass::generate_mass::<f64>(&mcfg)?;
            let schema = Schema {
                spatial_dim: mcfg.dim,
                has_velocity: true,
                value_name: "rho",
            };
            let files = write_splits(dir, schema, &data.train, &data.val, &data.test)?;
            write_metadata(&dir.join("meta.json"), &mcfg, seed, "mass: parcels per area-or-volume; velocity: space per time")?;
            Ok(GenSummary {
                files,
                n_train: data.train.len(),
                n_val: data.val.len(),
                n_test: data.test.len(),
                total_mass: Some(data.total_mass),
                noise_sigma: Some(data.noise_sigma),
            })
        }
        ExperimentKind::Heat => {
            let mut hcfg = cfg
                .heat_data
                .clone()
                .ok_or_else(|| TrainError::Config("missing [heat_data] section".into()))?;
            hcfg.seed = seed;
            let data = heat::generate_heat::<f64>(&hcfg)?;
            let schema = Schema { spatial_dim: 2, has_velocity: false, value_name: "T" };
            let files = write_splits(dir, schema, &data.train, &data.val, &data.test)?;
            write_metadata(&dir.join("meta.json"), &hcfg, seed, "temperature: dimensionless")?;
            Ok(GenSummary {
                files,
                n_train: data.train.len(),
                n_val: data.val.len(),
                n_test: data.test.len(),
                total_mass: None,
                noise_sigma: None,
            })
        }
        ExperimentKind::FokkerPlanck => {
            let mut fcfg = cfg
                .fp_data
                .clone()
                .ok_or_else(|| TrainError::Config("missing [fp_data] section".into()))?;
            fcfg.seed = seed;
            let init = fp::generate_fp_init::<f64>(&fcfg)?;
            let schema = Schema { spatial_dim: 1, has_velocity: false, value_name: "rho" };
            let path = dir.join("train.csv");
            write_csv(&path, schema, &init)?;
            write_metadata(&dir.join("meta.json"), &fcfg, seed, "probability density")?;
            Ok(GenSummary {
                files: vec![path],
                n_train: init.len(),
                n_val: 0,
                n_test: 0,
                total_mass: None,
                noise_sigma: None,
            })
        }
    }
}

fn write_splits(
    dir: &Path,
    schema: Schema,
    train: &[SensorObservation<f64>],
    val: &[SensorObservation<f64>],
    test: &[SensorObservation<f64>],
) -> Result<Vec<PathBuf>, TrainError> {
    let mut files = Vec::new();
    for (name, rows) in [("train.csv", train), ("val.csv", val), ("test.csv", test)] {
        let path = dir.join(name);
        write_csv(&path, schema, rows)?;
        files.push(path);
    }
    Ok(files)
}

/// Load the splits the experiment needs from `experiment.data_dir`.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, TrainError> {
    let dir = Path::new(&cfg.experiment.data_dir);
    let kind = cfg.experiment.kind;
    let read = |name: &str| -> Result<Vec<SensorObservation<f64>>, TrainError> {
        let (_, rows) = read_csv(&dir.join(name))?;
        Ok(rows)
    };
    match kind {
        ExperimentKind::FokkerPlanck => Ok(Dataset {
            kind,
            train: read("train.csv")?,
            val: Vec::new(),
            test: Vec::new(),
        }),
        _ => Ok(Dataset {
            kind,
            train: read("train.csv")?,
            val: read("val.csv")?,
            test: read("test.csv")?,
        }),
    }
}
