//! Dataset files: CSV rows `t,x,y[,z],layer,<value>,vx,vy[,vz]` plus a JSON
//! metadata sidecar recording the generator configuration and seed.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataGenError, SensorObservation};
use crate::num::Real;

/// CSV schema descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub spatial_dim: usize,
    pub has_velocity: bool,
    /// Column name of the scalar value: "rho" for densities, "T" for heat.
    pub value_name: &'static str,
}

impl Schema {
    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for d in 0..self.spatial_dim {
            cols.push(axis_name(d).to_string());
        }
        cols.push("layer".into());
        cols.push(self.value_name.into());
        if self.has_velocity {
            for d in 0..self.spatial_dim {
                cols.push(format!("v{}", axis_name(d)));
            }
        }
        cols.join(",")
    }
}

fn axis_name(d: usize) -> &'static str {
    ["x", "y", "z"][d]
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv<F: Real>(
    path: &Path,
    schema: Schema,
    rows: &[SensorObservation<F>],
) -> Result<(), DataGenError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", schema.header())?;
    for r in rows {
        debug_assert_eq!(r.pos.len(), schema.spatial_dim);
        let mut cols = Vec::with_capacity(3 + 2 * schema.spatial_dim);
        cols.push(fmt(r.t.as_f64()));
        for p in &r.pos {
            cols.push(fmt(p.as_f64()));
        }
        cols.push(r.layer.to_string());
        cols.push(fmt(r.rho.as_f64()));
        if schema.has_velocity {
            // rows without a velocity measurement carry nan placeholders
            for d in 0..schema.spatial_dim {
                cols.push(match r.vel.get(d) {
                    Some(v) => fmt(v.as_f64()),
                    None => "nan".to_string(),
                });
            }
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

pub fn read_csv<F: Real>(path: &Path) -> Result<(Schema, Vec<SensorObservation<F>>), DataGenError> {
    let bad = |reason: &str| DataGenError::BadDataset {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(bad("first column must be t"));
    }
    let layer_idx = cols
        .iter()
        .position(|c| *c == "layer")
        .ok_or_else(|| bad("missing layer column"))?;
    let spatial_dim = layer_idx - 1;
    if spatial_dim == 0 || spatial_dim > 3 {
        return Err(bad("unsupported spatial dimension"));
    }
    let value_name = match cols.get(layer_idx + 1) {
        Some(&"rho") => "rho",
        Some(&"T") => "T",
        _ => return Err(bad("value column must be rho or T")),
    };
    let has_velocity = cols.len() > layer_idx + 2;
    let want_cols = layer_idx + 2 + if has_velocity { spatial_dim } else { 0 };
    if cols.len() != want_cols {
        return Err(bad("unexpected column count"));
    }
    let schema = Schema { spatial_dim, has_velocity, value_name };

    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != want_cols {
            return Err(bad(&format!("row {} has {} columns", ln + 2, parts.len())));
        }
        let pf = |s: &str| -> Result<F, DataGenError> {
            s.parse::<f64>()
                .map(F::of)
                .map_err(|e| bad(&format!("row {}: bad float '{s}': {e}", ln + 2)))
        };
        let t = pf(parts[0])?;
        let pos: Vec<F> = parts[1..1 + spatial_dim]
            .iter()
            .map(|s| pf(s))
            .collect::<Result<_, _>>()?;
        let layer: u32 = parts[layer_idx]
            .parse()
            .map_err(|_| bad(&format!("row {}: bad layer", ln + 2)))?;
        let rho = pf(parts[layer_idx + 1])?;
        let mut vel: Vec<F> = if has_velocity {
            parts[layer_idx + 2..]
                .iter()
                .map(|s| pf(s))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        if vel.iter().any(|v| v.is_nan()) {
            vel.clear();
        }
        rows.push(SensorObservation { t, pos, layer, rho, vel });
    }
    Ok((schema, rows))
}

/// Sidecar metadata: generator config echo, seed, units note.
pub fn write_metadata(
    path: &Path,
    config: &impl serde::Serialize,
    seed: u64,
    units: &str,
) -> Result<(), DataGenError> {
    let doc = serde_json::json!({
        "generator": config,
        "seed": seed,
        "units": units,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serializable"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_preserves_values() {
        let rows: Vec<SensorObservation<f64>> = vec![
            SensorObservation {
                t: 0.1,
                pos: vec![0.25, -1.5],
                layer: 0,
                rho: 5.09295817894,
                vel: vec![0.125, -0.5],
            },
            SensorObservation {
                t: 0.30000000000000004,
                pos: vec![1.0, 2.0],
                layer: 3,
                rho: 0.0,
                vel: vec![0.0, 0.0],
            },
        ];
        let schema = Schema { spatial_dim: 2, has_velocity: true, value_name: "rho" };
        let dir = std::env::temp_dir().join("pdpinn-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_csv(&path, schema, &rows).unwrap();
        let (schema_back, back) = read_csv::<f64>(&path).unwrap();
        assert_eq!(schema_back, schema);
        assert_eq!(back, rows);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn heat_schema_uses_temperature_column() {
        let schema = Schema { spatial_dim: 2, has_velocity: false, value_name: "T" };
        assert_eq!(schema.header(), "t,x,y,layer,T");
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = std::env::temp_dir().join("pdpinn-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "a,b,c\n").unwrap();
        assert!(read_csv::<f64>(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
