//! Checkpoint file format: a versioned text header per model (config,
//! rescale map, envelope as decimal text) followed by the parameters as
//! little-endian 64-bit floats. Round-trips bit-exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ActivationKind, DensityModel, FieldNet, GaussianEnvelope, MlpConfig, ParamVector, VelocityModel};
use crate::linalg::Mat;
use crate::num::Real;

const MAGIC: &str = "pdpinn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("model build: {0}")]
    Build(#[from] super::FieldError),
}

/// What a training run persists: the density field and, for the mass
/// experiments, the velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet<F: Real> {
    pub density: DensityModel<F>,
    pub velocity: Option<VelocityModel<F>>,
}

fn fmt_f64(x: f64) -> String {
    // `{:?}` prints the shortest decimal that parses back to the same bits.
    format!("{x:?}")
}

fn write_net<F: Real, W: Write>(
    w: &mut W,
    kind: &str,
    net: &FieldNet,
    params: &ParamVector<F>,
) -> Result<(), CheckpointError> {
    writeln!(w, "model {kind}")?;
    let c = &net.cfg;
    writeln!(
        w,
        "mlp {} {} {} {} {} {} {}",
        c.input_dim,
        c.output_dim,
        c.hidden_layers,
        c.hidden_units,
        match c.activation {
            ActivationKind::Sine => "sine",
            ActivationKind::Tanh => "tanh",
        },
        fmt_f64(c.omega0),
        c.seed
    )?;
    let parts: Vec<String> = net
        .rescale
        .iter()
        .flat_map(|&(s, o)| [fmt_f64(s), fmt_f64(o)])
        .collect();
    writeln!(w, "rescale {}", parts.join(" "))?;
    writeln!(w, "params {}", params.data.len())?;
    let mut bytes = Vec::with_capacity(params.data.len() * 8);
    for &p in &params.data {
        bytes.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    w.write_all(&bytes)?;
    writeln!(w)?;
    Ok(())
}

fn write_envelope<F: Real, W: Write>(
    w: &mut W,
    env: &GaussianEnvelope<F>,
    c_max: F,
    output_scale: F,
    unit_head: bool,
) -> Result<(), CheckpointError> {
    let d = env.dim();
    let mu: Vec<String> = env.mu.iter().map(|m| fmt_f64(m.as_f64())).collect();
    writeln!(w, "envelope_mu {}", mu.join(" "))?;
    let mut sig = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            sig.push(fmt_f64(env.sigma[(i, j)].as_f64()));
        }
    }
    writeln!(w, "envelope_sigma {}", sig.join(" "))?;
    writeln!(w, "envelope_c {}", fmt_f64(env.c.as_f64()))?;
    writeln!(w, "c_max {}", fmt_f64(c_max.as_f64()))?;
    writeln!(w, "output_scale {}", fmt_f64(output_scale.as_f64()))?;
    writeln!(w, "unit_head {}", u8::from(unit_head))?;
    Ok(())
}

pub fn save_models<F: Real>(path: &Path, set: &ModelSet<F>) -> Result<(), CheckpointError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MAGIC} v{VERSION}")?;
    writeln!(w, "models {}", 1 + usize::from(set.velocity.is_some()))?;
    write_envelope(
        &mut w,
        &set.density.envelope,
        set.density.c_max,
        set.density.output_scale,
        set.density.unit_head,
    )?;
    write_net(&mut w, "density", &set.density.net, &set.density.params)?;
    if let Some(v) = &set.velocity {
        write_net(&mut w, "velocity", &v.net, &v.params)?;
    }
    Ok(())
}

struct Reader<R> {
    inner: BufReader<R>,
}

impl<R: Read> Reader<R> {
    fn line(&mut self) -> Result<String, CheckpointError> {
        let mut s = String::new();
        let n = self.inner.read_line(&mut s)?;
        if n == 0 {
            return Err(CheckpointError::Header("unexpected end of file".into()));
        }
        Ok(s.trim_end_matches('\n').to_string())
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>, CheckpointError> {
        let line = self.line()?;
        let mut parts = line.split_whitespace().map(str::to_string);
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(CheckpointError::Header(format!(
                "expected key '{key}', got {other:?}"
            ))),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, CheckpointError> {
    s.parse::<f64>()
        .map_err(|e| CheckpointError::Header(format!("bad float '{s}': {e}")))
}

fn parse_usize(s: &str) -> Result<usize, CheckpointError> {
    s.parse::<usize>()
        .map_err(|e| CheckpointError::Header(format!("bad integer '{s}': {e}")))
}

fn read_net<F: Real, R: Read>(
    r: &mut Reader<R>,
    expect_kind: &str,
) -> Result<(FieldNet, ParamVector<F>), CheckpointError> {
    let kind = r.keyed("model")?;
    if kind.first().map(String::as_str) != Some(expect_kind) {
        return Err(CheckpointError::Header(format!(
            "expected model kind {expect_kind}, got {kind:?}"
        )));
    }
    let m = r.keyed("mlp")?;
    if m.len() != 7 {
        return Err(CheckpointError::Header("mlp line wants 7 fields".into()));
    }
    let cfg = MlpConfig {
        input_dim: parse_usize(&m[0])?,
        output_dim: parse_usize(&m[1])?,
        hidden_layers: parse_usize(&m[2])?,
        hidden_units: parse_usize(&m[3])?,
        activation: match m[4].as_str() {
            "sine" => ActivationKind::Sine,
            "tanh" => ActivationKind::Tanh,
            other => {
                return Err(CheckpointError::Header(format!("unknown activation {other}")))
            }
        },
        omega0: parse_f64(&m[5])?,
        seed: m[6]
            .parse::<u64>()
            .map_err(|e| CheckpointError::Header(format!("bad seed: {e}")))?,
    };
    let rs = r.keyed("rescale")?;
    if rs.len() != 2 * cfg.input_dim {
        return Err(CheckpointError::Header("rescale arity mismatch".into()));
    }
    let mut rescale = Vec::with_capacity(cfg.input_dim);
    for pair in rs.chunks(2) {
        rescale.push((parse_f64(&pair[0])?, parse_f64(&pair[1])?));
    }
    let n = parse_usize(
        r.keyed("params")?
            .first()
            .ok_or_else(|| CheckpointError::Header("params line wants a count".into()))?,
    )?;
    let mut bytes = vec![0u8; n * 8];
    r.inner.read_exact(&mut bytes)?;
    let mut trailing = [0u8; 1];
    r.inner.read_exact(&mut trailing)?;
    if trailing[0] != b'\n' {
        return Err(CheckpointError::Header("missing newline after params".into()));
    }
    let data: Vec<F> = bytes
        .chunks_exact(8)
        .map(|c| F::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let params = ParamVector::unflatten(cfg.layer_shapes(), cfg.activation, data)?;
    let net = FieldNet::new(cfg, rescale)?;
    Ok((net, params))
}

pub fn load_models<F: Real>(path: &Path) -> Result<ModelSet<F>, CheckpointError> {
    let mut r = Reader { inner: BufReader::new(std::fs::File::open(path)?) };
    let head = r.line()?;
    let Some(rest) = head.strip_prefix(MAGIC) else {
        return Err(CheckpointError::Header(format!("bad magic: {head}")));
    };
    let version: u32 = rest
        .trim()
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CheckpointError::Header("missing version".into()))?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let n_models = parse_usize(
        r.keyed("models")?
            .first()
            .ok_or_else(|| CheckpointError::Header("models line wants a count".into()))?,
    )?;

    let mu: Vec<F> = r
        .keyed("envelope_mu")?
        .iter()
        .map(|s| parse_f64(s).map(F::of))
        .collect::<Result<_, _>>()?;
    let d = mu.len();
    let sig_entries: Vec<F> = r
        .keyed("envelope_sigma")?
        .iter()
        .map(|s| parse_f64(s).map(F::of))
        .collect::<Result<_, _>>()?;
    if sig_entries.len() != d * d {
        return Err(CheckpointError::Header("envelope sigma arity mismatch".into()));
    }
    let mut sigma = Mat::zeros(d);
    sigma.data = sig_entries;
    let c = F::of(parse_f64(
        r.keyed("envelope_c")?
            .first()
            .ok_or_else(|| CheckpointError::Header("envelope_c wants a value".into()))?,
    )?);
    let c_max = F::of(parse_f64(
        r.keyed("c_max")?
            .first()
            .ok_or_else(|| CheckpointError::Header("c_max wants a value".into()))?,
    )?);
    let output_scale = F::of(parse_f64(
        r.keyed("output_scale")?
            .first()
            .ok_or_else(|| CheckpointError::Header("output_scale wants a value".into()))?,
    )?);
    let unit_head = r
        .keyed("unit_head")?
        .first()
        .map(|s| s == "1")
        .ok_or_else(|| CheckpointError::Header("unit_head wants a value".into()))?;

    // Sigma in the file is the already-inflated covariance; rebuild with
    // c = 0 inflation on top and record the original c for reference.
    let mut envelope = GaussianEnvelope::new(mu, sigma, F::zero())?;
    envelope.c = c;

    let (net, params) = read_net::<F, _>(&mut r, "density")?;
    let density = DensityModel { net, params, envelope, c_max, output_scale, unit_head };
    let velocity = if n_models > 1 {
        let (net, params) = read_net::<F, _>(&mut r, "velocity")?;
        Some(VelocityModel { net, params })
    } else {
        None
    };
    Ok(ModelSet { density, velocity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldnet::fit_envelope;

    fn sample_set() -> ModelSet<f64> {
        let env = fit_envelope(
            &[vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.5, 0.5], vec![2.0, -1.0]],
            0.25,
        )
        .unwrap();
        let density = DensityModel::init(
            MlpConfig {
                input_dim: 3,
                output_dim: 1,
                hidden_layers: 2,
                hidden_units: 10,
                activation: ActivationKind::Sine,
                omega0: 12.0,
                seed: 42,
            },
            vec![(0.5, 0.0), (0.33, 0.1), (0.33, -0.1)],
            env,
            1e3,
        )
        .unwrap();
        let velocity = VelocityModel::init(
            MlpConfig {
                input_dim: 3,
                output_dim: 2,
                hidden_layers: 1,
                hidden_units: 8,
                activation: ActivationKind::Sine,
                omega0: 12.0,
                seed: 43,
            },
            vec![(0.5, 0.0), (0.33, 0.1), (0.33, -0.1)],
        )
        .unwrap();
        ModelSet { density, velocity: Some(velocity) }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let set = sample_set();
        let dir = std::env::temp_dir().join("pdpinn-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.bin");
        save_models(&path, &set).unwrap();
        let back: ModelSet<f64> = load_models(&path).unwrap();

        let pts = [[0.1, -0.4, 0.9], [2.0, 1.0, -1.0], [0.0, 0.0, 0.0]];
        for p in pts {
            let a = set.density.forward(&p);
            let b = back.density.forward(&p);
            assert_eq!(a.to_bits(), b.to_bits());
            let va = set.velocity.as_ref().unwrap().forward(&p);
            let vb = back.velocity.as_ref().unwrap().forward(&p);
            for (x, y) in va.iter().zip(&vb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_garbage_and_wrong_version() {
        let dir = std::env::temp_dir().join("pdpinn-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load_models::<f64>(&path),
            Err(CheckpointError::Header(_))
        ));
        std::fs::write(&path, b"pdpinn-checkpoint v9\n").unwrap();
        assert!(matches!(
            load_models::<f64>(&path),
            Err(CheckpointError::Version(9))
        ));
        std::fs::remove_file(&path).ok();
    }
}
