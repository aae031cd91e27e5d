//! Config file loading: TOML parse, dotted-path overrides, strict
//! deserialization (unknown keys are errors), content hashing.

use std::path::Path;

use anyhow::{bail, Context, Result};
use pdpinn::training::ExperimentConfig;

/// Load, override, and strictly deserialize a run config. Every validation
/// happens before any side effect.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut value: toml::Value =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    let cfg: ExperimentConfig = value
        .try_into()
        .context("config does not match the schema (unknown keys are rejected)")?;
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

/// `KEY=VALUE` with a dotted key path. `sampler=mh` is shorthand for
/// `sampler.kind=mh`.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override '{spec}' is not KEY=VALUE");
    };
    let key = if key == "sampler" { "sampler.kind" } else { key };
    let parsed = parse_value(raw);
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .with_context(|| format!("override path '{key}': '{part}' is not a table"))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!()
}

/// Interpret the value text as TOML; fall back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key v exists"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Stable content hash of the resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    format!("{:016x}", pdpinn::util::fnv1a(json.as_bytes()))
}

/// Combined hash over the dataset files that exist in the data dir.
pub fn dataset_hash(dir: &Path) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for name in ["train.csv", "val.csv", "test.csv", "meta.json"] {
        if let Ok(bytes) = std::fs::read(dir.join(name)) {
            h ^= pdpinn::util::fnv1a(&bytes);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Inclusive `A..B` seed range.
pub fn parse_seed_range(s: &str) -> Result<std::ops::RangeInclusive<u64>> {
    let Some((a, b)) = s.split_once("..") else {
        bail!("--seeds wants A..B (inclusive), got '{s}'");
    };
    let a: u64 = a.parse().context("seed range start")?;
    let b: u64 = b.parse().context("seed range end")?;
    if b < a {
        bail!("empty seed range {a}..{b}");
    }
    Ok(a..=b)
}
