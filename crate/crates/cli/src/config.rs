//! Config file support: flat key-value TOML with `[run]`, `[data]`,
//! `[shallow]` and `[deep]` sections. Command-line flags override file
//! values; every field is optional in the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub shallow: ShallowSection,
    #[serde(default)]
    pub deep: DeepSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub wall_clock: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub dim: Option<usize>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub test_n: usize,
    pub moments: Option<String>,
    pub noise: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowSection {
    pub mode: Option<String>,
    pub delta: Option<f64>,
    pub k: Option<u64>,
    pub smoothing: Option<f64>,
    pub steps: Option<u64>,
    pub eval_every: Option<u64>,
    pub lr: Option<f64>,
    pub grid: Option<bool>,
    pub last_iterate: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepSection {
    pub arch: Option<String>,
    pub mode: Option<String>,
    pub delta: Option<f64>,
    pub k: Option<u64>,
    pub epochs: Option<u64>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub lr_drop_epoch: Option<u64>,
    pub momentum: Option<f64>,
    pub init_std: Option<f64>,
    pub eval_every: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Parses a moment-profile string: `loguniform:LO:HI` or `explicit:a,b,c`.
pub fn parse_moment_profile(s: &str) -> anyhow::Result<evodrop::data::MomentProfile> {
    if let Some(rest) = s.strip_prefix("loguniform:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            bail!("expected loguniform:LO:HI, got {s:?}");
        }
        let lo: f64 = parts[0].parse().context("log-uniform lower bound")?;
        let hi: f64 = parts[1].parse().context("log-uniform upper bound")?;
        Ok(evodrop::data::MomentProfile::LogUniform { lo, hi })
    } else if let Some(rest) = s.strip_prefix("explicit:") {
        let values = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .context("explicit moment list")?;
        Ok(evodrop::data::MomentProfile::Explicit(values))
    } else {
        bail!("unknown moment profile {s:?}; use loguniform:LO:HI or explicit:a,b,c");
    }
}

/// Parses a comma-separated architecture like `784,150,10`.
pub fn parse_arch(s: &str) -> anyhow::Result<Vec<usize>> {
    let dims = s
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<Result<Vec<usize>, _>>()
        .with_context(|| format!("parsing architecture {s:?}"))?;
    if dims.len() < 2 {
        bail!("architecture needs at least input and output sizes, got {s:?}");
    }
    Ok(dims)
}
