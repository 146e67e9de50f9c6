//! Run configuration file support.
//!
//! The `--config` flag points at a TOML file of plain key = value pairs.
//! Precedence everywhere is: explicit flag, then config file, then the
//! built-in default; every subcommand prints the effective configuration
//! it resolved before doing any work.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

/// Every key a configuration file may set. All optional; subcommands read
/// the keys they understand and ignore the rest.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<String>,
    pub queries: Option<String>,
    pub heads: Option<String>,
    pub k: Option<usize>,
    pub mask: Option<String>,
    pub fusion: Option<String>,
    pub epsilon: Option<f64>,
    pub dimension: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<String>,
    pub loss_mode: Option<String>,
    pub seed: Option<u64>,
    pub positive: Option<String>,
}

pub fn load_file_config(path: &Path) -> anyhow::Result<FileConfig> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&content).with_context(|| format!("parsing config file {}", path.display()))
}
