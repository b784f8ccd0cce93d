//! Optional TOML configuration shared by all subcommands. Every value
//! has a flag counterpart and flags win over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toolforge_core::isif::IsifConfig;
use toolforge_core::{Error, Result};

/// Seed used when neither the config file nor --seed provides one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub store: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    /// Warm-up, in-category, and cross-category epoch counts.
    pub epochs: Option<(usize, usize, usize)>,
    pub distractors: Option<usize>,
    pub scorer_cmd: Option<String>,
    pub scorer_url: Option<String>,
    pub generator_cmd: Option<String>,
    pub generator_url: Option<String>,
    pub embedder_cmd: Option<String>,
    pub embedder_url: Option<String>,
    pub isif: Option<IsifConfig>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// The file value unless the flag supplied one.
    pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
        flag.clone().or_else(|| file.clone())
    }
}

/// A required path, from flag or config file.
pub fn require_path(name: &str, flag: &Option<PathBuf>, file: &Option<PathBuf>) -> Result<PathBuf> {
    PipelineConfig::pick(flag, file)
        .ok_or_else(|| Error::config(format!("missing required input: --{name}")))
}
