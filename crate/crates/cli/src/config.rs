//! Run configuration: a TOML file with optional `[assembler]` and
//! `[pipeline]` sections. Every command writes the fully resolved form
//! (defaults applied, flag overrides folded in) into its run directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nids_core::assembler::AssemblerConfig;
use nids_core::pipeline::PipelineConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub assembler: AssemblerConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    /// Loads the file, or the defaults when no path was given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
    }
}

/// What `resolved_config.toml` records: the command, the root seed, and the
/// effective configuration after defaults and overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
}
