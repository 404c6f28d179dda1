//! TOML configuration shared by every subcommand. Command-line flags
//! override the values read here.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use citefusion::aggregate::AggregatorConfig;
use citefusion::pipeline::PipelineConfig;
use citefusion::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub ws_bundle: Option<PathBuf>,
    pub wos_bundle: Option<PathBuf>,
    /// Request body limit in bytes.
    pub max_body_bytes: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            ws_bundle: None,
            wos_bundle: None,
            max_body_bytes: 2 * 1024 * 1024,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// `scicite`, `acl-arc` or a path to a TOML label schema.
    pub schema: Option<String>,
    pub dataset: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub aggregator: AggregatorConfig,
    pub synth: SynthConfig,
    pub serve: ServeConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml_str(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }
}
