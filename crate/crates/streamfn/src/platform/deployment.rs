//! JSON deployment files for the `serve` command.

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::{InstanceConfig, Isolation, OutputSpec, DEFAULT_BUFFER_CAPACITY};
use crate::sdk::{
    FrameDelta, FunctionRegistry, Grayscale, Identity, BUILTIN_FRAME_DELTA, BUILTIN_GRAYSCALE,
    BUILTIN_IDENTITY,
};

use super::serve::{PlatformConfig, DEFAULT_AWAIT_TIMEOUT};

/// On-disk deployment: where to listen and which functions to expose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Deployment {
    pub listen: String,
    #[serde(default)]
    pub stats_listen: Option<String>,
    pub functions: Vec<FunctionSpec>,
}

/// One deployed function. `name` selects a built-in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub isolation: Isolation,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default)]
    pub startup_delay_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputConfig {
    #[default]
    Discard,
    Downstream { addr: String, function: String },
}

fn default_capacity() -> usize {
    DEFAULT_BUFFER_CAPACITY
}

fn default_width() -> u32 {
    160
}

fn default_height() -> u32 {
    120
}

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("could not read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("could not parse deployment: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid deployment: {0}")]
    Invalid(String),
}

pub fn load_deployment(path: impl AsRef<Path>) -> Result<Deployment, DeploymentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DeploymentError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let deployment: Deployment = serde_json::from_str(&text)?;
    validate(&deployment)?;
    Ok(deployment)
}

fn validate(deployment: &Deployment) -> Result<(), DeploymentError> {
    deployment
        .listen
        .parse::<SocketAddr>()
        .map_err(|e| DeploymentError::Invalid(format!("listen {:?}: {e}", deployment.listen)))?;
    if let Some(stats) = &deployment.stats_listen {
        stats
            .parse::<SocketAddr>()
            .map_err(|e| DeploymentError::Invalid(format!("stats_listen {stats:?}: {e}")))?;
    }
    let mut seen = IndexMap::new();
    for spec in &deployment.functions {
        if seen.insert(spec.name.clone(), ()).is_some() {
            return Err(DeploymentError::Invalid(format!(
                "function {:?} listed twice",
                spec.name
            )));
        }
        if !matches!(
            spec.name.as_str(),
            BUILTIN_IDENTITY | BUILTIN_GRAYSCALE | BUILTIN_FRAME_DELTA
        ) {
            return Err(DeploymentError::Invalid(format!(
                "unknown function {:?}; available: {BUILTIN_IDENTITY}, {BUILTIN_GRAYSCALE}, {BUILTIN_FRAME_DELTA}",
                spec.name
            )));
        }
        if spec.buffer_capacity == 0 {
            return Err(DeploymentError::Invalid(format!(
                "function {:?}: buffer_capacity must be at least 1",
                spec.name
            )));
        }
        if spec.width == 0 || spec.height == 0 {
            return Err(DeploymentError::Invalid(format!(
                "function {:?}: width and height must be nonzero",
                spec.name
            )));
        }
        if !spec.startup_delay_s.is_finite() || spec.startup_delay_s < 0.0 {
            return Err(DeploymentError::Invalid(format!(
                "function {:?}: startup_delay_s must be finite and nonnegative",
                spec.name
            )));
        }
    }
    Ok(())
}

/// Turns a validated deployment into a platform configuration with the
/// built-in registry instantiated at each function's dimensions.
pub fn build_platform_config(deployment: &Deployment) -> Result<PlatformConfig, DeploymentError> {
    validate(deployment)?;
    let mut registry = FunctionRegistry::new();
    let mut functions = IndexMap::new();
    for spec in &deployment.functions {
        let (width, height) = (spec.width, spec.height);
        let result = match spec.name.as_str() {
            BUILTIN_IDENTITY => registry.register(&spec.name, || Box::new(Identity)),
            BUILTIN_GRAYSCALE => {
                registry.register(&spec.name, move || Box::new(Grayscale::new(width, height)))
            }
            BUILTIN_FRAME_DELTA => {
                registry.register(&spec.name, move || Box::new(FrameDelta::new(width, height)))
            }
            other => unreachable!("validated builtin name {other:?}"),
        };
        result.map_err(|e| DeploymentError::Invalid(e.to_string()))?;

        let mut config = InstanceConfig::new(&spec.name);
        config.buffer_capacity = spec.buffer_capacity;
        config.isolation = spec.isolation;
        config.width = spec.width;
        config.height = spec.height;
        config.startup_delay = Duration::from_secs_f64(spec.startup_delay_s);
        config.output = match &spec.output {
            OutputConfig::Discard => OutputSpec::Discard,
            OutputConfig::Downstream { addr, function } => OutputSpec::Downstream {
                addr: addr.clone(),
                function: function.clone(),
            },
        };
        functions.insert(spec.name.clone(), config);
    }

    Ok(PlatformConfig {
        listen: deployment.listen.parse().unwrap(),
        stats_listen: deployment
            .stats_listen
            .as_ref()
            .map(|s| s.parse().unwrap()),
        registry,
        functions,
        await_timeout: DEFAULT_AWAIT_TIMEOUT,
    })
}
