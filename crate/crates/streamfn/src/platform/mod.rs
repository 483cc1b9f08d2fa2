//! Control plane: stream listener, routing, stats, and deployment files.

mod deployment;
mod serve;
mod stats;

pub use deployment::{
    build_platform_config, load_deployment, Deployment, DeploymentError, FunctionSpec,
    OutputConfig,
};
pub use serve::{start_platform, PlatformConfig, PlatformHandle, DEFAULT_AWAIT_TIMEOUT};
pub use stats::{PlatformStats, StatsSummary, StreamRecord};
