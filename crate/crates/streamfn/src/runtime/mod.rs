//! Per-stream instance runtime.
//!
//! An instance is the unit of compute for exactly one stream: a bounded
//! input FIFO, a handler running the user function, and an output sink.
//! Instances are created when a stream opens and release everything they
//! hold when the stream ends.

mod child;
mod collector;
mod fifo;
mod instance;

pub use child::host_main;
pub use collector::{CollectedEvent, Collector};
pub use fifo::{BoundedFifo, FifoConsumer};
pub use instance::{spawn_instance, InstanceHandle, InstanceOutcome};

use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdk::HandlerResult;

/// Default input FIFO capacity, in events.
pub const DEFAULT_BUFFER_CAPACITY: usize = 1024;

/// Where a stream function runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isolation {
    /// Handler thread inside the control-plane process.
    #[default]
    InProcess,
    /// Dedicated host process per stream, fed over a local socket.
    ChildProcess,
}

/// Where an instance's emitted events go.
#[derive(Clone, Default)]
pub enum OutputSpec {
    /// Drop outputs after counting them.
    #[default]
    Discard,
    /// Record outputs in memory.
    Collect(Arc<Collector>),
    /// Open a stream to another platform address and forward outputs to
    /// the named function there.
    Downstream { addr: String, function: String },
}

impl std::fmt::Debug for OutputSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputSpec::Discard => write!(f, "Discard"),
            OutputSpec::Collect(_) => write!(f, "Collect"),
            OutputSpec::Downstream { addr, function } => {
                write!(f, "Downstream({function}@{addr})")
            }
        }
    }
}

/// Everything needed to run one instance for one stream.
#[derive(Debug, Clone)]
pub struct InstanceConfig {
    /// Registered function name.
    pub function: String,
    /// Input FIFO capacity in events.
    pub buffer_capacity: usize,
    pub output: OutputSpec,
    pub isolation: Isolation,
    /// Frame width the built-in image functions are configured for.
    pub width: u32,
    /// Frame height the built-in image functions are configured for.
    pub height: u32,
    /// Artificial initialization delay before the handler starts pulling
    /// events, for modeling slow function startup. Input arriving during
    /// the delay buffers in the FIFO.
    pub startup_delay: Duration,
    /// Explicit host binary for child-process isolation; when unset the
    /// binary is located via `STREAMFN_BIN` or next to the current
    /// executable.
    pub host_binary: Option<PathBuf>,
}

impl InstanceConfig {
    pub fn new(function: impl Into<String>) -> Self {
        Self {
            function: function.into(),
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            output: OutputSpec::Discard,
            isolation: Isolation::InProcess,
            width: 160,
            height: 120,
            startup_delay: Duration::ZERO,
            host_binary: None,
        }
    }
}

/// Instance lifecycle. States only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    /// Allocated, handler not started.
    Created,
    /// Function initialization in progress; input buffers.
    Initializing,
    /// Handler consuming events.
    Running,
    /// End of input seen, handler draining what is buffered. Skipped when
    /// the handler finishes before end of input is signalled.
    Draining,
    /// Handler done, resources released.
    Terminated,
}

#[derive(Debug, Error)]
pub enum SpawnError {
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("function {0:?} is not available in the child-process host")]
    NotHostable(String),
    #[error("instance configuration invalid: {0}")]
    BadConfig(String),
    #[error("could not locate the instance host binary; set STREAMFN_BIN")]
    HostBinaryNotFound,
    #[error("failed to launch instance host: {0}")]
    HostLaunch(#[source] io::Error),
    #[error("instance host handshake failed: {0}")]
    Handshake(String),
    #[error("could not connect downstream to {addr}: {source}")]
    DownstreamConnect { addr: String, source: io::Error },
}

/// Why an event could not be delivered to an instance.
#[derive(Debug, Error)]
pub enum DeliverError {
    #[error("instance is no longer accepting events")]
    Closed,
    #[error("instance transport failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance did not terminate within {timeout:?} (state {state:?})")]
    AwaitTimeout {
        timeout: Duration,
        state: InstanceState,
    },
    #[error("instance worker disappeared without reporting a result")]
    Vanished,
}

/// A failed invocation: what went wrong plus the accounting up to that
/// point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureInfo {
    pub message: String,
    pub partial: HandlerResult,
}

/// Marker for an instance's held resources. The worker owns the only
/// strong reference; observers hold [`std::sync::Weak`] and count an
/// instance as live while the upgrade succeeds.
pub struct ResourceCore {
    _created_ns: u64,
}

impl ResourceCore {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(Self {
            _created_ns: crate::clock::monotonic_ns(),
        })
    }
}
