//! Benchmark harness for the stream-function platform: drives one paced
//! frame stream through four execution modes (per-stream streaming,
//! per-event invocation, whole-stream batch, and a buffering engine with
//! an injected cold start) and reports the cold-start fraction theta,
//! processing overhead, and per-frame latency percentiles.

pub mod metrics;
pub mod modes;
pub mod report;
pub mod workload;

pub use metrics::{compute_overhead_s, compute_theta, percentile, MetricError};
pub use modes::{fetch_stats, run_mode, BenchError, BenchReport, Mode, ModeConfig};
pub use report::{
    append_latencies, append_report, latency_sidecar_path, read_report, ReportRow,
    LATENCY_HEADER, REPORT_HEADER,
};
pub use workload::{sleep_until, FramePool, WorkloadError, WorkloadSpec};
