//! The four execution modes under measurement and the runner that drives
//! one paced stream through each of them.
//!
//! All timestamps come from the monotonic clock on the machine running the
//! bench. Remote platforms must share that clock domain (same host), since
//! the platform's stream records are compared against the bench's own `t0`.

use std::io::{self, BufRead, BufReader, Write as _};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use streamfn::clock::monotonic_ns;
use streamfn::platform::{
    start_platform, PlatformConfig, StatsSummary, StreamRecord, DEFAULT_AWAIT_TIMEOUT,
};
use streamfn::runtime::{Collector, InstanceConfig, Isolation, OutputSpec};
use streamfn::sdk::run_handler;
use streamfn::wire::FrameSendError;
use streamfn::{write_frame, Frame, FunctionRegistry};

use crate::metrics::{compute_overhead_s, compute_theta, MetricError};
use crate::workload::{sleep_until, FramePool, WorkloadError, WorkloadSpec};

/// How the stream is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One function instance per stream on the platform; events flow as
    /// they arrive.
    StreamFn,
    /// One fresh function construction and invocation per frame,
    /// process-local, at most one invocation in flight.
    FaasPerEvent,
    /// The whole stream is buffered during generation, then processed in
    /// a single invocation.
    Batch,
    /// Like [`Mode::StreamFn`], but the instance sleeps a configured cold
    /// start before touching its first event while frames buffer.
    EngineEmulated,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::StreamFn,
        Mode::FaasPerEvent,
        Mode::Batch,
        Mode::EngineEmulated,
    ];

    /// The CLI and CSV token for this mode.
    pub fn name(self) -> &'static str {
        match self {
            Mode::StreamFn => "stream_fn",
            Mode::FaasPerEvent => "faas",
            Mode::Batch => "batch",
            Mode::EngineEmulated => "engine",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stream_fn" => Ok(Mode::StreamFn),
            "faas" | "faas_per_event" => Ok(Mode::FaasPerEvent),
            "batch" => Ok(Mode::Batch),
            "engine" | "engine_emulated" => Ok(Mode::EngineEmulated),
            other => Err(format!(
                "unknown mode {other:?} (expected stream_fn, faas, batch, or engine)"
            )),
        }
    }
}

/// Per-run settings beyond the workload itself.
#[derive(Debug, Clone)]
pub struct ModeConfig {
    pub mode: Mode,
    /// Registered function to run; the built-in image functions are
    /// available under every mode.
    pub function: String,
    /// Cold start injected before the instance touches its first event.
    /// Engine mode only.
    pub injected_cold_start_s: f64,
    /// Extra fixed cost added to every invocation. Per-event mode only.
    pub per_invocation_overhead_s: f64,
    /// Instance isolation for the platform-backed modes.
    pub isolation: Isolation,
    /// Explicit host binary for child-process isolation.
    pub host_binary: Option<PathBuf>,
    /// Run against an already-running platform instead of an embedded
    /// one. Streaming mode only; output latencies are not observable.
    pub platform: Option<SocketAddr>,
    /// Stats endpoint of the external platform. Defaults to the platform
    /// address with the port one higher.
    pub stats: Option<SocketAddr>,
}

impl ModeConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            function: "grayscale".to_string(),
            injected_cold_start_s: 118.0,
            per_invocation_overhead_s: 0.0,
            isolation: Isolation::InProcess,
            host_binary: None,
            platform: None,
            stats: None,
        }
    }
}

/// Everything measured for one run.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub mode: Mode,
    pub workload: WorkloadSpec,
    /// Stream start: taken immediately before the generator begins.
    pub t0_ns: u64,
    /// First event reaching the processing side; see [`run_mode`] for the
    /// per-mode definition.
    pub t1_ns: u64,
    /// Processing finished for the whole stream.
    pub t2_ns: u64,
    pub theta: f64,
    pub overhead_s: f64,
    pub frames_sent: u64,
    pub frames_processed: u64,
    /// Per-frame send-to-done latencies in milliseconds, indexed by frame
    /// sequence number. Empty when outputs are not observable.
    pub latencies_ms: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("engine mode injects its own cold start and requires the embedded platform")]
    EngineNeedsEmbedded,
    #[error("{0} mode runs process-local and does not take a platform address")]
    LocalMode(&'static str),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("platform: {0}")]
    Platform(String),
    #[error("function failed: {0}")]
    Function(String),
    #[error("stream did not finish within {0:?}")]
    Timeout(Duration),
    #[error("frames processed ({got}) != frames sent ({want})")]
    FrameLoss { want: u64, got: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Runs one stream through `config.mode` and measures it.
///
/// `t1` per mode: platform receipt of the first frame (`stream_fn`), the
/// first event reaching the function after the injected cold start
/// (`engine`), the first invocation touching its event (`faas`), and the
/// single invocation touching the first buffered frame (`batch`). `t2` is
/// always when processing of the last frame finished.
pub fn run_mode(config: &ModeConfig, workload: &WorkloadSpec) -> Result<BenchReport, BenchError> {
    workload.validate()?;
    if !config.injected_cold_start_s.is_finite() || config.injected_cold_start_s < 0.0 {
        return Err(BenchError::Config(
            "injected cold start must be nonnegative and finite".to_string(),
        ));
    }
    if !config.per_invocation_overhead_s.is_finite() || config.per_invocation_overhead_s < 0.0 {
        return Err(BenchError::Config(
            "per-invocation overhead must be nonnegative and finite".to_string(),
        ));
    }
    match config.mode {
        Mode::StreamFn => run_streaming(config, workload, Duration::ZERO),
        Mode::EngineEmulated => {
            if config.platform.is_some() {
                return Err(BenchError::EngineNeedsEmbedded);
            }
            let cold = Duration::from_secs_f64(config.injected_cold_start_s);
            run_streaming(config, workload, cold)
        }
        Mode::FaasPerEvent => {
            if config.platform.is_some() {
                return Err(BenchError::LocalMode("faas"));
            }
            run_faas(config, workload)
        }
        Mode::Batch => {
            if config.platform.is_some() {
                return Err(BenchError::LocalMode("batch"));
            }
            run_batch(config, workload)
        }
    }
}

fn builtin_registry(workload: &WorkloadSpec) -> FunctionRegistry {
    let mut registry = FunctionRegistry::new();
    registry.register_builtins(workload.width, workload.height);
    registry
}

fn deadline_ns(t0: u64, frame: usize, fps: f64) -> u64 {
    t0 + (frame as f64 * 1e9 / fps).round() as u64
}

fn assemble(
    config: &ModeConfig,
    workload: &WorkloadSpec,
    t0: u64,
    t1: u64,
    t2: u64,
    frames_processed: u64,
    latencies_ms: Vec<f64>,
) -> Result<BenchReport, BenchError> {
    let frames_sent = workload.frame_count() as u64;
    if frames_processed != frames_sent {
        return Err(BenchError::FrameLoss {
            want: frames_sent,
            got: frames_processed,
        });
    }
    let theta = compute_theta(t0, t1, t2)?;
    let overhead_s = compute_overhead_s(t0, t2, workload.generation_span_s())?;
    Ok(BenchReport {
        mode: config.mode,
        workload: workload.clone(),
        t0_ns: t0,
        t1_ns: t1,
        t2_ns: t2,
        theta,
        overhead_s,
        frames_sent,
        frames_processed,
        latencies_ms,
    })
}

/// Connects, sends the paced stream, and returns the actual send instant
/// of every frame.
fn generate_stream(
    addr: SocketAddr,
    function: String,
    pool: Arc<FramePool>,
    workload: WorkloadSpec,
    t0: u64,
) -> Result<Vec<u64>, BenchError> {
    let send = |e: FrameSendError| BenchError::Platform(format!("send failed: {e}"));
    let mut conn = TcpStream::connect(addr)?;
    conn.set_nodelay(true)?;
    write_frame(
        &mut conn,
        &Frame::Hello {
            function,
            stream_id: 0,
        },
    )
    .map_err(send)?;
    let n = workload.frame_count();
    let mut send_ns = Vec::with_capacity(n);
    for i in 0..n {
        sleep_until(deadline_ns(t0, i, workload.fps));
        write_frame(&mut conn, &Frame::Data(pool.event(i))).map_err(send)?;
        send_ns.push(monotonic_ns());
    }
    write_frame(&mut conn, &Frame::Eos).map_err(send)?;
    Ok(send_ns)
}

/// Queries a platform stats endpoint: one summary plus all stream records.
pub fn fetch_stats(addr: SocketAddr) -> Result<(StatsSummary, Vec<StreamRecord>), BenchError> {
    let mut conn = TcpStream::connect(addr)
        .map_err(|e| BenchError::Platform(format!("stats endpoint {addr}: {e}")))?;
    conn.write_all(b"stats\n")?;
    let mut lines = BufReader::new(conn).lines();
    let summary_line = lines
        .next()
        .ok_or_else(|| BenchError::Platform("stats endpoint sent nothing".to_string()))??;
    let summary: StatsSummary = serde_json::from_str(&summary_line)
        .map_err(|e| BenchError::Platform(format!("bad stats summary: {e}")))?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: StreamRecord = serde_json::from_str(&line)
            .map_err(|e| BenchError::Platform(format!("bad stream record: {e}")))?;
        records.push(record);
    }
    Ok((summary, records))
}

/// Pulls `t1`/`t2` out of a finished stream's record.
fn record_timestamps(mode: Mode, record: &StreamRecord) -> Result<(u64, u64), BenchError> {
    if let Some(failure) = &record.failure {
        return Err(BenchError::Platform(format!(
            "stream {} failed: {failure}",
            record.stream_id
        )));
    }
    let t1 = match mode {
        Mode::StreamFn => record.t_first_frame_ns,
        Mode::EngineEmulated => record.t_first_event_ns,
        _ => None,
    }
    .ok_or_else(|| BenchError::Platform("stream record has no first-event time".to_string()))?;
    let t2 = record
        .t_done_ns
        .ok_or_else(|| BenchError::Platform("stream record has no done time".to_string()))?;
    Ok((t1, t2))
}

fn await_deadline(workload: &WorkloadSpec, startup_delay: Duration) -> Duration {
    Duration::from_secs_f64(workload.duration_s) + startup_delay + Duration::from_secs(90)
}

/// Streaming modes: an embedded (or external) platform, one stream over
/// real TCP, measurements read back from the stats endpoint.
fn run_streaming(
    config: &ModeConfig,
    workload: &WorkloadSpec,
    startup_delay: Duration,
) -> Result<BenchReport, BenchError> {
    if let Some(addr) = config.platform {
        return run_streaming_external(config, workload, addr);
    }

    let collector = Arc::new(Collector::new());
    let registry = builtin_registry(workload);
    if !registry.contains(&config.function) {
        return Err(BenchError::UnknownFunction(config.function.clone()));
    }
    let mut template = InstanceConfig::new(&config.function);
    template.width = workload.width;
    template.height = workload.height;
    template.output = OutputSpec::Collect(collector.clone());
    template.isolation = config.isolation;
    template.host_binary = config.host_binary.clone();
    template.startup_delay = startup_delay;
    let mut platform_config = PlatformConfig::new(registry).with_function(template);
    // The drain wait must outlive the injected cold start, or the
    // platform declares the stream lost while the instance is still
    // sleeping its way toward the first event.
    platform_config.await_timeout = startup_delay + DEFAULT_AWAIT_TIMEOUT;
    let platform = start_platform(platform_config)?;
    let addr = platform.local_addr();
    let stats_addr = platform
        .stats_addr()
        .expect("embedded platform serves stats");

    let pool = Arc::new(FramePool::generate(workload));
    let t0 = monotonic_ns();
    let generator = {
        let (function, pool, workload) = (config.function.clone(), pool.clone(), workload.clone());
        thread::Builder::new()
            .name("bench-generator".to_string())
            .spawn(move || generate_stream(addr, function, pool, workload, t0))?
    };
    let send_ns = generator.join().expect("generator thread panicked")?;

    let deadline = await_deadline(workload, startup_delay);
    let poll_start = monotonic_ns();
    loop {
        let summary = platform.summary();
        if summary.streams_completed + summary.streams_failed >= 1 {
            break;
        }
        if monotonic_ns() - poll_start > deadline.as_nanos() as u64 {
            return Err(BenchError::Timeout(deadline));
        }
        thread::sleep(Duration::from_millis(10));
    }

    let (_, records) = fetch_stats(stats_addr)?;
    let record = records
        .last()
        .ok_or_else(|| BenchError::Platform("no stream record after run".to_string()))?;
    let (t1, t2) = record_timestamps(config.mode, record)?;
    let frames_processed = record.events_in;

    let latencies = latencies_from_collector(&collector, &send_ns)?;
    let report = assemble(config, workload, t0, t1, t2, frames_processed, latencies)?;
    platform.shutdown();
    Ok(report)
}

/// Streaming against an already-running platform. The platform keeps its
/// own output configuration, so per-frame latencies are not observable;
/// timestamps still come from its stats endpoint.
fn run_streaming_external(
    config: &ModeConfig,
    workload: &WorkloadSpec,
    addr: SocketAddr,
) -> Result<BenchReport, BenchError> {
    let stats_addr = config
        .stats
        .unwrap_or_else(|| SocketAddr::new(addr.ip(), addr.port().wrapping_add(1)));

    let pool = Arc::new(FramePool::generate(workload));
    let t0 = monotonic_ns();
    let generator = {
        let (function, pool, workload) = (config.function.clone(), pool.clone(), workload.clone());
        thread::Builder::new()
            .name("bench-generator".to_string())
            .spawn(move || generate_stream(addr, function, pool, workload, t0))?
    };
    generator.join().expect("generator thread panicked")?;

    let deadline = await_deadline(workload, Duration::ZERO);
    let poll_start = monotonic_ns();
    let record = loop {
        let (_, records) = fetch_stats(stats_addr)?;
        let ours = records
            .into_iter()
            .filter(|r| r.function == config.function && r.t_accept_ns >= t0)
            .max_by_key(|r| r.stream_id);
        if let Some(r) = ours {
            if r.t_terminated_ns.is_some() {
                break r;
            }
        }
        if monotonic_ns() - poll_start > deadline.as_nanos() as u64 {
            return Err(BenchError::Timeout(deadline));
        }
        thread::sleep(Duration::from_millis(100));
    };
    let (t1, t2) = record_timestamps(Mode::StreamFn, &record)?;
    assemble(config, workload, t0, t1, t2, record.events_in, Vec::new())
}

fn latencies_from_collector(
    collector: &Collector,
    send_ns: &[u64],
) -> Result<Vec<f64>, BenchError> {
    let mut latencies = vec![f64::NAN; send_ns.len()];
    let collected = collector.snapshot();
    for c in &collected {
        let seq = c
            .event
            .seq()
            .ok_or_else(|| BenchError::Platform("output event lost its seq header".to_string()))?
            as usize;
        if seq >= send_ns.len() {
            return Err(BenchError::Platform(format!(
                "output seq {seq} out of range"
            )));
        }
        latencies[seq] = (c.arrived_ns.saturating_sub(send_ns[seq])) as f64 / 1e6;
    }
    if collected.len() != send_ns.len() || latencies.iter().any(|l| l.is_nan()) {
        return Err(BenchError::Platform(format!(
            "collected {} outputs for {} frames",
            collected.len(),
            send_ns.len()
        )));
    }
    Ok(latencies)
}

/// Per-event mode: each frame gets a freshly constructed function and its
/// own invocation, one at a time. The registry itself is built lazily so
/// the first invocation pays the one-time host setup, the way a scaled-
/// from-zero handler would.
fn run_faas(config: &ModeConfig, workload: &WorkloadSpec) -> Result<BenchReport, BenchError> {
    let pool = FramePool::generate(workload);
    let n = workload.frame_count();
    let overhead = Duration::from_secs_f64(config.per_invocation_overhead_s);

    let mut registry: Option<FunctionRegistry> = None;
    let mut t1 = None;
    let mut last_done = 0;
    let mut processed = 0;
    let mut latencies = Vec::with_capacity(n);

    let t0 = monotonic_ns();
    for i in 0..n {
        sleep_until(deadline_ns(t0, i, workload.fps));
        let event = pool.event(i);
        let sent = monotonic_ns();
        let registry = registry.get_or_insert_with(|| builtin_registry(workload));
        if !overhead.is_zero() {
            thread::sleep(overhead);
        }
        let mut function = registry
            .instantiate(&config.function)
            .ok_or_else(|| BenchError::UnknownFunction(config.function.clone()))?;
        let result = run_handler(function.as_mut(), std::iter::once(event), |_| true)
            .map_err(|e| BenchError::Function(e.to_string()))?;
        processed += result.events_in;
        if t1.is_none() {
            t1 = result.first_event_ns;
        }
        last_done = result.last_done_ns;
        latencies.push((result.last_done_ns - sent) as f64 / 1e6);
    }

    let t1 = t1.ok_or_else(|| BenchError::Platform("no invocation ran".to_string()))?;
    assemble(config, workload, t0, t1, last_done, processed, latencies)
}

/// Batch mode: the paced stream accumulates in memory, then a single
/// invocation processes all of it.
fn run_batch(config: &ModeConfig, workload: &WorkloadSpec) -> Result<BenchReport, BenchError> {
    let pool = FramePool::generate(workload);
    let n = workload.frame_count();
    let registry = builtin_registry(workload);
    let mut function = registry
        .instantiate(&config.function)
        .ok_or_else(|| BenchError::UnknownFunction(config.function.clone()))?;

    let mut buffered = Vec::with_capacity(n);
    let mut send_ns = Vec::with_capacity(n);
    let t0 = monotonic_ns();
    for i in 0..n {
        sleep_until(deadline_ns(t0, i, workload.fps));
        buffered.push(pool.event(i));
        send_ns.push(monotonic_ns());
    }

    let mut outputs = Vec::with_capacity(n);
    let result = run_handler(function.as_mut(), buffered.into_iter(), |event| {
        outputs.push((monotonic_ns(), event));
        true
    })
    .map_err(|e| BenchError::Function(e.to_string()))?;

    let t1 = result
        .first_event_ns
        .ok_or_else(|| BenchError::Platform("invocation saw no events".to_string()))?;
    let mut latencies = vec![f64::NAN; n];
    for (arrived, event) in &outputs {
        let seq = event
            .seq()
            .ok_or_else(|| BenchError::Platform("output event lost its seq header".to_string()))?
            as usize;
        if seq < n {
            latencies[seq] = (arrived - send_ns[seq]) as f64 / 1e6;
        }
    }
    if latencies.iter().any(|l| l.is_nan()) {
        return Err(BenchError::Platform(format!(
            "invocation produced {} outputs for {n} frames",
            outputs.len()
        )));
    }
    assemble(
        config,
        workload,
        t0,
        t1,
        result.last_done_ns,
        result.events_in,
        latencies,
    )
}
