//! Benchmark CLI: runs one mode over one paced stream and appends the
//! measurements to a CSV report plus a latency-percentile sidecar.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use streamfn::runtime::Isolation;
use streamfn_bench::{
    append_latencies, append_report, run_mode, Mode, ModeConfig, WorkloadSpec,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IsolationArg {
    InProcess,
    ChildProcess,
}

impl From<IsolationArg> for Isolation {
    fn from(arg: IsolationArg) -> Self {
        match arg {
            IsolationArg::InProcess => Isolation::InProcess,
            IsolationArg::ChildProcess => Isolation::ChildProcess,
        }
    }
}

/// Measure cold-start fraction and processing overhead for one stream.
#[derive(Debug, Parser)]
#[command(name = "streamfn-bench", version)]
struct Cli {
    /// Execution mode: stream_fn, faas, batch, or engine.
    #[arg(long)]
    mode: Mode,
    /// Stream duration in seconds.
    #[arg(long)]
    duration: f64,
    /// Frames per second.
    #[arg(long, default_value_t = 10.0)]
    fps: f64,
    /// Frame width in pixels.
    #[arg(long, default_value_t = 160)]
    width: u32,
    /// Frame height in pixels.
    #[arg(long, default_value_t = 120)]
    height: u32,
    /// Workload seed; equal seeds generate identical frame pools.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distinct frames in the generated pool.
    #[arg(long, default_value_t = 20)]
    distinct_frames: usize,
    /// Function to run on the stream.
    #[arg(long, default_value = "grayscale")]
    function: String,
    /// Injected cold start in seconds (engine mode).
    #[arg(long = "cold-start", default_value_t = 118.0)]
    cold_start: f64,
    /// Fixed extra cost per invocation in seconds (faas mode).
    #[arg(long, default_value_t = 0.0)]
    per_invocation_overhead: f64,
    /// Instance isolation for the platform-backed modes.
    #[arg(long, value_enum, default_value_t = IsolationArg::InProcess)]
    isolation: IsolationArg,
    /// Stream to an already-running platform at this address instead of
    /// an embedded one (stream_fn mode).
    #[arg(long)]
    platform: Option<SocketAddr>,
    /// Stats endpoint of the external platform. Defaults to the platform
    /// port plus one.
    #[arg(long)]
    stats: Option<SocketAddr>,
    /// CSV report to append to.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();

    let workload = WorkloadSpec {
        duration_s: cli.duration,
        fps: cli.fps,
        width: cli.width,
        height: cli.height,
        seed: cli.seed,
        distinct_frames: cli.distinct_frames,
    };
    let mut config = ModeConfig::new(cli.mode);
    config.function = cli.function;
    config.injected_cold_start_s = cli.cold_start;
    config.per_invocation_overhead_s = cli.per_invocation_overhead;
    config.isolation = cli.isolation.into();
    config.platform = cli.platform;
    config.stats = cli.stats;

    let report = match run_mode(&config, &workload) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("bench failed: {err}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(err) = append_report(&cli.out, &report) {
        eprintln!("could not write {}: {err}", cli.out.display());
        return ExitCode::FAILURE;
    }
    match append_latencies(&cli.out, &report) {
        Ok(Some(sidecar)) => println!("latencies appended to {}", sidecar.display()),
        Ok(None) => {}
        Err(err) => {
            eprintln!("could not write latency sidecar: {err}");
            return ExitCode::FAILURE;
        }
    }
    println!(
        "mode={} duration_s={} frames={} theta={:.6} overhead_s={:.6}",
        report.mode,
        report.workload.duration_s,
        report.frames_sent,
        report.theta,
        report.overhead_s
    );
    ExitCode::SUCCESS
}
