//! Control-plane CLI: `serve` runs a platform from a deployment file;
//! `instance-host` (internal) runs one function instance as a child
//! process.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use streamfn::platform::{build_platform_config, load_deployment, start_platform};
use streamfn::runtime::host_main;

#[derive(Parser)]
#[command(name = "streamfn", version, about = "Stream-function control plane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve streams according to a deployment file.
    Serve(ServeArgs),
    /// Host a single function instance (launched by the platform).
    #[command(hide = true)]
    InstanceHost {
        /// Instance configuration as a JSON document.
        config_json: String,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Deployment file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the deployment's listen address.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Override the deployment's stats address.
    #[arg(long)]
    stats_listen: Option<SocketAddr>,
}

fn main() -> ExitCode {
    env_logger::init();
    match Cli::parse().command {
        Command::Serve(args) => serve(args),
        Command::InstanceHost { config_json } => ExitCode::from(host_main(&config_json) as u8),
    }
}

fn serve(args: ServeArgs) -> ExitCode {
    let deployment = match load_deployment(&args.config) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("streamfn: {e}");
            return ExitCode::from(2);
        }
    };
    let mut config = match build_platform_config(&deployment) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("streamfn: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(stats_listen) = args.stats_listen {
        config.stats_listen = Some(stats_listen);
    }

    let handle = match start_platform(config) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("streamfn: could not start platform: {e}");
            return ExitCode::from(1);
        }
    };
    println!("listening on {}", handle.local_addr());
    if let Some(stats) = handle.stats_addr() {
        println!("stats on {stats}");
    }
    use std::io::Write as _;
    std::io::stdout().flush().ok();

    // Serve until the process is terminated.
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
