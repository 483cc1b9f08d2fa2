//! Child-process isolation: each stream gets a dedicated host process.
//!
//! The parent launches the host binary with a JSON config as its single
//! argument. The host binds a loopback listener, prints `READY <port>` on
//! stdout, and the parent connects. Input events flow parent to child as
//! DATA frames ending in EOS; output events flow back on the same socket,
//! also DATA then EOS. After the function returns the host prints
//! `RESULT <json>` on stdout and exits, zero only for a clean run.
//!
//! The host rebuilds the built-in registry from the config, so only
//! built-in functions can run under this isolation; closures registered in
//! the parent cannot cross a process boundary.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::monotonic_ns;
use crate::sdk::{
    run_handler, FunctionRegistry, HandlerResult, BUILTIN_FRAME_DELTA, BUILTIN_GRAYSCALE,
    BUILTIN_IDENTITY,
};
use crate::wire::{decode_frame, write_frame, DecodeError, Frame, StreamId};

use super::fifo::{BoundedFifo, FifoConsumer};
use super::instance::{InstanceHandle, InstanceShared, OutputSink, Transport};
use super::{FailureInfo, InstanceConfig, InstanceState, ResourceCore, SpawnError};

#[derive(Debug, Serialize, Deserialize)]
struct HostConfig {
    function: String,
    buffer_capacity: usize,
    width: u32,
    height: u32,
    startup_delay_ns: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ChildReport {
    Ok { result: HandlerResult },
    Err { message: String, partial: HandlerResult },
}

fn host_supports(function: &str) -> bool {
    matches!(
        function,
        BUILTIN_IDENTITY | BUILTIN_GRAYSCALE | BUILTIN_FRAME_DELTA
    )
}

fn resolve_host_binary(config: &InstanceConfig) -> Result<PathBuf, SpawnError> {
    if let Some(path) = &config.host_binary {
        return Ok(path.clone());
    }
    if let Some(path) = std::env::var_os("STREAMFN_BIN") {
        return Ok(PathBuf::from(path));
    }
    if let Ok(exe) = std::env::current_exe() {
        if exe.file_stem().is_some_and(|s| s == "streamfn") {
            return Ok(exe);
        }
        // Test and bench executables live under the build's deps dir;
        // the CLI binary sits one level up.
        for dir in exe.ancestors().skip(1).take(4) {
            let candidate = dir.join("streamfn");
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    Err(SpawnError::HostBinaryNotFound)
}

pub(super) fn spawn_child(
    config: &InstanceConfig,
    stream_id: StreamId,
) -> Result<InstanceHandle, SpawnError> {
    if !host_supports(&config.function) {
        return Err(SpawnError::NotHostable(config.function.clone()));
    }
    let binary = resolve_host_binary(config)?;
    let mut sink = OutputSink::connect(&config.output)?;

    let host_config = HostConfig {
        function: config.function.clone(),
        buffer_capacity: config.buffer_capacity,
        width: config.width,
        height: config.height,
        startup_delay_ns: config.startup_delay.as_nanos() as u64,
    };
    let config_json = serde_json::to_string(&host_config)
        .map_err(|e| SpawnError::BadConfig(e.to_string()))?;

    let mut child = Command::new(&binary)
        .arg("instance-host")
        .arg(config_json)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(SpawnError::HostLaunch)?;

    let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
    let mut ready = String::new();
    let port = match stdout.read_line(&mut ready) {
        Ok(0) => None,
        Ok(_) => ready
            .strip_prefix("READY ")
            .and_then(|rest| rest.trim().parse::<u16>().ok()),
        Err(_) => None,
    };
    let Some(port) = port else {
        let _ = child.kill();
        let _ = child.wait();
        return Err(SpawnError::Handshake(format!(
            "host did not report a port (got {ready:?})"
        )));
    };
    let conn = match TcpStream::connect(("127.0.0.1", port)) {
        Ok(conn) => conn,
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SpawnError::Handshake(format!(
                "could not connect to host port {port}: {e}"
            )));
        }
    };

    let stderr_tail = Arc::new(Mutex::new(String::new()));
    {
        let mut stderr = child.stderr.take().expect("piped stderr");
        let stderr_tail = Arc::clone(&stderr_tail);
        thread::Builder::new()
            .name(format!("instance-{stream_id}-stderr"))
            .spawn(move || {
                let mut buf = String::new();
                let _ = stderr.read_to_string(&mut buf);
                if !buf.is_empty() {
                    log::debug!("instance host stderr: {}", buf.trim_end());
                }
                *stderr_tail.lock().unwrap() = buf;
            })
            .ok();
    }

    let shared = InstanceShared::new();
    let core = ResourceCore::new();
    let probe = Arc::downgrade(&core);
    shared.advance(InstanceState::Initializing);
    shared.advance(InstanceState::Running);

    let reader_conn = conn.try_clone().map_err(|e| {
        let _ = child.kill();
        let _ = child.wait();
        SpawnError::Handshake(format!("could not clone host socket: {e}"))
    })?;

    let worker = thread::Builder::new()
        .name(format!("instance-{stream_id}"))
        .spawn({
            let shared = Arc::clone(&shared);
            move || {
                let core = core;
                let mut reader = reader_conn;
                // Anything other than DATA (EOS, a stray HELLO, any
                // decode error) ends the output stream. Keep draining
                // even if the sink gives up, so the child is never left
                // blocked on writes.
                while let Ok(Frame::Data(event)) = decode_frame(&mut reader) {
                    let _ = sink.accept(event);
                }
                sink.finish();

                let mut report = None;
                let mut line = String::new();
                loop {
                    line.clear();
                    match stdout.read_line(&mut line) {
                        Ok(0) | Err(_) => break,
                        Ok(_) => {
                            if let Some(rest) = line.strip_prefix("RESULT ") {
                                report = serde_json::from_str::<ChildReport>(rest.trim()).ok();
                                break;
                            }
                        }
                    }
                }
                let status = child.wait();

                let result = match report {
                    Some(ChildReport::Ok { result }) => match sink.failure() {
                        None => Ok(result),
                        Some(msg) => Err(FailureInfo {
                            message: msg.to_string(),
                            partial: result,
                        }),
                    },
                    Some(ChildReport::Err { message, partial }) => {
                        Err(FailureInfo { message, partial })
                    }
                    None => {
                        let stderr = stderr_tail.lock().unwrap();
                        let status_desc = match status {
                            Ok(s) => s.to_string(),
                            Err(e) => format!("wait failed: {e}"),
                        };
                        Err(FailureInfo {
                            message: format!(
                                "instance host exited without a result ({status_desc}): {}",
                                stderr.trim_end()
                            ),
                            partial: HandlerResult {
                                events_in: 0,
                                events_out: 0,
                                first_event_ns: None,
                                last_done_ns: monotonic_ns(),
                            },
                        })
                    }
                };
                shared.set_result(result);
                shared.advance(InstanceState::Terminated);
                drop(core);
            }
        })
        .map_err(SpawnError::HostLaunch)?;

    Ok(InstanceHandle {
        stream_id,
        function: config.function.clone(),
        transport: Transport::Remote(conn),
        shared,
        probe,
        worker: Some(worker),
        finished: false,
    })
}

/// Entry point of the `instance-host` subcommand. Returns the process
/// exit code.
pub fn host_main(config_json: &str) -> i32 {
    match run_host(config_json) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("instance host error: {message}");
            2
        }
    }
}

fn run_host(config_json: &str) -> Result<i32, String> {
    let config: HostConfig =
        serde_json::from_str(config_json).map_err(|e| format!("bad host config: {e}"))?;
    let mut registry = FunctionRegistry::new();
    registry.register_builtins(config.width, config.height);
    let mut function = registry
        .instantiate(&config.function)
        .ok_or_else(|| format!("unknown function {:?}", config.function))?;
    if config.buffer_capacity == 0 {
        return Err("buffer_capacity must be at least 1".into());
    }

    let listener =
        TcpListener::bind("127.0.0.1:0").map_err(|e| format!("could not bind: {e}"))?;
    let port = listener
        .local_addr()
        .map_err(|e| format!("no local addr: {e}"))?
        .port();
    println!("READY {port}");
    io::stdout().flush().ok();

    let (conn, _) = listener
        .accept()
        .map_err(|e| format!("accept failed: {e}"))?;
    let ingest_conn = conn
        .try_clone()
        .map_err(|e| format!("could not clone socket: {e}"))?;

    let fifo = Arc::new(BoundedFifo::new(config.buffer_capacity));
    {
        let fifo = Arc::clone(&fifo);
        // Detached on purpose: joining could deadlock against a parent
        // that never closes its write side. Process exit reaps it.
        thread::Builder::new()
            .name("host-ingest".into())
            .spawn(move || {
                let mut reader = ingest_conn;
                loop {
                    match decode_frame(&mut reader) {
                        Ok(Frame::Data(event)) => {
                            if fifo.push(event).is_err() {
                                break;
                            }
                        }
                        Ok(Frame::Eos) | Ok(Frame::Hello { .. }) => break,
                        Err(DecodeError::Eof) => break,
                        Err(_) => break,
                    }
                }
                fifo.close();
            })
            .map_err(|e| format!("could not start ingest: {e}"))?;
    }

    if config.startup_delay_ns > 0 {
        thread::sleep(Duration::from_nanos(config.startup_delay_ns));
    }

    let mut writer = conn;
    let mut write_failed = false;
    let outcome = run_handler(
        function.as_mut(),
        FifoConsumer(Arc::clone(&fifo)),
        |event| {
            if write_failed {
                return false;
            }
            match write_frame(&mut writer, &Frame::Data(event)) {
                Ok(()) => true,
                Err(_) => {
                    write_failed = true;
                    false
                }
            }
        },
    );
    fifo.close();
    let _ = write_frame(&mut writer, &Frame::Eos);
    let _ = writer.shutdown(Shutdown::Write);

    let (code, report) = match outcome {
        Ok(result) if !write_failed => (0, ChildReport::Ok { result }),
        Ok(result) => (
            1,
            ChildReport::Err {
                message: "output write failed".into(),
                partial: result,
            },
        ),
        Err(failure) => (
            1,
            ChildReport::Err {
                message: failure.to_string(),
                partial: failure.partial,
            },
        ),
    };
    let json = serde_json::to_string(&report).map_err(|e| format!("report encode: {e}"))?;
    println!("RESULT {json}");
    io::stdout().flush().ok();
    Ok(code)
}
