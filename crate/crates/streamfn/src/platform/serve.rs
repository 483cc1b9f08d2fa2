//! The control plane: accepts stream connections, routes each to a fresh
//! function instance, and tears the instance down when the stream ends.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use indexmap::IndexMap;

use crate::clock::monotonic_ns;
use crate::event::{keys, Event};
use crate::runtime::{spawn_instance, InstanceConfig, ResourceCore};
use crate::sdk::FunctionRegistry;
use crate::wire::{decode_frame, write_frame, DecodeError, Frame, StreamId};

use super::stats::{PlatformStats, StatsSummary, StreamRecord};

/// How long the control plane waits for an instance to drain and
/// terminate after its stream ends.
pub const DEFAULT_AWAIT_TIMEOUT: Duration = Duration::from_secs(60);

pub struct PlatformConfig {
    /// Stream listener address; port 0 picks a free port.
    pub listen: SocketAddr,
    /// Stats listener address; `None` disables the endpoint.
    pub stats_listen: Option<SocketAddr>,
    pub registry: FunctionRegistry,
    /// Per-function instance settings; functions not listed here run with
    /// [`InstanceConfig`] defaults.
    pub functions: IndexMap<String, InstanceConfig>,
    pub await_timeout: Duration,
}

impl PlatformConfig {
    pub fn new(registry: FunctionRegistry) -> Self {
        Self {
            listen: "127.0.0.1:0".parse().unwrap(),
            stats_listen: Some("127.0.0.1:0".parse().unwrap()),
            registry,
            functions: IndexMap::new(),
            await_timeout: DEFAULT_AWAIT_TIMEOUT,
        }
    }

    /// Installs per-function instance settings, keyed by
    /// `config.function`.
    pub fn with_function(mut self, config: InstanceConfig) -> Self {
        self.functions.insert(config.function.clone(), config);
        self
    }
}

struct PlatformShared {
    registry: FunctionRegistry,
    templates: IndexMap<String, InstanceConfig>,
    await_timeout: Duration,
    next_stream_id: AtomicU64,
    stats: PlatformStats,
    probes: Mutex<Vec<Weak<ResourceCore>>>,
    shutdown: AtomicBool,
    pumps: Mutex<Vec<JoinHandle<()>>>,
}

/// Running control plane. Shut down explicitly with
/// [`PlatformHandle::shutdown`]; dropping the handle does the same on a
/// best-effort basis.
pub struct PlatformHandle {
    local_addr: SocketAddr,
    stats_addr: Option<SocketAddr>,
    shared: Arc<PlatformShared>,
    accept_worker: Option<JoinHandle<()>>,
    stats_worker: Option<JoinHandle<()>>,
}

/// Binds the listeners and starts accepting streams.
pub fn start_platform(config: PlatformConfig) -> io::Result<PlatformHandle> {
    let listener = TcpListener::bind(config.listen)?;
    let local_addr = listener.local_addr()?;
    let stats_listener = match config.stats_listen {
        Some(addr) => Some(TcpListener::bind(addr)?),
        None => None,
    };
    let stats_addr = stats_listener
        .as_ref()
        .map(|l| l.local_addr())
        .transpose()?;

    let shared = Arc::new(PlatformShared {
        registry: config.registry,
        templates: config.functions,
        await_timeout: config.await_timeout,
        next_stream_id: AtomicU64::new(1),
        stats: PlatformStats::new(),
        probes: Mutex::new(Vec::new()),
        shutdown: AtomicBool::new(false),
        pumps: Mutex::new(Vec::new()),
    });

    let accept_worker = thread::Builder::new().name("platform-accept".into()).spawn({
        let shared = Arc::clone(&shared);
        move || accept_loop(listener, shared)
    })?;

    let stats_worker = match stats_listener {
        Some(listener) => Some(thread::Builder::new().name("platform-stats".into()).spawn({
            let shared = Arc::clone(&shared);
            move || stats_loop(listener, shared)
        })?),
        None => None,
    };

    log::info!("platform listening on {local_addr} (stats {stats_addr:?})");
    Ok(PlatformHandle {
        local_addr,
        stats_addr,
        shared,
        accept_worker: Some(accept_worker),
        stats_worker,
    })
}

impl PlatformHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats_addr(&self) -> Option<SocketAddr> {
        self.stats_addr
    }

    pub fn summary(&self) -> StatsSummary {
        self.shared.stats.summary()
    }

    pub fn stream_records(&self) -> Vec<StreamRecord> {
        self.shared.stats.records()
    }

    pub fn stream_record(&self, stream_id: StreamId) -> Option<StreamRecord> {
        self.shared.stats.record(stream_id)
    }

    /// Number of instances still holding resources, probed through weak
    /// references. Zero means full scale-to-zero.
    pub fn live_instances(&self) -> usize {
        let mut probes = self.shared.probes.lock().unwrap();
        probes.retain(|probe| probe.strong_count() > 0);
        probes.len()
    }

    /// Stops accepting, then waits for in-flight streams to finish.
    pub fn shutdown(mut self) {
        self.shutdown_inner();
    }

    fn shutdown_inner(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.local_addr);
        if let Some(worker) = self.accept_worker.take() {
            let _ = worker.join();
        }
        if let Some(addr) = self.stats_addr {
            let _ = TcpStream::connect(addr);
        }
        if let Some(worker) = self.stats_worker.take() {
            let _ = worker.join();
        }
        let pumps = std::mem::take(&mut *self.shared.pumps.lock().unwrap());
        for pump in pumps {
            let _ = pump.join();
        }
    }
}

impl Drop for PlatformHandle {
    fn drop(&mut self) {
        self.shutdown_inner();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<PlatformShared>) {
    loop {
        match listener.accept() {
            Ok((conn, peer)) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let worker = thread::Builder::new()
                    .name(format!("platform-conn-{peer}"))
                    .spawn({
                        let shared = Arc::clone(&shared);
                        move || pump_connection(conn, shared)
                    });
                match worker {
                    Ok(handle) => {
                        let mut pumps = shared.pumps.lock().unwrap();
                        pumps.retain(|p| !p.is_finished());
                        pumps.push(handle);
                    }
                    Err(e) => log::error!("could not start connection pump: {e}"),
                }
            }
            Err(e) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                log::warn!("accept failed: {e}");
            }
        }
    }
}

/// Reads one stream connection end to end and drives its instance.
fn pump_connection(conn: TcpStream, shared: Arc<PlatformShared>) {
    let t_accept = monotonic_ns();
    let mut reader = BufReader::new(conn);

    let function = match decode_frame(&mut reader) {
        Ok(Frame::Hello {
            function,
            stream_id: proposed,
        }) => {
            if proposed != 0 {
                log::debug!("ignoring proposed stream id {proposed}; ids are assigned here");
            }
            function
        }
        Ok(_) => {
            shared.stats.protocol_error();
            log::warn!("connection did not start with HELLO");
            return;
        }
        Err(DecodeError::Eof) => return,
        Err(e) => {
            shared.stats.protocol_error();
            log::warn!("bad first frame: {e}");
            return;
        }
    };

    if !shared.registry.contains(&function) {
        shared.stats.stream_rejected();
        reply_error(reader.get_ref(), &format!("unknown function {function:?}"));
        return;
    }
    let template = shared
        .templates
        .get(&function)
        .cloned()
        .unwrap_or_else(|| InstanceConfig::new(&function));
    let stream_id = StreamId(shared.next_stream_id.fetch_add(1, Ordering::Relaxed));

    let mut handle = match spawn_instance(&template, &shared.registry, stream_id) {
        Ok(handle) => handle,
        Err(e) => {
            shared.stats.stream_rejected();
            reply_error(reader.get_ref(), &format!("could not start instance: {e}"));
            return;
        }
    };
    shared.probes.lock().unwrap().push(handle.resource_probe());
    shared.stats.stream_started(stream_id, &function, t_accept);
    log::debug!("stream {stream_id} opened for {function:?}");

    let mut awaiting_first = true;
    loop {
        match decode_frame(&mut reader) {
            Ok(Frame::Data(event)) => {
                if awaiting_first {
                    shared.stats.first_frame(stream_id, monotonic_ns());
                    awaiting_first = false;
                }
                if handle.deliver(event).is_err() {
                    // Instance stopped consuming (done or failed); stop
                    // reading and let teardown report the cause.
                    break;
                }
            }
            Ok(Frame::Eos) => break,
            Ok(Frame::Hello { .. }) => {
                shared.stats.protocol_error();
                log::warn!("stream {stream_id}: HELLO after start");
                break;
            }
            // A peer that just closes the socket gets the same clean
            // drain as one that sends EOS.
            Err(DecodeError::Eof) => break,
            Err(e) => {
                shared.stats.protocol_error();
                log::warn!("stream {stream_id}: {e}");
                break;
            }
        }
    }

    let _ = handle.finish();
    match handle.await_terminated(shared.await_timeout) {
        Ok(outcome) => {
            shared.stats.stream_terminated(
                stream_id,
                outcome.handler(),
                outcome.failure().map(String::from),
                monotonic_ns(),
            );
            log::debug!("stream {stream_id} terminated");
        }
        Err(e) => {
            shared
                .stats
                .stream_lost(stream_id, e.to_string(), monotonic_ns());
            log::error!("stream {stream_id}: {e}");
        }
    }
}

/// Best-effort error report to the producer: one DATA frame whose `error`
/// header carries the message.
fn reply_error(mut conn: &TcpStream, message: &str) {
    let mut event = Event::from_payload("");
    event.headers.set(keys::ERROR, message.as_bytes());
    let _ = write_frame(&mut conn, &Frame::Data(event));
    log::warn!("rejected stream: {message}");
}

fn stats_loop(listener: TcpListener, shared: Arc<PlatformShared>) {
    loop {
        match listener.accept() {
            Ok((conn, _)) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                if let Err(e) = serve_stats_conn(conn, &shared) {
                    log::debug!("stats connection failed: {e}");
                }
            }
            Err(e) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                log::warn!("stats accept failed: {e}");
            }
        }
    }
}

/// Protocol: the client sends the line `stats`; the reply is one summary
/// JSON line followed by one JSON line per stream record.
fn serve_stats_conn(conn: TcpStream, shared: &Arc<PlatformShared>) -> io::Result<()> {
    let mut reader = BufReader::new(conn);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut conn = reader.into_inner();
    if line.trim() != "stats" {
        writeln!(conn, "{{\"error\":\"unknown command\"}}")?;
        return Ok(());
    }
    let summary = shared.stats.summary();
    let records = shared.stats.records();
    writeln!(conn, "{}", serde_json::to_string(&summary)?)?;
    for record in records {
        writeln!(conn, "{}", serde_json::to_string(&record)?)?;
    }
    conn.flush()
}
