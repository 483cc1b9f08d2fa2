//! Spawning one instance per stream and driving it to termination.

use std::io;
use std::net::{Shutdown, TcpStream};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::event::Event;
use crate::sdk::{run_handler, FunctionRegistry, HandlerResult};
use crate::wire::{write_frame, Frame, FrameSendError, StreamId};

use super::fifo::{BoundedFifo, FifoConsumer};
use super::{
    Collector, DeliverError, FailureInfo, InstanceConfig, InstanceError, InstanceState, Isolation,
    OutputSpec, ResourceCore, SpawnError,
};

/// State and result cell shared between an instance's worker and its
/// handle.
pub(crate) struct InstanceShared {
    state: Mutex<InstanceState>,
    state_changed: Condvar,
    result: Mutex<Option<Result<HandlerResult, FailureInfo>>>,
}

impl InstanceShared {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(InstanceState::Created),
            state_changed: Condvar::new(),
            result: Mutex::new(None),
        })
    }

    /// Moves the lifecycle forward; transitions never go backwards, so a
    /// late advance to an earlier state is a no-op.
    pub(crate) fn advance(&self, to: InstanceState) {
        let mut state = self.state.lock().unwrap();
        if to > *state {
            *state = to;
            drop(state);
            self.state_changed.notify_all();
        }
    }

    pub(crate) fn state(&self) -> InstanceState {
        *self.state.lock().unwrap()
    }

    pub(crate) fn set_result(&self, result: Result<HandlerResult, FailureInfo>) {
        *self.result.lock().unwrap() = Some(result);
    }

    fn wait_terminated(&self, timeout: Duration) -> Result<(), InstanceState> {
        let guard = self.state.lock().unwrap();
        let (guard, wait) = self
            .state_changed
            .wait_timeout_while(guard, timeout, |s| *s < InstanceState::Terminated)
            .unwrap();
        if wait.timed_out() && *guard < InstanceState::Terminated {
            Err(*guard)
        } else {
            Ok(())
        }
    }
}

/// Output side of an instance, applied on the handler's thread.
pub(crate) enum OutputSink {
    Discard,
    Collect(Arc<Collector>),
    Downstream {
        stream: TcpStream,
        failed: Option<String>,
    },
}

impl OutputSink {
    /// Resolves the output spec, connecting downstream eagerly so a dead
    /// downstream fails the spawn instead of the stream.
    pub(crate) fn connect(spec: &OutputSpec) -> Result<Self, SpawnError> {
        match spec {
            OutputSpec::Discard => Ok(OutputSink::Discard),
            OutputSpec::Collect(collector) => Ok(OutputSink::Collect(Arc::clone(collector))),
            OutputSpec::Downstream { addr, function } => {
                let stream =
                    TcpStream::connect(addr).map_err(|source| SpawnError::DownstreamConnect {
                        addr: addr.clone(),
                        source,
                    })?;
                let hello = Frame::Hello {
                    function: function.clone(),
                    stream_id: 0,
                };
                let mut writer = &stream;
                write_frame(&mut writer, &hello).map_err(|e| SpawnError::DownstreamConnect {
                    addr: addr.clone(),
                    source: send_error_to_io(e),
                })?;
                Ok(OutputSink::Downstream {
                    stream,
                    failed: None,
                })
            }
        }
    }

    pub(crate) fn accept(&mut self, event: Event) -> bool {
        match self {
            OutputSink::Discard => true,
            OutputSink::Collect(collector) => {
                collector.record(event);
                true
            }
            OutputSink::Downstream { stream, failed } => {
                if failed.is_some() {
                    return false;
                }
                let mut writer = &*stream;
                match write_frame(&mut writer, &Frame::Data(event)) {
                    Ok(()) => true,
                    Err(e) => {
                        *failed = Some(format!("downstream write failed: {e}"));
                        false
                    }
                }
            }
        }
    }

    /// Closes out the output after the function returns: downstream gets
    /// an EOS and a half-close so it can drain and terminate.
    pub(crate) fn finish(&mut self) {
        if let OutputSink::Downstream { stream, failed } = self {
            if failed.is_none() {
                let mut writer = &*stream;
                if let Err(e) = write_frame(&mut writer, &Frame::Eos) {
                    *failed = Some(format!("downstream EOS failed: {e}"));
                }
            }
            let _ = stream.shutdown(Shutdown::Write);
        }
    }

    pub(crate) fn failure(&self) -> Option<&str> {
        match self {
            OutputSink::Downstream { failed, .. } => failed.as_deref(),
            _ => None,
        }
    }
}

fn send_error_to_io(e: FrameSendError) -> io::Error {
    match e {
        FrameSendError::Io(io) => io,
        FrameSendError::Encode(enc) => io::Error::new(io::ErrorKind::InvalidData, enc),
    }
}

pub(crate) enum Transport {
    /// In-process: events go straight into the instance FIFO.
    Local(Arc<BoundedFifo<Event>>),
    /// Child process: events are framed over a local socket.
    Remote(TcpStream),
}

/// Handle for delivering a stream to its instance and collecting the
/// outcome. Dropping the handle does not stop the instance; call
/// [`InstanceHandle::finish`] and [`InstanceHandle::await_terminated`].
pub struct InstanceHandle {
    pub(crate) stream_id: StreamId,
    pub(crate) function: String,
    pub(crate) transport: Transport,
    pub(crate) shared: Arc<InstanceShared>,
    pub(crate) probe: Weak<ResourceCore>,
    pub(crate) worker: Option<JoinHandle<()>>,
    pub(crate) finished: bool,
}

impl InstanceHandle {
    pub fn stream_id(&self) -> StreamId {
        self.stream_id
    }

    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn state(&self) -> InstanceState {
        self.shared.state()
    }

    /// Weak reference that upgrades only while the instance still holds
    /// its resources.
    pub fn resource_probe(&self) -> Weak<ResourceCore> {
        Weak::clone(&self.probe)
    }

    /// Hands one event to the instance in arrival order. Blocks while the
    /// instance's input buffer is full.
    pub fn deliver(&mut self, event: Event) -> Result<(), DeliverError> {
        match &self.transport {
            Transport::Local(fifo) => fifo.push(event).map_err(|_| DeliverError::Closed),
            Transport::Remote(stream) => send_frame(stream, &Frame::Data(event)),
        }
    }

    /// Signals end of input. Buffered events still reach the function;
    /// the instance then terminates on its own. Idempotent.
    pub fn finish(&mut self) -> Result<(), DeliverError> {
        if self.finished {
            return Ok(());
        }
        self.finished = true;
        self.shared.advance(InstanceState::Draining);
        match &self.transport {
            Transport::Local(fifo) => {
                fifo.close();
                Ok(())
            }
            Transport::Remote(stream) => {
                let sent = send_frame(stream, &Frame::Eos);
                let _ = stream.shutdown(Shutdown::Write);
                sent
            }
        }
    }

    /// Waits for the instance to terminate and returns its outcome.
    /// Safe to call again after success.
    pub fn await_terminated(&mut self, timeout: Duration) -> Result<InstanceOutcome, InstanceError> {
        self.shared
            .wait_terminated(timeout)
            .map_err(|state| InstanceError::AwaitTimeout { timeout, state })?;
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
        let result = self
            .shared
            .result
            .lock()
            .unwrap()
            .clone()
            .ok_or(InstanceError::Vanished)?;
        Ok(InstanceOutcome {
            stream_id: self.stream_id,
            result,
        })
    }
}

fn send_frame(stream: &TcpStream, frame: &Frame) -> Result<(), DeliverError> {
    let mut writer = stream;
    write_frame(&mut writer, frame).map_err(|e| match e {
        FrameSendError::Io(io)
            if matches!(
                io.kind(),
                io::ErrorKind::BrokenPipe
                    | io::ErrorKind::ConnectionReset
                    | io::ErrorKind::ConnectionAborted
            ) =>
        {
            DeliverError::Closed
        }
        other => DeliverError::Io(send_error_to_io(other)),
    })
}

/// Final accounting for one terminated instance.
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub stream_id: StreamId,
    pub result: Result<HandlerResult, FailureInfo>,
}

impl InstanceOutcome {
    /// Handler accounting regardless of success, using the partial counts
    /// on failure.
    pub fn handler(&self) -> &HandlerResult {
        match &self.result {
            Ok(r) => r,
            Err(f) => &f.partial,
        }
    }

    pub fn failure(&self) -> Option<&str> {
        self.result.as_ref().err().map(|f| f.message.as_str())
    }
}

/// Creates the instance for one new stream: resolves the function,
/// connects the output, and starts the worker. On return the instance
/// accepts deliveries.
pub fn spawn_instance(
    config: &InstanceConfig,
    registry: &FunctionRegistry,
    stream_id: StreamId,
) -> Result<InstanceHandle, SpawnError> {
    if config.buffer_capacity == 0 {
        return Err(SpawnError::BadConfig(
            "buffer_capacity must be at least 1".into(),
        ));
    }
    match config.isolation {
        Isolation::InProcess => spawn_in_process(config, registry, stream_id),
        Isolation::ChildProcess => super::child::spawn_child(config, stream_id),
    }
}

fn spawn_in_process(
    config: &InstanceConfig,
    registry: &FunctionRegistry,
    stream_id: StreamId,
) -> Result<InstanceHandle, SpawnError> {
    let mut function = registry
        .instantiate(&config.function)
        .ok_or_else(|| SpawnError::UnknownFunction(config.function.clone()))?;
    let mut sink = OutputSink::connect(&config.output)?;
    let fifo = Arc::new(BoundedFifo::new(config.buffer_capacity));
    let shared = InstanceShared::new();
    let core = ResourceCore::new();
    let probe = Arc::downgrade(&core);

    let worker = thread::Builder::new()
        .name(format!("instance-{stream_id}"))
        .spawn({
            let fifo = Arc::clone(&fifo);
            let shared = Arc::clone(&shared);
            let startup_delay = config.startup_delay;
            move || {
                let core = core;
                shared.advance(InstanceState::Initializing);
                if !startup_delay.is_zero() {
                    thread::sleep(startup_delay);
                }
                shared.advance(InstanceState::Running);
                let outcome = run_handler(
                    function.as_mut(),
                    FifoConsumer(Arc::clone(&fifo)),
                    |event| sink.accept(event),
                );
                fifo.close();
                sink.finish();
                let result = match outcome {
                    Ok(res) => match sink.failure() {
                        None => Ok(res),
                        Some(msg) => Err(FailureInfo {
                            message: msg.to_string(),
                            partial: res,
                        }),
                    },
                    Err(failure) => Err(FailureInfo {
                        message: failure.to_string(),
                        partial: failure.partial,
                    }),
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
        transport: Transport::Local(fifo),
        shared,
        probe,
        worker: Some(worker),
        finished: false,
    })
}
