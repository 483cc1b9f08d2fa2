//! Control-plane accounting: per-stream records and aggregate counters.

use std::sync::Mutex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::sdk::HandlerResult;
use crate::wire::StreamId;

/// Timeline and accounting of one stream, all timestamps in monotonic
/// nanoseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamRecord {
    pub stream_id: u64,
    pub function: String,
    /// Connection accepted.
    pub t_accept_ns: u64,
    /// First DATA frame fully received by the control plane.
    pub t_first_frame_ns: Option<u64>,
    /// First event handed to the function, after any startup delay.
    pub t_first_event_ns: Option<u64>,
    /// Function returned.
    pub t_done_ns: Option<u64>,
    /// Instance fully torn down.
    pub t_terminated_ns: Option<u64>,
    pub events_in: u64,
    pub events_out: u64,
    pub completed: bool,
    pub failure: Option<String>,
}

/// Aggregate counters. `live_streams` is derived as
/// `started - completed - failed`, so the books always balance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub streams_started: u64,
    pub streams_completed: u64,
    pub streams_failed: u64,
    pub streams_rejected: u64,
    pub live_streams: u64,
    pub events_in: u64,
    pub events_out: u64,
    pub protocol_errors: u64,
}

#[derive(Default)]
struct StatsInner {
    started: u64,
    completed: u64,
    failed: u64,
    rejected: u64,
    events_in: u64,
    events_out: u64,
    protocol_errors: u64,
    records: IndexMap<u64, StreamRecord>,
}

#[derive(Default)]
pub struct PlatformStats {
    inner: Mutex<StatsInner>,
}

impl PlatformStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn stream_started(&self, stream_id: StreamId, function: &str, t_accept_ns: u64) {
        let mut inner = self.inner.lock().unwrap();
        inner.started += 1;
        inner.records.insert(
            stream_id.0,
            StreamRecord {
                stream_id: stream_id.0,
                function: function.to_string(),
                t_accept_ns,
                t_first_frame_ns: None,
                t_first_event_ns: None,
                t_done_ns: None,
                t_terminated_ns: None,
                events_in: 0,
                events_out: 0,
                completed: false,
                failure: None,
            },
        );
    }

    pub(crate) fn first_frame(&self, stream_id: StreamId, t_ns: u64) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(record) = inner.records.get_mut(&stream_id.0) {
            record.t_first_frame_ns.get_or_insert(t_ns);
        }
    }

    pub(crate) fn stream_terminated(
        &self,
        stream_id: StreamId,
        handler: &HandlerResult,
        failure: Option<String>,
        t_terminated_ns: u64,
    ) {
        let mut inner = self.inner.lock().unwrap();
        if failure.is_none() {
            inner.completed += 1;
        } else {
            inner.failed += 1;
        }
        inner.events_in += handler.events_in;
        inner.events_out += handler.events_out;
        if let Some(record) = inner.records.get_mut(&stream_id.0) {
            record.t_first_event_ns = handler.first_event_ns;
            record.t_done_ns = Some(handler.last_done_ns);
            record.t_terminated_ns = Some(t_terminated_ns);
            record.events_in = handler.events_in;
            record.events_out = handler.events_out;
            record.completed = true;
            record.failure = failure;
        }
    }

    /// Closes out a stream whose instance never reported back.
    pub(crate) fn stream_lost(&self, stream_id: StreamId, message: String, t_ns: u64) {
        let mut inner = self.inner.lock().unwrap();
        inner.failed += 1;
        if let Some(record) = inner.records.get_mut(&stream_id.0) {
            record.t_terminated_ns = Some(t_ns);
            record.completed = true;
            record.failure = Some(message);
        }
    }

    pub(crate) fn stream_rejected(&self) {
        self.inner.lock().unwrap().rejected += 1;
    }

    pub(crate) fn protocol_error(&self) {
        self.inner.lock().unwrap().protocol_errors += 1;
    }

    pub fn summary(&self) -> StatsSummary {
        let inner = self.inner.lock().unwrap();
        StatsSummary {
            streams_started: inner.started,
            streams_completed: inner.completed,
            streams_failed: inner.failed,
            streams_rejected: inner.rejected,
            live_streams: inner.started - inner.completed - inner.failed,
            events_in: inner.events_in,
            events_out: inner.events_out,
            protocol_errors: inner.protocol_errors,
        }
    }

    pub fn records(&self) -> Vec<StreamRecord> {
        self.inner.lock().unwrap().records.values().cloned().collect()
    }

    pub fn record(&self, stream_id: StreamId) -> Option<StreamRecord> {
        self.inner.lock().unwrap().records.get(&stream_id.0).cloned()
    }
}
