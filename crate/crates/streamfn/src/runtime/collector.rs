//! In-memory output sink that records emitted events with arrival times.

use std::sync::Mutex;

use crate::clock::monotonic_ns;
use crate::event::Event;

/// One recorded output event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectedEvent {
    /// Monotonic nanoseconds at which the sink received the event.
    pub arrived_ns: u64,
    pub event: Event,
}

/// Thread-safe sink used by tests and benchmarks to capture a stream's
/// output in order, with per-event arrival timestamps.
#[derive(Default)]
pub struct Collector {
    events: Mutex<Vec<CollectedEvent>>,
}

impl Collector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, event: Event) {
        let arrived_ns = monotonic_ns();
        self.events.lock().unwrap().push(CollectedEvent { arrived_ns, event });
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies out everything recorded so far, in arrival order.
    pub fn snapshot(&self) -> Vec<CollectedEvent> {
        self.events.lock().unwrap().clone()
    }
}
