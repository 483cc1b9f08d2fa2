//! The function handler: wraps one invocation of a stream function,
//! counting events, timestamping, and containing panics.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::monotonic_ns;
use crate::event::Event;

use super::{FunctionError, StreamFunction};

/// Accounting for one completed invocation. Timestamps are monotonic
/// nanoseconds from [`monotonic_ns`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerResult {
    /// Events handed to the function.
    pub events_in: u64,
    /// Events the function emitted that the output accepted.
    pub events_out: u64,
    /// When the first event was handed to the function, if any arrived.
    pub first_event_ns: Option<u64>,
    /// When the function returned.
    pub last_done_ns: u64,
}

#[derive(Debug)]
pub enum HandlerFailureCause {
    Function(FunctionError),
    Panic(String),
}

/// A failed invocation, with the accounting up to the failure point.
#[derive(Debug, Error)]
#[error("function {describe}: {cause_msg}", describe = match self.cause {
    HandlerFailureCause::Function(_) => "failed",
    HandlerFailureCause::Panic(_) => "panicked",
}, cause_msg = match &self.cause {
    HandlerFailureCause::Function(e) => e.to_string(),
    HandlerFailureCause::Panic(m) => m.clone(),
})]
pub struct HandlerFailure {
    pub partial: HandlerResult,
    pub cause: HandlerFailureCause,
}

struct Counters {
    events_in: Cell<u64>,
    events_out: Cell<u64>,
    first_event_ns: Cell<Option<u64>>,
}

struct CountedInput<'c, I> {
    inner: I,
    counters: &'c Counters,
}

impl<I: Iterator<Item = Event>> Iterator for CountedInput<'_, I> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let event = self.inner.next()?;
        if self.counters.first_event_ns.get().is_none() {
            self.counters.first_event_ns.set(Some(monotonic_ns()));
        }
        self.counters.events_in.set(self.counters.events_in.get() + 1);
        Some(event)
    }
}

/// Runs one stream function over one stream.
///
/// Pulls from `input` until it ends or the function returns, forwarding
/// emitted events to `sink`. The sink's `false` return is passed through to
/// the function as "stop emitting". Panics inside the function are caught
/// and reported as a failure rather than tearing down the caller.
pub fn run_handler(
    function: &mut dyn StreamFunction,
    input: impl Iterator<Item = Event>,
    mut sink: impl FnMut(Event) -> bool,
) -> Result<HandlerResult, HandlerFailure> {
    let counters = Counters {
        events_in: Cell::new(0),
        events_out: Cell::new(0),
        first_event_ns: Cell::new(None),
    };
    let mut counted = CountedInput {
        inner: input,
        counters: &counters,
    };
    let mut emit = |event: Event| -> bool {
        let accepted = sink(event);
        if accepted {
            counters.events_out.set(counters.events_out.get() + 1);
        }
        accepted
    };

    let outcome = catch_unwind(AssertUnwindSafe(|| {
        function.process(&mut counted, &mut emit)
    }));

    let result = HandlerResult {
        events_in: counters.events_in.get(),
        events_out: counters.events_out.get(),
        first_event_ns: counters.first_event_ns.get(),
        last_done_ns: monotonic_ns(),
    };
    match outcome {
        Ok(Ok(())) => Ok(result),
        Ok(Err(e)) => Err(HandlerFailure {
            partial: result,
            cause: HandlerFailureCause::Function(e),
        }),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "opaque panic payload".to_string());
            Err(HandlerFailure {
                partial: result,
                cause: HandlerFailureCause::Panic(msg),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdk::Identity;

    fn events(n: usize) -> Vec<Event> {
        (0..n).map(|i| Event::from_payload(vec![i as u8])).collect()
    }

    #[test]
    fn counts_events_and_timestamps() {
        let before = monotonic_ns();
        let mut collected = Vec::new();
        let result = run_handler(&mut Identity, events(5).into_iter(), |e| {
            collected.push(e);
            true
        })
        .unwrap();
        assert_eq!(result.events_in, 5);
        assert_eq!(result.events_out, 5);
        assert_eq!(collected.len(), 5);
        let first = result.first_event_ns.unwrap();
        assert!(first >= before);
        assert!(result.last_done_ns >= first);
    }

    #[test]
    fn empty_input_has_no_first_event() {
        let result = run_handler(&mut Identity, events(0).into_iter(), |_| true).unwrap();
        assert_eq!(result.events_in, 0);
        assert_eq!(result.events_out, 0);
        assert_eq!(result.first_event_ns, None);
    }

    #[test]
    fn function_error_carries_partial_counts() {
        let mut failing = |input: &mut dyn Iterator<Item = Event>,
                           emit: &mut dyn FnMut(Event) -> bool|
         -> Result<(), FunctionError> {
            for (i, event) in input.enumerate() {
                if i == 2 {
                    return Err(FunctionError::other("boom"));
                }
                emit(event);
            }
            Ok(())
        };
        let failure = run_handler(&mut failing, events(5).into_iter(), |_| true).unwrap_err();
        assert_eq!(failure.partial.events_in, 3);
        assert_eq!(failure.partial.events_out, 2);
        assert!(matches!(failure.cause, HandlerFailureCause::Function(_)));
        assert!(failure.to_string().contains("boom"));
    }

    #[test]
    fn panic_is_contained() {
        let mut panicking = |input: &mut dyn Iterator<Item = Event>,
                             _emit: &mut dyn FnMut(Event) -> bool|
         -> Result<(), FunctionError> {
            let _ = input.next();
            panic!("deliberate test panic");
        };
        let failure = run_handler(&mut panicking, events(3).into_iter(), |_| true).unwrap_err();
        assert_eq!(failure.partial.events_in, 1);
        match &failure.cause {
            HandlerFailureCause::Panic(msg) => assert!(msg.contains("deliberate test panic")),
            other => panic!("expected panic cause, got {other:?}"),
        }
    }

    #[test]
    fn rejected_emits_are_not_counted_out() {
        let mut accepted = 0;
        let result = run_handler(&mut Identity, events(10).into_iter(), |_| {
            accepted += 1;
            accepted <= 4
        })
        .unwrap();
        assert_eq!(result.events_out, 4);
        // Identity stops after the first false.
        assert_eq!(accepted, 5);
    }

    #[test]
    fn early_return_leaves_input_unconsumed() {
        let mut take_two = |input: &mut dyn Iterator<Item = Event>,
                            emit: &mut dyn FnMut(Event) -> bool|
         -> Result<(), FunctionError> {
            for event in input.take(2) {
                emit(event);
            }
            Ok(())
        };
        let result = run_handler(&mut take_two, events(10).into_iter(), |_| true).unwrap();
        assert_eq!(result.events_in, 2);
        assert_eq!(result.events_out, 2);
    }
}
