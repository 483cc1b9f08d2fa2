//! Stream functions: serverless functions that are invoked once per stream
//! and fed events through an iterator, instead of once per event.
//!
//! The crate provides the event model and wire framing, a function SDK,
//! a per-stream instance runtime with bounded buffering and backpressure,
//! and a TCP control plane that routes incoming streams to function
//! instances and tears them down to zero when the stream ends.

pub mod clock;
pub mod event;
pub mod platform;
pub mod runtime;
pub mod sdk;
pub mod wire;

pub use event::{Event, EventError, Headers};
pub use sdk::{FunctionError, FunctionRegistry, StreamFunction};
pub use wire::{decode_frame, encode_frame, write_frame, DecodeError, EncodeError, Frame, StreamId};
