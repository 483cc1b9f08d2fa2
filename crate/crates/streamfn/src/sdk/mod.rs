//! Function SDK: the stream-function trait, error types, and the registry
//! the control plane resolves HELLO target names against.
//!
//! A stream function is invoked once per stream. It pulls events from an
//! iterator that blocks until the next event arrives and ends when the
//! stream ends, and pushes results through an emit callback whose `false`
//! return means the consumer has gone away and the function should stop.

mod builtins;
mod handler;

pub use builtins::{FrameDelta, Grayscale, Identity, BUILTIN_FRAME_DELTA, BUILTIN_GRAYSCALE, BUILTIN_IDENTITY};
pub use handler::{run_handler, HandlerFailure, HandlerFailureCause, HandlerResult};

use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::event::Event;
use crate::wire::MAX_FUNCTION_NAME_LEN;

/// Error returned by a stream function to fail its stream.
#[derive(Debug, Error)]
pub enum FunctionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Other(String),
}

impl FunctionError {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        FunctionError::InvalidInput(msg.into())
    }

    pub fn other(msg: impl Into<String>) -> Self {
        FunctionError::Other(msg.into())
    }
}

/// A function invoked once per stream.
///
/// `input` yields the stream's events in arrival order and ends when the
/// stream ends. `emit` forwards an output event downstream and returns
/// `false` when no more output will be accepted; the function should then
/// return `Ok(())`. Returning before the input is exhausted is allowed and
/// ends the stream early.
pub trait StreamFunction: Send {
    fn process(
        &mut self,
        input: &mut dyn Iterator<Item = Event>,
        emit: &mut dyn FnMut(Event) -> bool,
    ) -> Result<(), FunctionError>;
}

impl<F> StreamFunction for F
where
    F: FnMut(
            &mut dyn Iterator<Item = Event>,
            &mut dyn FnMut(Event) -> bool,
        ) -> Result<(), FunctionError>
        + Send,
{
    fn process(
        &mut self,
        input: &mut dyn Iterator<Item = Event>,
        emit: &mut dyn FnMut(Event) -> bool,
    ) -> Result<(), FunctionError> {
        self(input, emit)
    }
}

/// Creates a fresh function instance for one stream.
pub type FunctionFactory = Arc<dyn Fn() -> Box<dyn StreamFunction> + Send + Sync>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("function {0:?} is already registered")]
    Duplicate(String),
    #[error("function name {name:?} is invalid: {reason}")]
    BadName { name: String, reason: &'static str },
}

/// Maps function names to factories. Each stream gets a fresh instance
/// from its function's factory, so instances never share state.
#[derive(Clone, Default)]
pub struct FunctionRegistry {
    factories: IndexMap<String, FunctionFactory>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the built-in functions at 160x120.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        registry.register_builtins(160, 120);
        registry
    }

    /// Registers the built-ins for the given frame dimensions.
    pub fn register_builtins(&mut self, width: u32, height: u32) {
        self.register(BUILTIN_IDENTITY, || Box::new(Identity))
            .expect("builtin identity");
        self.register(BUILTIN_GRAYSCALE, move || {
            Box::new(Grayscale::new(width, height))
        })
        .expect("builtin grayscale");
        self.register(BUILTIN_FRAME_DELTA, move || {
            Box::new(FrameDelta::new(width, height))
        })
        .expect("builtin frame_delta");
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        factory: impl Fn() -> Box<dyn StreamFunction> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        let name = name.into();
        if name.is_empty() {
            return Err(RegistryError::BadName {
                name,
                reason: "empty",
            });
        }
        if name.len() > MAX_FUNCTION_NAME_LEN {
            return Err(RegistryError::BadName {
                name,
                reason: "longer than the wire limit",
            });
        }
        if self.factories.contains_key(&name) {
            return Err(RegistryError::Duplicate(name));
        }
        self.factories.insert(name, Arc::new(factory));
        Ok(())
    }

    /// Builds a fresh instance of the named function.
    pub fn instantiate(&self, name: &str) -> Option<Box<dyn StreamFunction>> {
        self.factories.get(name).map(|f| f())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
