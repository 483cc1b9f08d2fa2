//! The event data type carried by every stream.
//!
//! An [`Event`] is an ordered header map plus an opaque payload. Header keys
//! are short printable strings; header values and the payload are raw bytes.
//! A few header keys are reserved and carry typed values by convention, see
//! [`keys`].

use indexmap::IndexMap;
use thiserror::Error;

/// Well-known header keys.
pub mod keys {
    /// Producer send timestamp, decimal nanoseconds since the Unix epoch.
    pub const TS: &str = "ts";
    /// Frame sequence number, decimal u64 starting at 0.
    pub const SEQ: &str = "seq";
    /// Optional routing override naming a target function.
    pub const FN: &str = "fn";
    /// In-band error reported by the platform to a producer.
    pub const ERROR: &str = "error";
}

/// Maximum header key length in bytes.
pub const MAX_KEY_LEN: usize = 255;
/// Maximum header value length in bytes.
pub const MAX_VALUE_LEN: usize = 65_535;
/// Maximum payload length in bytes.
pub const MAX_PAYLOAD_LEN: usize = (1 << 31) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("duplicate header key {0:?}")]
    DuplicateKey(String),
    #[error("header key {0:?} is empty")]
    EmptyKey(String),
    #[error("header key {key:?} is {len} bytes, limit {MAX_KEY_LEN}")]
    KeyTooLong { key: String, len: usize },
    #[error("header key {0:?} contains non-printable characters")]
    NonPrintableKey(String),
    #[error("value of header {key:?} is {len} bytes, limit {MAX_VALUE_LEN}")]
    ValueTooLong { key: String, len: usize },
    #[error("reserved header {key:?} does not parse as {expected}: {value:?}")]
    BadReservedValue {
        key: String,
        expected: &'static str,
        value: String,
    },
}

fn key_is_printable(key: &str) -> bool {
    !key.is_empty() && key.bytes().all(|b| (0x21..=0x7e).contains(&b))
}

fn validate_key(key: &str) -> Result<(), EventError> {
    if key.is_empty() {
        return Err(EventError::EmptyKey(key.to_string()));
    }
    if key.len() > MAX_KEY_LEN {
        return Err(EventError::KeyTooLong {
            key: key.chars().take(32).collect(),
            len: key.len(),
        });
    }
    if !key_is_printable(key) {
        return Err(EventError::NonPrintableKey(key.to_string()));
    }
    Ok(())
}

/// Ordered header map with unique keys. Iteration follows insertion order,
/// which is also the wire serialization order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers(IndexMap<String, Vec<u8>>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a header, replacing any existing value for the key.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Vec<u8>>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.0.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl<K: Into<String>, V: Into<Vec<u8>>> FromIterator<(K, V)> for Headers {
    /// Collects headers with replace-on-duplicate semantics. Use
    /// [`Event::new`] to reject duplicates instead.
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut h = Headers::new();
        for (k, v) in iter {
            h.set(k, v);
        }
        h
    }
}

/// One unit of stream data: headers plus an opaque payload.
///
/// Fields are public; the constructors validate the header invariants and
/// the wire codec enforces size limits at the transport boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Event {
    pub headers: Headers,
    pub payload: Vec<u8>,
}

impl Event {
    /// Builds an event from a header list and payload, rejecting duplicate
    /// keys, malformed keys, oversize values, and reserved headers whose
    /// values do not parse.
    pub fn new<K, V>(
        headers: impl IntoIterator<Item = (K, V)>,
        payload: impl Into<Vec<u8>>,
    ) -> Result<Self, EventError>
    where
        K: Into<String>,
        V: Into<Vec<u8>>,
    {
        let mut map = IndexMap::new();
        for (k, v) in headers {
            let key: String = k.into();
            let value: Vec<u8> = v.into();
            validate_key(&key)?;
            if value.len() > MAX_VALUE_LEN {
                return Err(EventError::ValueTooLong {
                    key,
                    len: value.len(),
                });
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(EventError::DuplicateKey(key));
            }
        }
        let event = Event {
            headers: Headers(map),
            payload: payload.into(),
        };
        event.check_reserved(keys::TS, "u64 nanoseconds")?;
        event.check_reserved(keys::SEQ, "u64 sequence number")?;
        Ok(event)
    }

    /// An event with the given payload and no headers.
    pub fn from_payload(payload: impl Into<Vec<u8>>) -> Self {
        Event {
            headers: Headers::new(),
            payload: payload.into(),
        }
    }

    fn check_reserved(&self, key: &str, expected: &'static str) -> Result<(), EventError> {
        if let Some(raw) = self.headers.get(key) {
            parse_u64(raw).ok_or_else(|| EventError::BadReservedValue {
                key: key.to_string(),
                expected,
                value: String::from_utf8_lossy(raw).into_owned(),
            })?;
        }
        Ok(())
    }

    /// Producer timestamp from the `ts` header, if present and well-formed.
    pub fn ts(&self) -> Option<u64> {
        self.headers.get(keys::TS).and_then(parse_u64)
    }

    /// Sequence number from the `seq` header, if present and well-formed.
    pub fn seq(&self) -> Option<u64> {
        self.headers.get(keys::SEQ).and_then(parse_u64)
    }

    /// Routing override from the `fn` header, if present and valid UTF-8.
    pub fn fn_override(&self) -> Option<&str> {
        self.headers
            .get(keys::FN)
            .and_then(|v| std::str::from_utf8(v).ok())
    }
}

fn parse_u64(raw: &[u8]) -> Option<u64> {
    std::str::from_utf8(raw).ok()?.parse().ok()
}
