//! Length-prefixed binary framing for stream transport.
//!
//! Every frame is `type (u8) | body_length (u32 BE) | body`. A valid stream
//! on the wire is exactly one HELLO, zero or more DATA, at most one EOS,
//! then transport close. Transport close without EOS is treated by readers
//! as a clean end of input, so crash-close and polite-close drain the same
//! way.
//!
//! Body layouts (all integers big-endian):
//!
//! * HELLO: `fn_name_len (u8) | fn_name | stream_id (u64)`, stream id 0
//!   meaning "assign me"
//! * DATA: `header_count (u16)`, then per header `key_len (u8) | key |
//!   val_len (u16) | val`, then `payload_len (u32) | payload`
//! * EOS: empty

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, Headers, MAX_KEY_LEN, MAX_PAYLOAD_LEN, MAX_VALUE_LEN};

/// Maximum function name length in a HELLO frame.
pub const MAX_FUNCTION_NAME_LEN: usize = 255;
/// Maximum declared body length; larger declarations are a protocol error.
pub const MAX_BODY_LEN: u64 = (1 << 31) - 1;

pub const FRAME_TYPE_HELLO: u8 = 0x00;
pub const FRAME_TYPE_DATA: u8 = 0x01;
pub const FRAME_TYPE_EOS: u8 = 0x02;

/// Identifier of one stream, assigned by the control plane at accept time.
/// Monotonically increasing in connection-accept order, unique for the
/// lifetime of the control-plane process.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct StreamId(pub u64);

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One frame on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// Opens a stream: target function plus a stream id, 0 = "assign me".
    Hello { function: String, stream_id: u64 },
    /// One event.
    Data(Event),
    /// Explicit end of stream.
    Eos,
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        match self {
            Frame::Hello { .. } => FRAME_TYPE_HELLO,
            Frame::Data(_) => FRAME_TYPE_DATA,
            Frame::Eos => FRAME_TYPE_EOS,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("function name is {len} bytes, limit {MAX_FUNCTION_NAME_LEN}")]
    FunctionNameTooLong { len: usize },
    #[error("header key {key:?} is {len} bytes, limit {MAX_KEY_LEN}")]
    KeyTooLong { key: String, len: usize },
    #[error("value of header {key:?} is {len} bytes, limit {MAX_VALUE_LEN}")]
    ValueTooLong { key: String, len: usize },
    #[error("payload is {len} bytes, limit {MAX_PAYLOAD_LEN}")]
    PayloadTooLarge { len: usize },
    #[error("{count} headers exceed the u16 header-count field")]
    TooManyHeaders { count: usize },
    #[error("frame body is {len} bytes, limit {MAX_BODY_LEN}")]
    BodyTooLarge { len: u64 },
}

#[derive(Debug, Error)]
pub enum DecodeError {
    /// The source ended cleanly at a frame boundary: no more frames.
    #[error("source closed at a frame boundary")]
    Eof,
    /// The source ended in the middle of a frame.
    #[error("source closed mid-frame after {got} of {want} bytes of {section}")]
    Incomplete {
        section: &'static str,
        want: usize,
        got: usize,
    },
    #[error("unknown frame type {0:#04x}")]
    UnknownFrameType(u8),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum FrameSendError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serializes a frame to its exact wire bytes. Header entries are written
/// in insertion order, so the output is a pure function of the frame value.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, EncodeError> {
    let body = encode_body(frame)?;
    if body.len() as u64 > MAX_BODY_LEN {
        return Err(EncodeError::BodyTooLarge {
            len: body.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(5 + body.len());
    out.push(frame.type_byte());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

fn encode_body(frame: &Frame) -> Result<Vec<u8>, EncodeError> {
    match frame {
        Frame::Hello {
            function,
            stream_id,
        } => {
            if function.len() > MAX_FUNCTION_NAME_LEN {
                return Err(EncodeError::FunctionNameTooLong {
                    len: function.len(),
                });
            }
            let mut body = Vec::with_capacity(1 + function.len() + 8);
            body.push(function.len() as u8);
            body.extend_from_slice(function.as_bytes());
            body.extend_from_slice(&stream_id.to_be_bytes());
            Ok(body)
        }
        Frame::Data(event) => {
            if event.headers.len() > u16::MAX as usize {
                return Err(EncodeError::TooManyHeaders {
                    count: event.headers.len(),
                });
            }
            if event.payload.len() > MAX_PAYLOAD_LEN {
                return Err(EncodeError::PayloadTooLarge {
                    len: event.payload.len(),
                });
            }
            let mut body = Vec::with_capacity(2 + 4 + event.payload.len());
            body.extend_from_slice(&(event.headers.len() as u16).to_be_bytes());
            for (key, value) in event.headers.iter() {
                if key.len() > MAX_KEY_LEN {
                    return Err(EncodeError::KeyTooLong {
                        key: key.chars().take(32).collect(),
                        len: key.len(),
                    });
                }
                if value.len() > MAX_VALUE_LEN {
                    return Err(EncodeError::ValueTooLong {
                        key: key.to_string(),
                        len: value.len(),
                    });
                }
                body.push(key.len() as u8);
                body.extend_from_slice(key.as_bytes());
                body.extend_from_slice(&(value.len() as u16).to_be_bytes());
                body.extend_from_slice(value);
            }
            body.extend_from_slice(&(event.payload.len() as u32).to_be_bytes());
            body.extend_from_slice(&event.payload);
            Ok(body)
        }
        Frame::Eos => Ok(Vec::new()),
    }
}

/// Encodes and writes one frame.
pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), FrameSendError> {
    let bytes = encode_frame(frame)?;
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads exactly one frame from the source.
///
/// The source must be positioned at a frame boundary. Exactly one frame is
/// consumed; the body is parsed only up to its declared length, so frames
/// can be decoded back to back from one reader. A source that ends before
/// the first byte yields [`DecodeError::Eof`]; one that ends inside a frame
/// yields [`DecodeError::Incomplete`] so callers can tell a closed stream
/// from a malformed one.
pub fn decode_frame<R: Read>(r: &mut R) -> Result<Frame, DecodeError> {
    let frame_type = match read_first_byte(r)? {
        Some(b) => b,
        None => return Err(DecodeError::Eof),
    };
    let mut len_buf = [0u8; 4];
    read_exact_or_incomplete(r, &mut len_buf, "body length", 1)?;
    let body_len = u32::from_be_bytes(len_buf) as u64;
    if body_len > MAX_BODY_LEN {
        return Err(DecodeError::Malformed(format!(
            "declared body length {body_len} exceeds limit {MAX_BODY_LEN}"
        )));
    }
    let mut body = Vec::new();
    r.take(body_len).read_to_end(&mut body)?;
    if (body.len() as u64) < body_len {
        return Err(DecodeError::Incomplete {
            section: "body",
            want: body_len as usize,
            got: body.len(),
        });
    }
    match frame_type {
        FRAME_TYPE_HELLO => decode_hello(&body),
        FRAME_TYPE_DATA => decode_data(&body),
        FRAME_TYPE_EOS => {
            if !body.is_empty() {
                return Err(DecodeError::Malformed(format!(
                    "EOS frame with nonempty body of {} bytes",
                    body.len()
                )));
            }
            Ok(Frame::Eos)
        }
        other => Err(DecodeError::UnknownFrameType(other)),
    }
}

fn read_first_byte<R: Read>(r: &mut R) -> Result<Option<u8>, DecodeError> {
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) => return Ok(None),
            Ok(_) => return Ok(Some(byte[0])),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(DecodeError::Io(e)),
        }
    }
}

fn read_exact_or_incomplete<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    section: &'static str,
    already: usize,
) -> Result<(), DecodeError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(DecodeError::Incomplete {
                    section,
                    want: already + buf.len(),
                    got: already + filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(DecodeError::Io(e)),
        }
    }
    Ok(())
}

/// Cursor over a fully read frame body. Running out of body bytes here is a
/// length inconsistency, not a truncated transport.
struct BodyCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BodyCursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Malformed(format!(
                "body length does not cover {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, DecodeError> {
        Ok(self.bytes(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.bytes(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(DecodeError::Malformed(format!(
                "{} trailing bytes after frame body",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn decode_hello(body: &[u8]) -> Result<Frame, DecodeError> {
    let mut cur = BodyCursor::new(body);
    let name_len = cur.u8("function name length")? as usize;
    let name = cur.bytes(name_len, "function name")?;
    let function = std::str::from_utf8(name)
        .map_err(|_| DecodeError::Malformed("function name is not UTF-8".into()))?
        .to_string();
    let stream_id = cur.u64("stream id")?;
    cur.finish()?;
    Ok(Frame::Hello {
        function,
        stream_id,
    })
}

fn decode_data(body: &[u8]) -> Result<Frame, DecodeError> {
    let mut cur = BodyCursor::new(body);
    let header_count = cur.u16("header count")?;
    let mut headers = Headers::new();
    for _ in 0..header_count {
        let key_len = cur.u8("header key length")? as usize;
        let key_bytes = cur.bytes(key_len, "header key")?;
        let key = std::str::from_utf8(key_bytes)
            .map_err(|_| DecodeError::Malformed("header key is not UTF-8".into()))?;
        let val_len = cur.u16("header value length")? as usize;
        let value = cur.bytes(val_len, "header value")?;
        if headers.contains(key) {
            return Err(DecodeError::Malformed(format!(
                "duplicate header key {key:?}"
            )));
        }
        headers.set(key, value);
    }
    let payload_len = cur.u32("payload length")? as usize;
    let payload = cur.bytes(payload_len, "payload")?.to_vec();
    cur.finish()?;
    Ok(Frame::Data(Event { headers, payload }))
}
