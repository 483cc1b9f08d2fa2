//! Timestamp sources shared by the runtime, control plane, and benchmarks.
//!
//! All latency math uses [`monotonic_ns`], which reads `CLOCK_MONOTONIC`
//! directly so values are comparable across processes on the same host
//! (child instance hosts report timestamps back to their parent).
//! [`epoch_ns`] is the wall clock used for the `ts` event header.

use std::time::{SystemTime, UNIX_EPOCH};

/// Nanoseconds on the host-wide monotonic clock.
pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // CLOCK_MONOTONIC cannot fail with a valid timespec pointer.
    unsafe {
        libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts);
    }
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

/// Nanoseconds since the Unix epoch on the wall clock.
pub fn epoch_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock before Unix epoch")
        .as_nanos() as u64
}
