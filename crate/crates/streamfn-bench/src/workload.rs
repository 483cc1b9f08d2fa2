//! Deterministic frame workload: a seeded pool of distinct random RGB
//! frames, replayed in a cycle at a fixed rate.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use streamfn::clock::{epoch_ns, monotonic_ns};
use streamfn::Event;

/// What to generate: `frame_count() = round(duration_s * fps)` frames of
/// `width * height * 3` bytes, frame `i` due at `t0 + i / fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub duration_s: f64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub distinct_frames: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            fps: 10.0,
            width: 160,
            height: 120,
            seed: 0,
            distinct_frames: 20,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("duration_s must be positive and finite")]
    BadDuration,
    #[error("fps must be positive and finite")]
    BadFps,
    #[error("width and height must be nonzero")]
    BadDimensions,
    #[error("distinct_frames must be at least 1")]
    BadDistinct,
    #[error("workload would send no frames")]
    Empty,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(WorkloadError::BadDuration);
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(WorkloadError::BadFps);
        }
        if self.width == 0 || self.height == 0 {
            return Err(WorkloadError::BadDimensions);
        }
        if self.distinct_frames == 0 {
            return Err(WorkloadError::BadDistinct);
        }
        if self.frame_count() == 0 {
            return Err(WorkloadError::Empty);
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }

    /// Interval between consecutive frames, in nanoseconds.
    pub fn frame_interval_ns(&self) -> u64 {
        (1e9 / self.fps).round() as u64
    }

    /// Time actually spent generating: from the first frame to the last.
    pub fn generation_span_s(&self) -> f64 {
        (self.frame_count() as f64 - 1.0) / self.fps
    }
}

/// Pre-generated pool of distinct random frames; frame `i` of the stream
/// is `pool[i % distinct]`.
pub struct FramePool {
    frames: Vec<Vec<u8>>,
}

impl FramePool {
    pub fn generate(spec: &WorkloadSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let size = spec.frame_bytes();
        let frames = (0..spec.distinct_frames)
            .map(|_| (0..size).map(|_| rng.gen()).collect())
            .collect();
        Self { frames }
    }

    pub fn frame(&self, index: usize) -> &[u8] {
        &self.frames[index % self.frames.len()]
    }

    pub fn distinct(&self) -> usize {
        self.frames.len()
    }

    /// The event for stream position `index`: `seq` and `ts` headers plus
    /// the pooled payload.
    pub fn event(&self, index: usize) -> Event {
        Event::new(
            [
                ("seq", index.to_string()),
                ("ts", epoch_ns().to_string()),
            ],
            self.frame(index).to_vec(),
        )
        .expect("workload event is valid by construction")
    }
}

/// Sleeps until the monotonic clock reaches `deadline_ns`. Returns
/// immediately when the deadline has already passed, so a late sender
/// catches up instead of skipping frames.
pub fn sleep_until(deadline_ns: u64) {
    loop {
        let now = monotonic_ns();
        if now >= deadline_ns {
            return;
        }
        std::thread::sleep(Duration::from_nanos(deadline_ns - now));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_is_deterministic_per_seed() {
        let spec = WorkloadSpec::default();
        let a = FramePool::generate(&spec);
        let b = FramePool::generate(&spec);
        for i in 0..spec.distinct_frames {
            assert_eq!(a.frame(i), b.frame(i));
        }
        let other = FramePool::generate(&WorkloadSpec {
            seed: 1,
            ..spec.clone()
        });
        assert_ne!(a.frame(0), other.frame(0));
    }

    #[test]
    fn pool_frames_are_distinct_and_sized() {
        let spec = WorkloadSpec::default();
        let pool = FramePool::generate(&spec);
        assert_eq!(pool.distinct(), 20);
        for i in 0..20 {
            assert_eq!(pool.frame(i).len(), 160 * 120 * 3);
            for j in (i + 1)..20 {
                assert_ne!(pool.frame(i), pool.frame(j), "frames {i} and {j} collide");
            }
        }
    }

    #[test]
    fn stream_cycles_through_the_pool() {
        let spec = WorkloadSpec::default();
        let pool = FramePool::generate(&spec);
        assert_eq!(pool.frame(0), pool.frame(20));
        assert_eq!(pool.frame(7), pool.frame(47));
    }

    #[test]
    fn events_carry_seq_and_ts() {
        let pool = FramePool::generate(&WorkloadSpec::default());
        let event = pool.event(33);
        assert_eq!(event.seq(), Some(33));
        let ts = event.ts().expect("ts header");
        // Plausible range for nanoseconds since the Unix epoch.
        assert!(ts > 1_500_000_000_000_000_000);
        assert_eq!(event.payload, pool.frame(33));
    }

    #[test]
    fn frame_count_follows_duration_and_fps() {
        let spec = WorkloadSpec {
            duration_s: 10.0,
            fps: 10.0,
            ..WorkloadSpec::default()
        };
        assert_eq!(spec.frame_count(), 100);
        assert_eq!(spec.frame_interval_ns(), 100_000_000);
        assert!((spec.generation_span_s() - 9.9).abs() < 1e-12);

        let spec = WorkloadSpec {
            duration_s: 60.0,
            fps: 10.0,
            ..WorkloadSpec::default()
        };
        assert_eq!(spec.frame_count(), 600);
    }

    #[test]
    fn validation_rejects_nonsense() {
        let good = WorkloadSpec::default();
        assert_eq!(good.validate(), Ok(()));
        assert_eq!(
            WorkloadSpec { duration_s: 0.0, ..good.clone() }.validate(),
            Err(WorkloadError::BadDuration)
        );
        assert_eq!(
            WorkloadSpec { fps: f64::NAN, ..good.clone() }.validate(),
            Err(WorkloadError::BadFps)
        );
        assert_eq!(
            WorkloadSpec { width: 0, ..good.clone() }.validate(),
            Err(WorkloadError::BadDimensions)
        );
        assert_eq!(
            WorkloadSpec { distinct_frames: 0, ..good.clone() }.validate(),
            Err(WorkloadError::BadDistinct)
        );
        assert_eq!(
            WorkloadSpec { duration_s: 0.001, fps: 1.0, ..good }.validate(),
            Err(WorkloadError::Empty)
        );
    }

    #[test]
    fn sleep_until_reaches_the_deadline() {
        let start = monotonic_ns();
        sleep_until(start + 20_000_000);
        assert!(monotonic_ns() >= start + 20_000_000);
        // Past deadlines return immediately.
        let before = monotonic_ns();
        sleep_until(before.saturating_sub(1_000_000));
        assert!(monotonic_ns() - before < 5_000_000);
    }
}
