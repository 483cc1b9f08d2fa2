//! Built-in stream functions used by the control plane and benchmarks.

use crate::event::Event;

use super::{FunctionError, StreamFunction};

pub const BUILTIN_IDENTITY: &str = "identity";
pub const BUILTIN_GRAYSCALE: &str = "grayscale";
pub const BUILTIN_FRAME_DELTA: &str = "frame_delta";

/// Forwards every event unchanged.
pub struct Identity;

impl StreamFunction for Identity {
    fn process(
        &mut self,
        input: &mut dyn Iterator<Item = Event>,
        emit: &mut dyn FnMut(Event) -> bool,
    ) -> Result<(), FunctionError> {
        for event in input {
            if !emit(event) {
                break;
            }
        }
        Ok(())
    }
}

fn expect_rgb_payload(event: &Event, width: u32, height: u32) -> Result<usize, FunctionError> {
    let expected = width as usize * height as usize * 3;
    if event.payload.len() != expected {
        return Err(FunctionError::invalid_input(format!(
            "payload is {} bytes, expected {width}x{height}x3 = {expected}",
            event.payload.len()
        )));
    }
    Ok(expected)
}

/// Converts packed RGB frames to grayscale. Each pixel's three channels are
/// replaced by the integer mean (r + g + b) / 3, rounded down. Headers pass
/// through unchanged.
pub struct Grayscale {
    width: u32,
    height: u32,
}

impl Grayscale {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl StreamFunction for Grayscale {
    fn process(
        &mut self,
        input: &mut dyn Iterator<Item = Event>,
        emit: &mut dyn FnMut(Event) -> bool,
    ) -> Result<(), FunctionError> {
        for event in input {
            expect_rgb_payload(&event, self.width, self.height)?;
            let mut out = Vec::with_capacity(event.payload.len());
            for px in event.payload.chunks_exact(3) {
                let mean = ((px[0] as u16 + px[1] as u16 + px[2] as u16) / 3) as u8;
                out.extend_from_slice(&[mean, mean, mean]);
            }
            if !emit(Event {
                headers: event.headers,
                payload: out,
            }) {
                break;
            }
        }
        Ok(())
    }
}

/// Emits, per frame, the number of byte positions that differ from the
/// previous frame, as a decimal ASCII payload. The first frame has no
/// predecessor and yields "0". Headers pass through unchanged.
pub struct FrameDelta {
    width: u32,
    height: u32,
    prev: Option<Vec<u8>>,
}

impl FrameDelta {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            prev: None,
        }
    }
}

impl StreamFunction for FrameDelta {
    fn process(
        &mut self,
        input: &mut dyn Iterator<Item = Event>,
        emit: &mut dyn FnMut(Event) -> bool,
    ) -> Result<(), FunctionError> {
        for event in input {
            expect_rgb_payload(&event, self.width, self.height)?;
            let delta: u64 = match &self.prev {
                None => 0,
                Some(prev) => prev
                    .iter()
                    .zip(&event.payload)
                    .filter(|(a, b)| a != b)
                    .count() as u64,
            };
            self.prev = Some(event.payload);
            if !emit(Event {
                headers: event.headers,
                payload: delta.to_string().into_bytes(),
            }) {
                break;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const W: u32 = 160;
    const H: u32 = 120;

    fn run(f: &mut dyn StreamFunction, frames: Vec<Event>) -> Vec<Event> {
        let mut out = Vec::new();
        f.process(&mut frames.into_iter(), &mut |e| {
            out.push(e);
            true
        })
        .unwrap();
        out
    }

    /// Reference grayscale written pixel by pixel, independent of the
    /// chunked implementation above.
    fn grayscale_oracle(payload: &[u8], width: u32, height: u32) -> Vec<u8> {
        let mut expected = vec![0u8; payload.len()];
        for i in 0..(width as usize * height as usize) {
            let r = payload[3 * i] as u32;
            let g = payload[3 * i + 1] as u32;
            let b = payload[3 * i + 2] as u32;
            let mean = ((r + g + b) / 3) as u8;
            expected[3 * i] = mean;
            expected[3 * i + 1] = mean;
            expected[3 * i + 2] = mean;
        }
        expected
    }

    fn random_frame(rng: &mut impl Rng) -> Vec<u8> {
        (0..(W * H * 3)).map(|_| rng.gen()).collect()
    }

    #[test]
    fn grayscale_single_pixel_reference_values() {
        let mut f = Grayscale::new(1, 1);
        let out = run(&mut f, vec![Event::from_payload(vec![10u8, 20, 40])]);
        // (10 + 20 + 40) / 3 = 23 rounded down from 23.33.
        assert_eq!(out[0].payload, vec![23u8, 23, 23]);

        let mut f = Grayscale::new(1, 1);
        let out = run(&mut f, vec![Event::from_payload(vec![255u8, 255, 255])]);
        assert_eq!(out[0].payload, vec![255u8, 255, 255]);

        let mut f = Grayscale::new(1, 1);
        let out = run(&mut f, vec![Event::from_payload(vec![0u8, 0, 1])]);
        assert_eq!(out[0].payload, vec![0u8, 0, 0]);
    }

    #[test]
    fn grayscale_matches_oracle_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let payload = random_frame(&mut rng);
            let mut f = Grayscale::new(W, H);
            let out = run(&mut f, vec![Event::from_payload(payload.clone())]);
            assert_eq!(out[0].payload, grayscale_oracle(&payload, W, H));
        }
    }

    #[test]
    fn grayscale_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let payload = random_frame(&mut rng);
        let mut f = Grayscale::new(W, H);
        let once = run(&mut f, vec![Event::from_payload(payload)]);
        let mut f = Grayscale::new(W, H);
        let twice = run(&mut f, vec![once[0].clone()]);
        assert_eq!(once[0].payload, twice[0].payload);
    }

    #[test]
    fn grayscale_preserves_headers() {
        let frame = Event::new([("seq", "4"), ("ts", "123")], vec![0u8; (W * H * 3) as usize])
            .unwrap();
        let mut f = Grayscale::new(W, H);
        let out = run(&mut f, vec![frame]);
        assert_eq!(out[0].headers.get("seq"), Some(&b"4"[..]));
        assert_eq!(out[0].headers.get("ts"), Some(&b"123"[..]));
    }

    #[test]
    fn grayscale_rejects_wrong_payload_size() {
        let mut f = Grayscale::new(W, H);
        let err = f
            .process(
                &mut vec![Event::from_payload(vec![0u8; 10])].into_iter(),
                &mut |_| true,
            )
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("10") && msg.contains("57600"), "{msg}");
    }

    #[test]
    fn frame_delta_first_frame_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut f = FrameDelta::new(W, H);
        let out = run(&mut f, vec![Event::from_payload(random_frame(&mut rng))]);
        assert_eq!(out[0].payload, b"0");
    }

    #[test]
    fn frame_delta_identical_frames_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let frame = random_frame(&mut rng);
        let mut f = FrameDelta::new(W, H);
        let out = run(
            &mut f,
            vec![
                Event::from_payload(frame.clone()),
                Event::from_payload(frame),
            ],
        );
        assert_eq!(out[1].payload, b"0");
    }

    #[test]
    fn frame_delta_counts_known_changes() {
        let base = vec![0u8; (W * H * 3) as usize];
        let mut changed = base.clone();
        changed[0] = 1;
        changed[100] = 9;
        changed[57599] = 255;
        let mut f = FrameDelta::new(W, H);
        let out = run(
            &mut f,
            vec![Event::from_payload(base), Event::from_payload(changed)],
        );
        assert_eq!(out[1].payload, b"3");
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn frame_delta_matches_oracle_on_random_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let frames: Vec<Vec<u8>> = (0..8).map(|_| random_frame(&mut rng)).collect();

        // Reference: positional byte comparison with explicit indexing,
        // kept index-based on purpose so it shares no shape with the
        // iterator implementation.
        let mut expected = vec![b"0".to_vec()];
        for i in 1..frames.len() {
            let mut count = 0u64;
            for j in 0..frames[i].len() {
                if frames[i][j] != frames[i - 1][j] {
                    count += 1;
                }
            }
            expected.push(count.to_string().into_bytes());
        }

        let mut f = FrameDelta::new(W, H);
        let out = run(
            &mut f,
            frames.into_iter().map(Event::from_payload).collect(),
        );
        let got: Vec<Vec<u8>> = out.into_iter().map(|e| e.payload).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn identity_passes_events_through_unchanged() {
        let frames = vec![
            Event::new([("seq", "0")], "alpha").unwrap(),
            Event::new([("seq", "1")], "beta").unwrap(),
        ];
        let mut f = Identity;
        let out = run(&mut f, frames.clone());
        assert_eq!(out, frames);
    }

    #[test]
    fn emit_false_stops_processing() {
        let frames: Vec<Event> = (0..10).map(|i| Event::from_payload(vec![i as u8])).collect();
        let mut seen = 0;
        let mut f = Identity;
        f.process(&mut frames.into_iter(), &mut |_| {
            seen += 1;
            seen < 3
        })
        .unwrap();
        assert_eq!(seen, 3);
    }
}
