//! Client-side helpers shared by the integration tests.
#![allow(dead_code)]

use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamfn::wire::{write_frame, Frame};
use streamfn::Event;

/// Connects to a platform and opens a stream to the named function.
pub fn open_stream(addr: SocketAddr, function: &str) -> TcpStream {
    let stream = TcpStream::connect(addr).expect("connect to platform");
    let mut writer = &stream;
    write_frame(
        &mut writer,
        &Frame::Hello {
            function: function.into(),
            stream_id: 0,
        },
    )
    .expect("send HELLO");
    stream
}

pub fn send_event(stream: &TcpStream, event: Event) {
    let mut writer = stream;
    write_frame(&mut writer, &Frame::Data(event)).expect("send DATA");
}

pub fn send_eos(stream: &TcpStream) {
    let mut writer = stream;
    write_frame(&mut writer, &Frame::Eos).expect("send EOS");
}

/// Polls `cond` every 10ms until it holds or `timeout` elapses.
pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if cond() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
}

/// Deterministic random RGB frame payloads of `width * height * 3` bytes.
pub fn rgb_frames(seed: u64, count: usize, width: u32, height: u32) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..(width as usize * height as usize * 3))
                .map(|_| rng.gen())
                .collect()
        })
        .collect()
}

/// Runs a stream function over `inputs` in place and returns what it
/// emitted.
pub fn run_in_process(
    f: &mut dyn streamfn::StreamFunction,
    inputs: Vec<Event>,
) -> Vec<Event> {
    let mut out = Vec::new();
    f.process(&mut inputs.into_iter(), &mut |e| {
        out.push(e);
        true
    })
    .expect("in-process run");
    out
}
