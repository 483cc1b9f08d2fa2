//! Acceptance suite: one test per numbered criterion, each printing a
//! `PASS` line with the measured values. The long benchmark runs are
//! shared between criteria through lazily initialized statics.

use std::io::Write as _;
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamfn::platform::{start_platform, PlatformConfig, PlatformHandle};
use streamfn::runtime::{Collector, InstanceConfig, OutputSpec};
use streamfn::sdk::{run_handler, FrameDelta, Grayscale, StreamFunction};
use streamfn::{encode_frame, write_frame, Event, Frame, FunctionRegistry};
use streamfn_bench::{
    compute_overhead_s, compute_theta, run_mode, BenchReport, MetricError, Mode, ModeConfig,
    WorkloadSpec,
};

fn default_workload(duration_s: f64) -> WorkloadSpec {
    WorkloadSpec {
        duration_s,
        ..WorkloadSpec::default()
    }
}

fn bench(mode: Mode, duration_s: f64) -> BenchReport {
    run_mode(&ModeConfig::new(mode), &default_workload(duration_s))
        .unwrap_or_else(|e| panic!("{mode} run over {duration_s} s failed: {e}"))
}

static STREAM_10: LazyLock<BenchReport> = LazyLock::new(|| bench(Mode::StreamFn, 10.0));
static STREAM_30: LazyLock<BenchReport> = LazyLock::new(|| bench(Mode::StreamFn, 30.0));
static STREAM_60: LazyLock<BenchReport> = LazyLock::new(|| bench(Mode::StreamFn, 60.0));
static BATCH_10: LazyLock<BenchReport> = LazyLock::new(|| bench(Mode::Batch, 10.0));
static ENGINE_10: LazyLock<BenchReport> = LazyLock::new(|| bench(Mode::EngineEmulated, 10.0));

fn pass(criterion: u32, detail: String) {
    println!("acceptance criterion {criterion}: PASS ({detail})");
}

fn open_stream(addr: std::net::SocketAddr, function: &str) -> TcpStream {
    let mut conn = TcpStream::connect(addr).expect("connect");
    write_frame(
        &mut conn,
        &Frame::Hello {
            function: function.to_string(),
            stream_id: 0,
        },
    )
    .expect("hello");
    conn
}

fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    loop {
        if cond() {
            return true;
        }
        if start.elapsed() > timeout {
            return false;
        }
        thread::sleep(Duration::from_millis(5));
    }
}

fn random_payload(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}

/// Runs one function over a vector of events, collecting its output.
fn run_locally(function: &mut dyn StreamFunction, input: Vec<Event>) -> Vec<Event> {
    let mut output = Vec::new();
    run_handler(function, input.into_iter(), |event| {
        output.push(event);
        true
    })
    .expect("local run");
    output
}

#[test]
fn criterion_01_streaming_cold_start_stays_small() {
    let (t10, t60) = (STREAM_10.theta, STREAM_60.theta);
    assert!(t10 < 0.05, "theta at 10 s = {t10}");
    assert!(t60 < 0.01, "theta at 60 s = {t60}");
    pass(1, format!("stream_fn theta {t10:.5} @10s, {t60:.5} @60s"));
}

#[test]
fn criterion_02_batch_spends_the_run_waiting() {
    let theta = BATCH_10.theta;
    assert!(theta > 0.90, "batch theta at 10 s = {theta}");
    pass(2, format!("batch theta {theta:.4} @10s"));
}

#[test]
fn criterion_03_engine_cold_start_dominates() {
    let (theta, overhead) = (ENGINE_10.theta, ENGINE_10.overhead_s);
    assert!(theta > 0.95, "engine theta = {theta}");
    assert!(
        (overhead - 108.0).abs() <= 0.15 * 108.0,
        "engine overhead = {overhead} s"
    );
    pass(3, format!("engine theta {theta:.4}, overhead {overhead:.2} s"));
}

#[test]
fn criterion_04_streaming_removes_the_engine_overhead() {
    assert!(ENGINE_10.overhead_s > 0.0);
    let ratio = STREAM_10.overhead_s / ENGINE_10.overhead_s;
    assert!(ratio < 0.02, "overhead ratio = {ratio}");
    pass(4, format!("overhead ratio {ratio:.6}"));
}

#[test]
fn criterion_05_streaming_overhead_under_100ms() {
    for (report, duration) in [(&STREAM_10, 10), (&STREAM_30, 30), (&STREAM_60, 60)] {
        let overhead = report.overhead_s;
        assert!(
            overhead > 0.0 && overhead < 0.1,
            "overhead at {duration} s = {overhead} s"
        );
    }
    pass(
        5,
        format!(
            "stream_fn overhead {:.1} / {:.1} / {:.1} ms",
            STREAM_10.overhead_s * 1e3,
            STREAM_30.overhead_s * 1e3,
            STREAM_60.overhead_s * 1e3
        ),
    );
}

#[test]
fn criterion_06_metrics_match_closed_form() {
    let fixed_point = |numer: u64, denom: u64| -> f64 {
        (numer as u128 * 10u128.pow(18) / denom as u128) as f64 / 1e18
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let t0: u64 = rng.gen_range(0..1u64 << 60);
        let span: u64 = rng.gen_range(1..1u64 << 40);
        let wait: u64 = rng.gen_range(0..=span);
        let (t1, t2) = (t0 + wait, t0 + span);

        let theta = compute_theta(t0, t1, t2).unwrap();
        let theta_oracle = fixed_point(wait, span);
        let theta_err = if theta_oracle == 0.0 {
            theta.abs()
        } else {
            ((theta - theta_oracle) / theta_oracle).abs()
        };
        assert!(theta_err < 1e-12, "theta({t0},{t1},{t2}): {theta} vs {theta_oracle}");

        let stream_s = rng.gen_range(0.0..span as f64 / 1e9);
        let overhead = compute_overhead_s(t0, t2, stream_s).unwrap();
        let overhead_oracle = fixed_point(span, 1_000_000_000) - stream_s;
        let scale = overhead_oracle.abs().max(1e-9);
        assert!(
            ((overhead - overhead_oracle) / scale).abs() < 1e-12,
            "overhead({t0},{t2},{stream_s}): {overhead} vs {overhead_oracle}"
        );
    }

    assert!(matches!(
        compute_theta(10, 5, 20),
        Err(MetricError::NonMonotonic { .. })
    ));
    assert!(matches!(
        compute_theta(10, 30, 20),
        Err(MetricError::NonMonotonic { .. })
    ));
    assert!(matches!(compute_theta(10, 10, 10), Err(MetricError::ZeroDuration)));
    assert!(matches!(
        compute_overhead_s(10, 5, 1.0),
        Err(MetricError::NonMonotonic { .. })
    ));
    assert!(matches!(
        compute_overhead_s(0, 10, f64::NAN),
        Err(MetricError::BadStreamSeconds(_))
    ));
    pass(6, "1000 random triples within 1e-12, invalid inputs rejected".to_string());
}

#[test]
fn criterion_07_lifecycle_invariants() {
    // (a) + (b): exactly one construction and one invocation per stream,
    // and the live-instance count returns to zero after every close.
    let constructions = Arc::new(AtomicU64::new(0));
    let invocations = Arc::new(AtomicU64::new(0));
    let mut registry = FunctionRegistry::new();
    registry
        .register("counted", {
            let (constructions, invocations) = (constructions.clone(), invocations.clone());
            move || {
                constructions.fetch_add(1, Ordering::SeqCst);
                let invocations = invocations.clone();
                Box::new(
                    move |input: &mut dyn Iterator<Item = Event>,
                          emit: &mut dyn FnMut(Event) -> bool|
                          -> Result<(), streamfn::FunctionError> {
                        invocations.fetch_add(1, Ordering::SeqCst);
                        for event in input {
                            if !emit(event) {
                                break;
                            }
                        }
                        Ok(())
                    },
                ) as Box<dyn StreamFunction>
            }
        })
        .unwrap();
    let platform = start_platform(PlatformConfig::new(registry)).unwrap();
    let addr = platform.local_addr();
    for i in 0..100u64 {
        let mut conn = open_stream(addr, "counted");
        for j in 0..3u64 {
            let event = Event::new([("seq", j.to_string())], vec![i as u8]).unwrap();
            write_frame(&mut conn, &Frame::Data(event)).unwrap();
        }
        write_frame(&mut conn, &Frame::Eos).unwrap();
        drop(conn);
        // Completion must be recorded (so "not started yet" cannot pass
        // as "scaled to zero") and the instance gone, within a second.
        assert!(
            wait_until(Duration::from_secs(1), || {
                platform.summary().streams_completed == i + 1 && platform.live_instances() == 0
            }),
            "live instances lingered after stream {i}"
        );
    }
    assert_eq!(constructions.load(Ordering::SeqCst), 100);
    assert_eq!(invocations.load(Ordering::SeqCst), 100);
    let summary = platform.summary();
    assert_eq!(summary.streams_completed, 100);
    assert_eq!(summary.events_in, 300);
    platform.shutdown();

    // (c) arrival order is preserved across 10,000 events.
    let collector = Arc::new(Collector::new());
    let registry = FunctionRegistry::with_builtins();
    let mut template = InstanceConfig::new("identity");
    template.output = OutputSpec::Collect(collector.clone());
    let platform = start_platform(PlatformConfig::new(registry).with_function(template)).unwrap();
    let mut conn = open_stream(platform.local_addr(), "identity");
    for i in 0..10_000u64 {
        let event = Event::new([("seq", i.to_string())], i.to_be_bytes().to_vec()).unwrap();
        write_frame(&mut conn, &Frame::Data(event)).unwrap();
    }
    write_frame(&mut conn, &Frame::Eos).unwrap();
    assert!(wait_until(Duration::from_secs(30), || {
        platform.summary().streams_completed == 1
    }));
    let collected = collector.snapshot();
    assert_eq!(collected.len(), 10_000);
    for (i, c) in collected.iter().enumerate() {
        assert_eq!(c.event.seq(), Some(i as u64), "event {i} out of order");
        assert_eq!(c.event.payload, (i as u64).to_be_bytes());
    }
    platform.shutdown();

    // (d) 20 concurrent stateful streams each match their sequential oracle.
    let (width, height, frames_per_stream) = (32u32, 24u32, 30usize);
    let mut registry = FunctionRegistry::new();
    let mut config = PlatformConfig::new(FunctionRegistry::new());
    let mut collectors = Vec::new();
    for i in 0..20 {
        let name = format!("delta{i:02}");
        registry
            .register(name.clone(), move || {
                Box::new(FrameDelta::new(width, height)) as Box<dyn StreamFunction>
            })
            .unwrap();
        let collector = Arc::new(Collector::new());
        let mut template = InstanceConfig::new(&name);
        template.width = width;
        template.height = height;
        template.output = OutputSpec::Collect(collector.clone());
        config = config.with_function(template);
        collectors.push(collector);
    }
    config.registry = registry;
    let platform = start_platform(config).unwrap();
    let addr = platform.local_addr();
    let inputs: Vec<Vec<Event>> = (0..20)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            (0..frames_per_stream)
                .map(|j| {
                    Event::new(
                        [("seq", j.to_string())],
                        random_payload(&mut rng, (width * height * 3) as usize),
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let clients: Vec<_> = (0..20)
        .map(|i| {
            let events = inputs[i].clone();
            let name = format!("delta{i:02}");
            thread::spawn(move || {
                let mut conn = open_stream(addr, &name);
                for event in events {
                    write_frame(&mut conn, &Frame::Data(event)).unwrap();
                    thread::sleep(Duration::from_millis(1));
                }
                write_frame(&mut conn, &Frame::Eos).unwrap();
            })
        })
        .collect();
    for client in clients {
        client.join().unwrap();
    }
    assert!(wait_until(Duration::from_secs(30), || {
        platform.summary().streams_completed == 20
    }));
    for i in 0..20 {
        let oracle = run_locally(&mut FrameDelta::new(width, height), inputs[i].clone());
        let got = collectors[i].snapshot();
        assert_eq!(got.len(), oracle.len(), "stream {i} output count");
        for (j, (c, o)) in got.iter().zip(&oracle).enumerate() {
            assert_eq!(c.event.payload, o.payload, "stream {i} frame {j}");
        }
    }
    platform.shutdown();

    pass(
        7,
        "one invocation per stream x100, scale-to-zero within 1 s, \
         10000 events in order, 20 concurrent streams match their oracles"
            .to_string(),
    );
}

#[test]
fn criterion_08_codec_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let check = |frame: Frame| {
        let bytes = encode_frame(&frame).expect("encode");
        let mut reader = bytes.as_slice();
        let decoded = streamfn::decode_frame(&mut reader).expect("decode");
        assert!(reader.is_empty(), "decode left trailing bytes");
        assert_eq!(decoded, frame);
        assert_eq!(encode_frame(&decoded).unwrap(), bytes);
    };

    for _ in 0..10_000 {
        let frame = match rng.gen_range(0..10) {
            0 => Frame::Hello {
                function: (0..rng.gen_range(1..=16))
                    .map(|_| rng.gen_range(b'a'..=b'z') as char)
                    .collect(),
                stream_id: rng.gen(),
            },
            1 => Frame::Eos,
            _ => {
                let headers: Vec<(String, Vec<u8>)> = (0..rng.gen_range(0..5))
                    .map(|i| {
                        let value_len = rng.gen_range(0..64);
                        (format!("k{i}"), random_payload(&mut rng, value_len))
                    })
                    .collect();
                let payload_len = rng.gen_range(0..2048);
                Frame::Data(Event::new(headers, random_payload(&mut rng, payload_len)).unwrap())
            }
        };
        check(frame);
    }

    // Boundary cases: empty everything, and a maximum-size header.
    check(Frame::Data(Event::from_payload(Vec::new())));
    check(Frame::Data(
        Event::new([("k", Vec::new())], Vec::new()).unwrap(),
    ));
    let max_key = "k".repeat(255);
    let max_value = vec![0xAB; 65_535];
    check(Frame::Data(
        Event::new([(max_key, max_value)], vec![1, 2, 3]).unwrap(),
    ));
    check(Frame::Hello {
        function: "f".repeat(255),
        stream_id: u64::MAX,
    });
    pass(8, "10000 random frames plus boundary frames round-trip".to_string());
}

#[test]
fn criterion_09_grayscale_matches_the_pixel_oracle() {
    let (width, height) = (160u32, 120u32);
    let oracle = |payload: &[u8]| -> Vec<u8> {
        let mut out = Vec::with_capacity(payload.len());
        for pixel in payload.chunks_exact(3) {
            let mean = ((pixel[0] as u16 + pixel[1] as u16 + pixel[2] as u16) / 3) as u8;
            out.extend_from_slice(&[mean, mean, mean]);
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let payload = random_payload(&mut rng, (width * height * 3) as usize);
        let input = Event::new([("seq", i.to_string())], payload.clone()).unwrap();
        let output = run_locally(&mut Grayscale::new(width, height), vec![input]);
        assert_eq!(output.len(), 1);
        assert_eq!(output[0].payload, oracle(&payload), "frame {i}");

        let again = run_locally(
            &mut Grayscale::new(width, height),
            vec![output[0].clone()],
        );
        assert_eq!(again[0].payload, output[0].payload, "frame {i} not idempotent");
    }
    pass(9, "100 random frames match the oracle; output is a fixed point".to_string());
}

#[test]
fn criterion_10_chain_matches_in_process_composition() {
    let (width, height, frames) = (64u32, 48u32, 40usize);
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let inputs: Vec<Event> = (0..frames)
        .map(|i| {
            Event::new(
                [("seq", i.to_string())],
                random_payload(&mut rng, (width * height * 3) as usize),
            )
            .unwrap()
        })
        .collect();

    let collector = Arc::new(Collector::new());
    let mut registry_down = FunctionRegistry::new();
    registry_down.register_builtins(width, height);
    let mut delta_template = InstanceConfig::new("frame_delta");
    delta_template.width = width;
    delta_template.height = height;
    delta_template.output = OutputSpec::Collect(collector.clone());
    let downstream: PlatformHandle =
        start_platform(PlatformConfig::new(registry_down).with_function(delta_template)).unwrap();

    let mut registry_up = FunctionRegistry::new();
    registry_up.register_builtins(width, height);
    let mut gray_template = InstanceConfig::new("grayscale");
    gray_template.width = width;
    gray_template.height = height;
    gray_template.output = OutputSpec::Downstream {
        addr: downstream.local_addr().to_string(),
        function: "frame_delta".to_string(),
    };
    let upstream =
        start_platform(PlatformConfig::new(registry_up).with_function(gray_template)).unwrap();

    let mut conn = open_stream(upstream.local_addr(), "grayscale");
    for event in &inputs {
        write_frame(&mut conn, &Frame::Data(event.clone())).unwrap();
    }
    write_frame(&mut conn, &Frame::Eos).unwrap();
    conn.flush().unwrap();
    drop(conn);
    assert!(wait_until(Duration::from_secs(30), || {
        downstream.summary().streams_completed == 1
    }));

    let grayed = run_locally(&mut Grayscale::new(width, height), inputs);
    let composed = run_locally(&mut FrameDelta::new(width, height), grayed);
    let chained = collector.snapshot();
    assert_eq!(chained.len(), composed.len());
    for (i, (c, o)) in chained.iter().zip(&composed).enumerate() {
        assert_eq!(c.event.payload, o.payload, "chained frame {i}");
        assert_eq!(c.event.seq(), o.seq(), "chained frame {i} seq");
    }
    upstream.shutdown();
    downstream.shutdown();
    pass(10, format!("{frames}-frame chain equals local composition"));
}
