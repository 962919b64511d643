//! Acceptance gate. Each criterion runs under its time budget and prints a
//! single PASS/FAIL line; the process fails if any criterion fails.

use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use smartmask_control::{spawn_device, Clock, DeviceHandle, DeviceOptions, Server};
use smartmask_core::firmware::{self, AlertKind, SensorEvent};
use smartmask_core::protocol::{AlertFrame, StateFrame};
use smartmask_core::{
    decode_frame, encode_frame, parse_scenario, replay, run_scenario, CommandName, DeviceConfig,
    Frame, MaskState, Position, SensorKind,
};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

fn main() {
    let criteria: [(&str, Duration, fn()); 7] = [
        ("angle range 0..=180 accepted, -1/181 rejected, toggle 0<->180", Duration::from_secs(1), angle_range),
        ("detection range inclusive at 1 m", Duration::from_secs(1), detection_range),
        ("gesture flow opens at 400 ms +/- 1 tick, byte-identical transcripts", Duration::from_secs(1), gesture_flow),
        ("toggle involution, refractory and cooldown over 10^4 random cases", Duration::from_secs(10), toggle_refractory_cooldown),
        ("codec round-trip over fuzzed frames, decoder total", Duration::from_secs(5), codec_round_trip),
        ("replay(log) equals live final state after >= 50 inputs", Duration::from_secs(5), replay_equivalence),
        ("two subscribers see the same State broadcasts in the same order", Duration::from_secs(5), fan_out),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Ok(()) if elapsed <= budget => "PASS".to_string(),
            Ok(()) => format!("FAIL (over budget {budget:?})"),
            Err(_) => "FAIL".to_string(),
        };
        if !verdict.starts_with("PASS") {
            failed += 1;
        }
        println!("[{verdict}] {name} ({:.3}s, budget {}s)", elapsed.as_secs_f64(), budget.as_secs());
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn angle_range() {
    let cfg = DeviceConfig::default();
    let start = MaskState::initial(&cfg);
    for angle in 0..=180 {
        let out = firmware::apply_set_angle(&start, &cfg, f64::from(angle)).expect("in range");
        assert_eq!(out.new_state.target_angle_deg, f64::from(angle));
    }
    for angle in [-1.0, 181.0] {
        assert!(firmware::apply_set_angle(&start, &cfg, angle).is_err(), "{angle} accepted");
    }
    let mut state = start;
    for i in 0..10 {
        let out = firmware::apply_toggle(&state, &cfg);
        let expected = if i % 2 == 0 { 180.0 } else { 0.0 };
        assert_eq!(out.command.unwrap().target_angle_deg, expected);
        state = firmware::observe_servo(&out.new_state, &cfg, expected);
    }
}

fn detection_range() {
    let cfg = DeviceConfig::default();
    for (distance, alerts) in [(0.0, true), (0.5, true), (1.0, true), (1.001, false), (2.0, false), (5.0, false)] {
        let mut fresh = MaskState::initial(&cfg);
        let got = firmware::evaluate_proximity(&mut fresh, &cfg, distance, 0);
        assert_eq!(got.is_some(), alerts, "distance {distance}");
    }
}

fn gesture_flow() {
    const TICK: u64 = 10;
    let text = r#"{"events":[{"at_ms":100,"kind":"ir_gesture"}]}"#;
    let scenario = parse_scenario(text).unwrap();
    let transcript = run_scenario(&scenario, &DeviceConfig::default(), TICK).unwrap();
    let opened = transcript
        .records
        .iter()
        .find(|r| r.position == Position::Open && r.angle_deg == 180.0)
        .expect("never opened");
    let expected = 100 + 180 * 1000 / 600;
    assert!(opened.t_ms.abs_diff(expected) <= TICK, "opened at {} ms", opened.t_ms);

    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("gesture.json");
    std::fs::write(&scenario_path, text).unwrap();
    let mut files = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let out = dir.path().join(name);
        let run = Command::new(env!("CARGO_BIN_EXE_smartmask"))
            .args(["run", "--tick-ms", "10", "--scenario"])
            .arg(&scenario_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(run.status.success());
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], transcript.to_jsonl().into_bytes());
}

#[derive(Debug, Clone)]
struct Case {
    angle: u32,
    first_gesture: u64,
    gesture_gap: u64,
    events: Vec<(u64, SensorKind)>,
}

fn arb_case() -> impl Strategy<Value = Case> {
    let kind = prop_oneof![
        Just(SensorKind::IrGesture),
        (0.0f64..3.0).prop_map(|d| SensorKind::PirMotion { distance_m: d }),
        (35.0f64..41.0).prop_map(|c| SensorKind::Temperature { celsius: c }),
        (0.0f64..=180.0).prop_map(|a| SensorKind::ServoPosition { angle_deg: a }),
    ];
    (0u32..=180, 0u64..1_000_000, 0u64..500, prop::collection::vec((0u64..4000, kind), 0..30)).prop_map(
        |(angle, first_gesture, gesture_gap, events)| Case {
            angle,
            first_gesture,
            gesture_gap,
            events,
        },
    )
}

fn toggle_refractory_cooldown() {
    let cfg = DeviceConfig::default();
    assert_eq!((cfg.gesture_refractory_ms, cfg.alert_cooldown_ms), (500, 5000));
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&arb_case(), |case| {
            // double toggle from a settled endpoint restores the target
            let endpoint = if case.angle % 2 == 0 { 0.0 } else { 180.0 };
            let settled = MaskState::settled_at(endpoint, &cfg);
            let once = firmware::apply_toggle(&settled, &cfg).new_state;
            let twice = firmware::apply_toggle(&once, &cfg).new_state;
            prop_assert_eq!(twice.target_angle_deg, endpoint);
            let mid = MaskState::settled_at(f64::from(case.angle), &cfg);
            prop_assert_eq!(firmware::toggle_target(&mid, &cfg), if case.angle == 180 { 0.0 } else { 180.0 });

            // gestures under 500 ms apart give one command
            let s0 = MaskState::initial(&cfg);
            let a = firmware::handle_event(&s0, &cfg, &SensorEvent::new(case.first_gesture, SensorKind::IrGesture));
            let b = firmware::handle_event(
                &a.new_state,
                &cfg,
                &SensorEvent::new(case.first_gesture + case.gesture_gap, SensorKind::IrGesture),
            );
            prop_assert_eq!(a.command.is_some() as u8 + b.command.is_some() as u8, 1);

            // same-kind alerts are at least the cooldown apart
            let mut state = MaskState::initial(&cfg);
            let mut last: [Option<u64>; 2] = [None, None];
            let mut t = 0;
            for (gap, kind) in &case.events {
                t += gap;
                let out = firmware::handle_event(&state, &cfg, &SensorEvent::new(t, *kind));
                for alert in &out.alerts {
                    let slot = (alert.kind == AlertKind::Fever) as usize;
                    if let Some(prev) = last[slot] {
                        prop_assert!(alert.at_ms - prev >= 5000);
                    }
                    last[slot] = Some(alert.at_ms);
                }
                state = out.new_state;
            }
            Ok(())
        })
        .unwrap();
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    let angle = prop_oneof![(0u32..=180).prop_map(f64::from), 0.0f64..=180.0];
    let position = prop_oneof![
        Just(Position::Covering),
        Just(Position::Open),
        Just(Position::Partial),
        Just(Position::Moving)
    ];
    let command = prop_oneof![
        Just(CommandName::SetAngle),
        Just(CommandName::Toggle),
        Just(CommandName::GetState),
        Just(CommandName::Subscribe)
    ];
    prop_oneof![
        angle.clone().prop_map(|angle| Frame::SetAngle { angle }),
        Just(Frame::Toggle),
        Just(Frame::GetState),
        Just(Frame::Subscribe),
        (angle.clone(), angle, position, prop::option::of(-40.0f64..125.0), any::<bool>()).prop_map(
            |(angle_deg, target_deg, position, last_temp_c, alert_active)| Frame::State(StateFrame {
                angle_deg,
                target_deg,
                position,
                last_temp_c,
                alert_active
            })
        ),
        (prop_oneof![Just(AlertKind::Proximity), Just(AlertKind::Fever)], ".*", any::<u64>())
            .prop_map(|(kind, message, at_ms)| Frame::Alert(AlertFrame { kind, message, at_ms })),
        command.prop_map(|of| Frame::Ack { of }),
        ("[a-z_]{1,12}", ".*").prop_map(|(code, message)| Frame::Error { code, message }),
    ]
}

fn codec_round_trip() {
    let config = Config {
        cases: 2000,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config.clone())
        .run(&arb_frame(), |frame| {
            let line = encode_frame(&frame);
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(decode_frame(&line), Ok(frame));
            Ok(())
        })
        .unwrap();
    TestRunner::new(config)
        .run(&(arb_frame(), 0usize..80, ".{0,3}", ".*"), |(frame, at, junk, noise)| {
            let mut line = encode_frame(&frame);
            let at = line.char_indices().map(|(i, _)| i).nth(at).unwrap_or(line.len());
            line.insert_str(at, &junk);
            let _ = decode_frame(&line);
            let _ = decode_frame(&noise);
            Ok(())
        })
        .unwrap();
}

struct Client {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl Client {
    async fn connect(addr: SocketAddr) -> Self {
        let (read, write) = TcpStream::connect(addr).await.unwrap().into_split();
        Self {
            lines: BufReader::new(read).lines(),
            write,
        }
    }

    async fn send(&mut self, frame: &Frame) {
        let line = format!("{}\n", encode_frame(frame));
        self.write.write_all(line.as_bytes()).await.unwrap();
    }

    async fn recv(&mut self) -> Frame {
        let line = tokio::time::timeout(Duration::from_secs(2), self.lines.next_line())
            .await
            .expect("no frame within 2 s")
            .unwrap()
            .expect("connection closed");
        decode_frame(&line).unwrap()
    }

    async fn request(&mut self, frame: &Frame) -> Frame {
        self.send(frame).await;
        self.recv().await
    }
}

async fn start(options: DeviceOptions) -> (DeviceHandle, SocketAddr) {
    let device = spawn_device(options).unwrap();
    let server = Server::bind("127.0.0.1:0".parse().unwrap(), None).await.unwrap();
    let addr = server.tcp_addr();
    tokio::spawn(server.run(device.clone(), std::future::pending()));
    (device, addr)
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap()
}

fn replay_equivalence() {
    runtime().block_on(async {
        let (device, addr) = start(DeviceOptions {
            clock: Clock::Manual,
            ..DeviceOptions::default()
        })
        .await;
        let mut a = Client::connect(addr).await;
        let mut b = Client::connect(addr).await;
        let mut inputs = 0;
        for i in 0..30u32 {
            let client = if i % 2 == 0 { &mut a } else { &mut b };
            let reply = match i % 4 {
                0 => client.request(&Frame::Toggle).await,
                1 => client.request(&Frame::SetAngle { angle: f64::from(i * 7 % 181) }).await,
                2 => client.request(&Frame::SetAngle { angle: 200.0 }).await,
                _ => client.request(&Frame::GetState).await,
            };
            assert!(!matches!(reply, Frame::Error { .. }) || i % 4 == 2);
            inputs += 1;
            device.advance(u64::from(i % 5) * 3).await.unwrap();
            let sensor = match i % 3 {
                0 => SensorKind::PirMotion { distance_m: f64::from(i % 4) * 0.5 },
                1 => SensorKind::Temperature { celsius: 36.0 + f64::from(i % 5) },
                _ => SensorKind::IrGesture,
            };
            device.inject(sensor).await.unwrap();
            inputs += 1;
            if i % 6 == 5 {
                device.advance(60).await.unwrap();
            }
        }
        device.inject(SensorKind::IrGesture).await.unwrap();
        inputs += 1;
        device.advance(10).await.unwrap();
        assert!(inputs >= 50);

        let snapshot = device.snapshot().await.unwrap();
        let replayed = replay(snapshot.log.records(), &DeviceConfig::default());
        assert_eq!(replayed, snapshot.state);
        let reparsed = smartmask_core::EventLog::parse_jsonl(&snapshot.log.to_jsonl()).unwrap();
        assert_eq!(replay(reparsed.records(), &DeviceConfig::default()), snapshot.state);
    });
}

fn fan_out() {
    runtime().block_on(async {
        let (device, addr) = start(DeviceOptions {
            clock: Clock::Manual,
            ..DeviceOptions::default()
        })
        .await;
        let mut subs = [Client::connect(addr).await, Client::connect(addr).await];
        for sub in &mut subs {
            assert_eq!(sub.request(&Frame::Subscribe).await, Frame::Ack { of: CommandName::Subscribe });
            assert!(matches!(sub.recv().await, Frame::State(_)));
        }
        let mut actor = Client::connect(addr).await;
        assert_eq!(actor.request(&Frame::Toggle).await, Frame::Ack { of: CommandName::Toggle });
        device.advance(5).await.unwrap();

        let mut seen = [Vec::new(), Vec::new()];
        for (sub, seen) in subs.iter_mut().zip(seen.iter_mut()) {
            for _ in 0..6 {
                seen.push(sub.recv().await);
            }
        }
        let Frame::State(first) = &seen[0][0] else { panic!("expected a state frame") };
        assert_eq!(first.target_deg, 180.0);
        assert_eq!(seen[0], seen[1]);
    });
}
