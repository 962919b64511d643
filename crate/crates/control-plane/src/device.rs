//! The live device: one task that owns the simulator and the session log.
//!
//! Every mutation (client commands, scheduled sensor events, clock ticks)
//! goes through this task's request queue, so the device sees a single total
//! order of inputs and the log records exactly that order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use smartmask_core::eventlog::{Direction, EventLog, LogEntry};
use smartmask_core::{
    AlertFrame, CommandName, DeviceConfig, Frame, MaskState, Scenario, SensorKind, SimError,
    Simulator, StateFrame, StepOutput,
};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::MissedTickBehavior;

pub const DEFAULT_HEARTBEAT_MS: u64 = 1000;
/// Per-subscriber backlog before a slow client is dropped.
pub const DEFAULT_BROADCAST_CAPACITY: usize = 256;
const REQUEST_QUEUE: usize = 256;

/// How the device clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// One tick per `tick_ms` of wall time.
    Wall,
    /// Ticks only on [`DeviceHandle::advance`].
    Manual,
}

#[derive(Debug, Clone)]
pub struct DeviceOptions {
    pub config: DeviceConfig,
    pub tick_ms: u64,
    pub heartbeat_ms: u64,
    pub clock: Clock,
    /// Sensor events replayed on the device clock while serving.
    pub scenario: Option<Scenario>,
    /// JSONL log file, truncated on start.
    pub log_path: Option<PathBuf>,
    pub broadcast_capacity: usize,
}

impl Default for DeviceOptions {
    fn default() -> Self {
        Self {
            config: DeviceConfig::default(),
            tick_ms: smartmask_core::DEFAULT_TICK_MS,
            heartbeat_ms: DEFAULT_HEARTBEAT_MS,
            clock: Clock::Wall,
            scenario: None,
            log_path: None,
            broadcast_capacity: DEFAULT_BROADCAST_CAPACITY,
        }
    }
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot open log {path}: {source}")]
    Log {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("device task has stopped")]
    Gone,
}

/// Point-in-time view of the device, taken inside the device task.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub now_ms: u64,
    pub state: MaskState,
    pub log: EventLog,
}

enum Request {
    Command {
        frame: Frame,
        reply: oneshot::Sender<Vec<Frame>>,
    },
    Subscribe {
        reply: oneshot::Sender<(Vec<Frame>, broadcast::Receiver<Frame>)>,
    },
    Inject {
        kind: SensorKind,
        reply: oneshot::Sender<()>,
    },
    Advance {
        ticks: u64,
        reply: oneshot::Sender<()>,
    },
    Snapshot {
        reply: oneshot::Sender<Snapshot>,
    },
}

/// Cloneable handle to the device task. The task stops once every handle
/// is dropped.
#[derive(Clone)]
pub struct DeviceHandle {
    requests: mpsc::Sender<Request>,
}

impl DeviceHandle {
    /// Applies a client frame and returns the direct replies (ack, error or
    /// state). `Subscribe` must go through [`DeviceHandle::subscribe`].
    pub async fn command(&self, frame: Frame) -> Result<Vec<Frame>, DeviceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Request::Command { frame, reply }).await?;
        rx.await.map_err(|_| DeviceError::Gone)
    }

    /// Acknowledges a subscription and returns the current state together
    /// with a receiver positioned right after it.
    pub async fn subscribe(&self) -> Result<(Vec<Frame>, broadcast::Receiver<Frame>), DeviceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Request::Subscribe { reply }).await?;
        rx.await.map_err(|_| DeviceError::Gone)
    }

    /// Feeds a sensor reading at the current device time.
    pub async fn inject(&self, kind: SensorKind) -> Result<(), DeviceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Request::Inject { kind, reply }).await?;
        rx.await.map_err(|_| DeviceError::Gone)
    }

    /// Runs `ticks` clock ticks. Meant for [`Clock::Manual`]; with the wall
    /// clock it simply adds extra ticks.
    pub async fn advance(&self, ticks: u64) -> Result<(), DeviceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Request::Advance { ticks, reply }).await?;
        rx.await.map_err(|_| DeviceError::Gone)
    }

    pub async fn snapshot(&self) -> Result<Snapshot, DeviceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Request::Snapshot { reply }).await?;
        rx.await.map_err(|_| DeviceError::Gone)
    }

    async fn send(&self, request: Request) -> Result<(), DeviceError> {
        self.requests.send(request).await.map_err(|_| DeviceError::Gone)
    }
}

/// Starts the device task on the current runtime.
pub fn spawn_device(options: DeviceOptions) -> Result<DeviceHandle, DeviceError> {
    let device = Device::new(&options)?;
    let (tx, rx) = mpsc::channel(REQUEST_QUEUE);
    let tick = Duration::from_millis(options.tick_ms);
    tokio::spawn(device.run(rx, options.clock, tick));
    Ok(DeviceHandle { requests: tx })
}

struct Device {
    sim: Simulator,
    log: EventLog,
    log_file: Option<BufWriter<File>>,
    events: broadcast::Sender<Frame>,
    scenario: Scenario,
    next_event: usize,
    heartbeat_ms: u64,
    last_heartbeat_ms: u64,
    last_temp_c: Option<f64>,
    last_alert_ms: Option<u64>,
    last_state: StateFrame,
}

impl Device {
    fn new(options: &DeviceOptions) -> Result<Self, DeviceError> {
        let sim = Simulator::new(options.config, options.tick_ms)?;
        let log_file = match &options.log_path {
            Some(path) => Some(BufWriter::new(File::create(path).map_err(|source| {
                DeviceError::Log {
                    path: path.clone(),
                    source,
                }
            })?)),
            None => None,
        };
        let (events, _) = broadcast::channel(options.broadcast_capacity.max(1));
        let mut device = Self {
            sim,
            log: EventLog::new(),
            log_file,
            events,
            scenario: options.scenario.clone().unwrap_or_else(Scenario::empty),
            next_event: 0,
            heartbeat_ms: options.heartbeat_ms.max(1),
            last_heartbeat_ms: 0,
            last_temp_c: None,
            last_alert_ms: None,
            last_state: StateFrame {
                angle_deg: 0.0,
                target_deg: 0.0,
                position: smartmask_core::Position::Covering,
                last_temp_c: None,
                alert_active: false,
            },
        };
        device.last_state = device.state_frame();
        Ok(device)
    }

    async fn run(mut self, mut requests: mpsc::Receiver<Request>, clock: Clock, tick: Duration) {
        let mut interval = tokio::time::interval(tick);
        interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
        // the first interval tick completes immediately; t = 0 is handled by it
        loop {
            tokio::select! {
                request = requests.recv() => match request {
                    Some(request) => self.handle(request),
                    None => break,
                },
                _ = interval.tick(), if clock == Clock::Wall => self.tick(),
            }
            self.flush_log();
        }
        self.flush_log();
    }

    fn handle(&mut self, request: Request) {
        match request {
            Request::Command { frame, reply } => {
                let replies = self.apply_command(frame);
                let _ = reply.send(replies);
                self.publish_if_changed();
            }
            Request::Subscribe { reply } => {
                let now = self.sim.now_ms();
                self.record(Direction::In, LogEntry::Frame(Frame::Subscribe));
                let replies = vec![
                    Frame::Ack {
                        of: CommandName::Subscribe,
                    },
                    Frame::State(self.state_frame()),
                ];
                for frame in &replies {
                    self.log_at(now, Direction::Out, LogEntry::Frame(frame.clone()));
                }
                let _ = reply.send((replies, self.events.subscribe()));
            }
            Request::Inject { kind, reply } => {
                self.inject(kind);
                self.publish_if_changed();
                let _ = reply.send(());
            }
            Request::Advance { ticks, reply } => {
                for _ in 0..ticks {
                    self.tick();
                }
                let _ = reply.send(());
            }
            Request::Snapshot { reply } => {
                let _ = reply.send(Snapshot {
                    now_ms: self.sim.now_ms(),
                    state: *self.sim.state(),
                    log: self.log.clone(),
                });
            }
        }
    }

    fn apply_command(&mut self, frame: Frame) -> Vec<Frame> {
        let replies = match frame {
            Frame::SetAngle { angle } => match self.sim.set_angle(angle) {
                Ok(_) => {
                    self.record(Direction::In, LogEntry::Frame(frame));
                    vec![Frame::Ack {
                        of: CommandName::SetAngle,
                    }]
                }
                Err(err) => vec![Frame::error("out_of_range", err.to_string())],
            },
            Frame::Toggle => {
                self.sim.toggle();
                self.record(Direction::In, LogEntry::Frame(frame));
                vec![Frame::Ack {
                    of: CommandName::Toggle,
                }]
            }
            Frame::GetState => {
                self.record(Direction::In, LogEntry::Frame(frame));
                vec![Frame::State(self.state_frame())]
            }
            Frame::Subscribe => vec![Frame::error(
                "unexpected_frame",
                "subscribe is handled by the connection",
            )],
            other => vec![Frame::error(
                "unexpected_frame",
                format!("{} frames are sent by the device, not to it", other.type_name()),
            )],
        };
        for frame in &replies {
            self.record(Direction::Out, LogEntry::Frame(frame.clone()));
        }
        replies
    }

    /// One clock tick: due scenario events, servo motion and feedback,
    /// broadcasts, then the clock moves on.
    fn tick(&mut self) {
        let now = self.sim.now_ms();
        while let Some(event) = self.scenario.events().get(self.next_event) {
            if event.at_ms > now {
                break;
            }
            self.next_event += 1;
            self.inject(event.kind);
        }
        let before = *self.sim.state();
        let angle = self.sim.step_servo();
        if *self.sim.state() != before {
            self.record(
                Direction::In,
                LogEntry::Sensor(SensorKind::ServoPosition { angle_deg: angle }),
            );
        }
        if !self.publish_if_changed() && now >= self.last_heartbeat_ms + self.heartbeat_ms {
            self.broadcast(Frame::State(self.last_state));
        }
        self.sim.advance_clock();
    }

    fn inject(&mut self, kind: SensorKind) {
        self.record(Direction::In, LogEntry::Sensor(kind));
        if let SensorKind::Temperature { celsius } = kind {
            self.last_temp_c = Some(celsius);
        }
        let out = self.sim.inject(kind);
        self.emit_alerts(&out);
    }

    fn emit_alerts(&mut self, out: &StepOutput) {
        for alert in &out.alerts {
            self.last_alert_ms = Some(alert.at_ms);
            self.broadcast(Frame::Alert(AlertFrame::from(alert)));
        }
    }

    fn state_frame(&self) -> StateFrame {
        let state = self.sim.state();
        let cooldown = self.sim.config().alert_cooldown_ms;
        StateFrame {
            angle_deg: state.current_angle_deg,
            target_deg: state.target_angle_deg,
            position: state.position,
            last_temp_c: self.last_temp_c,
            alert_active: self
                .last_alert_ms
                .is_some_and(|at| self.sim.now_ms().saturating_sub(at) < cooldown),
        }
    }

    fn publish_if_changed(&mut self) -> bool {
        let current = self.state_frame();
        if current == self.last_state {
            return false;
        }
        self.last_state = current;
        self.broadcast(Frame::State(current));
        true
    }

    fn broadcast(&mut self, frame: Frame) {
        if matches!(frame, Frame::State(_)) {
            self.last_heartbeat_ms = self.sim.now_ms();
        }
        self.record(Direction::Out, LogEntry::Frame(frame.clone()));
        // no subscribers is fine
        let _ = self.events.send(frame);
    }

    fn record(&mut self, dir: Direction, entry: LogEntry) {
        let now = self.sim.now_ms();
        self.log_at(now, dir, entry);
    }

    fn log_at(&mut self, t_ms: u64, dir: Direction, entry: LogEntry) {
        let record = self.log.append(t_ms, dir, entry);
        if let Some(file) = &mut self.log_file {
            let line = record.to_json_line();
            if let Err(err) = writeln!(file, "{line}") {
                tracing::warn!("log write failed, file logging disabled: {err}");
                self.log_file = None;
            }
        }
    }

    fn flush_log(&mut self) {
        if let Some(file) = &mut self.log_file {
            if let Err(err) = file.flush() {
                tracing::warn!("log flush failed, file logging disabled: {err}");
                self.log_file = None;
            }
        }
    }
}
