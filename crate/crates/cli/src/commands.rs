//! Subcommands. Human-readable diagnostics go to stderr, JSON to stdout.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use smartmask_control::{spawn_device, Clock, DeviceOptions, Server};
use smartmask_core::{
    decode_frame, encode_frame, parse_scenario, replay_jsonl, run_scenario, DeviceConfig, Frame,
    Scenario,
};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Remote = 1,
    Input = 2,
    Bind = 3,
    CorruptLog = 4,
}

#[derive(Debug, Parser)]
#[command(name = "smartmask", version, about = "SmartMask digital twin")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write the transcript as JSONL.
    Run(RunArgs),
    /// Serve the live simulated device over TCP and WebSocket.
    Serve(ServeArgs),
    /// Replay a session log and print the final device state.
    Replay(ReplayArgs),
    /// Send one command to a running device and print the reply.
    Send(SendArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = smartmask_core::DEFAULT_TICK_MS, value_parser = clap::value_parser!(u64).range(1..))]
    tick_ms: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7700")]
    listen: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:7701")]
    ws_listen: SocketAddr,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Sensor events injected on the device clock while serving.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = smartmask_core::DEFAULT_TICK_MS, value_parser = clap::value_parser!(u64).range(1..))]
    tick_ms: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("action").required(true).args(["toggle", "angle", "get_state"])))]
pub struct SendArgs {
    #[arg(long)]
    addr: String,
    #[arg(long)]
    toggle: bool,
    #[arg(long, allow_negative_numbers = true)]
    angle: Option<f64>,
    #[arg(long)]
    get_state: bool,
}

pub fn dispatch(cli: Cli) -> Exit {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Serve(args) => cmd_serve(&args),
        Command::Replay(args) => cmd_replay(&args),
        Command::Send(args) => cmd_send(&args),
    }
}

fn fail(code: Exit, err: anyhow::Error) -> Exit {
    eprintln!("error: {err:#}");
    code
}

fn read(path: &Path, what: &str) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn load_config(path: Option<&Path>) -> anyhow::Result<DeviceConfig> {
    let Some(path) = path else {
        return Ok(DeviceConfig::default());
    };
    let text = read(path, "config")?;
    let config: DeviceConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    config
        .validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(config)
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = read(path, "scenario")?;
    parse_scenario(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn cmd_run(args: &RunArgs) -> Exit {
    let prepared = load_scenario(&args.scenario).and_then(|s| Ok((s, load_config(args.config.as_deref())?)));
    let (scenario, config) = match prepared {
        Ok(v) => v,
        Err(err) => return fail(Exit::Input, err),
    };
    let transcript = match run_scenario(&scenario, &config, args.tick_ms) {
        Ok(t) => t,
        Err(err) => return fail(Exit::Input, err.into()),
    };
    if let Err(err) = fs::write(&args.out, transcript.to_jsonl()) {
        return fail(Exit::Input, anyhow!("cannot write {}: {err}", args.out.display()));
    }
    let end = transcript.last().expect("transcripts have at least one record");
    eprintln!(
        "{} events, {} ticks, final {} at {}°, {} alerts -> {}",
        scenario.len(),
        transcript.records.len(),
        end.position.as_str(),
        end.angle_deg,
        transcript.alerts().count(),
        args.out.display()
    );
    Exit::Ok
}

pub fn cmd_serve(args: &ServeArgs) -> Exit {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .try_init();
    let prepared = (|| {
        let scenario = args.scenario.as_deref().map(load_scenario).transpose()?;
        Ok::<_, anyhow::Error>((scenario, load_config(args.config.as_deref())?))
    })();
    let (scenario, config) = match prepared {
        Ok(v) => v,
        Err(err) => return fail(Exit::Input, err),
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    runtime.block_on(async {
        let server = match Server::bind(args.listen, Some(args.ws_listen)).await {
            Ok(server) => server,
            Err(err) => return fail(Exit::Bind, err.into()),
        };
        let options = DeviceOptions {
            config,
            tick_ms: args.tick_ms,
            clock: Clock::Wall,
            scenario,
            log_path: args.log.clone(),
            ..DeviceOptions::default()
        };
        let device = match spawn_device(options) {
            Ok(device) => device,
            Err(err) => return fail(Exit::Input, err.into()),
        };
        eprintln!(
            "serving on tcp {} and ws {}",
            server.tcp_addr(),
            server.ws_addr().expect("websocket listener bound")
        );
        server
            .run(device, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        eprintln!("shut down");
        Exit::Ok
    })
}

pub fn cmd_replay(args: &ReplayArgs) -> Exit {
    let prepared = read(&args.log, "log").and_then(|t| Ok((t, load_config(args.config.as_deref())?)));
    let (text, config) = match prepared {
        Ok(v) => v,
        Err(err) => return fail(Exit::Input, err),
    };
    match replay_jsonl(&text, &config) {
        Ok(state) => {
            let json = serde_json::to_value(state).expect("state serializes");
            println!("{json}");
            Exit::Ok
        }
        Err(err) => fail(Exit::CorruptLog, anyhow!("{}: {err}", args.log.display())),
    }
}

const SEND_TIMEOUT: Duration = Duration::from_secs(5);

pub fn cmd_send(args: &SendArgs) -> Exit {
    let frame = if args.toggle {
        Frame::Toggle
    } else if let Some(angle) = args.angle {
        Frame::SetAngle { angle }
    } else {
        Frame::GetState
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    let reply = runtime.block_on(async {
        tokio::time::timeout(SEND_TIMEOUT, exchange(&args.addr, &frame))
            .await
            .map_err(|_| anyhow!("no reply from {} within {SEND_TIMEOUT:?}", args.addr))?
    });
    match reply {
        Ok(reply) => {
            println!("{}", encode_frame(&reply));
            if matches!(reply, Frame::Error { .. }) {
                Exit::Remote
            } else {
                Exit::Ok
            }
        }
        Err(err) => fail(Exit::Remote, err),
    }
}

async fn exchange(addr: &str, frame: &Frame) -> anyhow::Result<Frame> {
    let stream = TcpStream::connect(addr)
        .await
        .with_context(|| format!("cannot connect to {addr}"))?;
    let (read, mut write) = stream.into_split();
    write.write_all(format!("{}\n", encode_frame(frame)).as_bytes()).await?;
    let line = BufReader::new(read)
        .lines()
        .next_line()
        .await?
        .ok_or_else(|| anyhow!("{addr} closed the connection"))?;
    decode_frame(&line).with_context(|| format!("unreadable reply {line:?}"))
}
