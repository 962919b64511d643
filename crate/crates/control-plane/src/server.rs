//! TCP (newline-delimited JSON) and WebSocket front ends.
//!
//! Both transports carry the same frames and share one connection loop; the
//! WebSocket side sends one frame per text message.

use std::future::Future;
use std::io;
use std::net::SocketAddr;

use futures::{Sink, SinkExt, Stream, StreamExt};
use smartmask_core::{decode_frame, encode_frame, CommandName, Frame};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use futures::future::Either;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinSet;
use tokio_tungstenite::tungstenite::Message;
use tokio_util::codec::{FramedRead, FramedWrite, LinesCodec};

use crate::device::DeviceHandle;

/// Longest accepted inbound line.
pub const MAX_LINE_BYTES: usize = 64 * 1024;
/// Outbound frames buffered per client.
pub const CLIENT_QUEUE: usize = 64;

#[derive(Debug, Error)]
#[error("cannot bind {addr}: {source}")]
pub struct BindError {
    pub addr: SocketAddr,
    #[source]
    pub source: io::Error,
}

pub struct Server {
    tcp: TcpListener,
    ws: Option<TcpListener>,
}

impl Server {
    pub async fn bind(tcp_addr: SocketAddr, ws_addr: Option<SocketAddr>) -> Result<Self, BindError> {
        let tcp = TcpListener::bind(tcp_addr).await.map_err(|source| BindError {
            addr: tcp_addr,
            source,
        })?;
        let ws = match ws_addr {
            Some(addr) => Some(
                TcpListener::bind(addr)
                    .await
                    .map_err(|source| BindError { addr, source })?,
            ),
            None => None,
        };
        Ok(Self { tcp, ws })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp.local_addr().expect("bound listener has an address")
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws
            .as_ref()
            .map(|l| l.local_addr().expect("bound listener has an address"))
    }

    /// Accepts clients until `shutdown` resolves, then drops every
    /// connection.
    pub async fn run(self, device: DeviceHandle, shutdown: impl Future<Output = ()>) {
        let mut clients = JoinSet::new();
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                accepted = self.tcp.accept() => match accepted {
                    Ok((stream, peer)) => {
                        tracing::debug!(%peer, "tcp client connected");
                        clients.spawn(serve_tcp(stream, device.clone()));
                    }
                    Err(err) => tracing::warn!("tcp accept failed: {err}"),
                },
                accepted = accept_opt(self.ws.as_ref()) => match accepted {
                    Ok((stream, peer)) => {
                        tracing::debug!(%peer, "websocket client connected");
                        clients.spawn(serve_ws(stream, device.clone()));
                    }
                    Err(err) => tracing::warn!("websocket accept failed: {err}"),
                },
                Some(_) = clients.join_next(), if !clients.is_empty() => {}
            }
        }
        clients.shutdown().await;
    }
}

async fn accept_opt(listener: Option<&TcpListener>) -> io::Result<(TcpStream, SocketAddr)> {
    match listener {
        Some(l) => l.accept().await,
        None => std::future::pending().await,
    }
}

async fn serve_tcp(stream: TcpStream, device: DeviceHandle) {
    let (read, write) = stream.into_split();
    let lines = FramedRead::new(read, LinesCodec::new_with_max_length(MAX_LINE_BYTES))
        .map(|line| line.map_err(|e| e.to_string()));
    let sink = FramedWrite::new(write, LinesCodec::new());
    serve_connection(lines, sink, device).await;
}

async fn serve_ws(stream: TcpStream, device: DeviceHandle) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(err) => {
            tracing::debug!("websocket handshake failed: {err}");
            return;
        }
    };
    let (sink, stream) = ws.split();
    let texts = stream.filter_map(|msg| async move {
        match msg {
            Ok(Message::Text(text)) => Some(Ok(text)),
            Ok(Message::Binary(bytes)) => Some(String::from_utf8(bytes).map_err(|e| e.to_string())),
            Ok(Message::Close(_)) => Some(Err("closed".to_string())),
            Ok(_) => None,
            Err(err) => Some(Err(err.to_string())),
        }
    });
    let sink = sink.with(|text: String| async move { Ok::<_, tokio_tungstenite::tungstenite::Error>(Message::Text(text)) });
    serve_connection(texts, sink, device).await;
}

/// Per-client loop: decode requests, forward them to the device, queue the
/// replies, and once subscribed relay broadcasts. Writes go through a
/// bounded queue; a client that lets it fill up, or falls behind the
/// broadcast backlog, is disconnected.
pub async fn serve_connection<In, Out>(incoming: In, outgoing: Out, device: DeviceHandle)
where
    In: Stream<Item = Result<String, String>>,
    Out: Sink<String>,
{
    let (queue, pending) = mpsc::channel::<String>(CLIENT_QUEUE);
    let writer = async move {
        futures::pin_mut!(outgoing);
        let mut pending = pending;
        while let Some(line) = pending.recv().await {
            if outgoing.send(line).await.is_err() {
                break;
            }
        }
    };
    let reader = read_loop(incoming, queue, device);
    futures::pin_mut!(writer, reader);
    match futures::future::select(reader, writer).await {
        // client went away normally: deliver what is already queued
        Either::Left((Exit::Closed, writer)) => writer.await,
        Either::Left((Exit::Overflow, _)) => tracing::info!("dropping slow client"),
        Either::Right(_) => {}
    }
}

enum Exit {
    Closed,
    Overflow,
}

async fn read_loop<In>(incoming: In, queue: mpsc::Sender<String>, device: DeviceHandle) -> Exit
where
    In: Stream<Item = Result<String, String>>,
{
    futures::pin_mut!(incoming);
    let mut feed: Option<broadcast::Receiver<Frame>> = None;
    loop {
        let replies = tokio::select! {
            line = incoming.next() => match line {
                Some(Ok(line)) if line.trim().is_empty() => continue,
                Some(Ok(line)) => match handle_line(&line, &device, &mut feed).await {
                    Some(replies) => replies,
                    None => return Exit::Closed,
                },
                Some(Err(err)) => {
                    tracing::debug!("client read failed: {err}");
                    let _ = queue.try_send(encode_frame(&Frame::error("malformed", err)));
                    return Exit::Closed;
                }
                None => return Exit::Closed,
            },
            event = recv_opt(&mut feed) => match event {
                Ok(frame) => vec![frame],
                Err(broadcast::error::RecvError::Lagged(_)) => return Exit::Overflow,
                Err(broadcast::error::RecvError::Closed) => return Exit::Closed,
            },
        };
        for frame in replies {
            match queue.try_send(encode_frame(&frame)) {
                Ok(()) => {}
                Err(mpsc::error::TrySendError::Full(_)) => return Exit::Overflow,
                Err(mpsc::error::TrySendError::Closed(_)) => return Exit::Closed,
            }
        }
    }
}

async fn recv_opt(feed: &mut Option<broadcast::Receiver<Frame>>) -> Result<Frame, broadcast::error::RecvError> {
    match feed {
        Some(rx) => rx.recv().await,
        None => std::future::pending().await,
    }
}

/// Returns the frames to send back, or `None` if the device is gone.
async fn handle_line(
    line: &str,
    device: &DeviceHandle,
    feed: &mut Option<broadcast::Receiver<Frame>>,
) -> Option<Vec<Frame>> {
    let frame = match decode_frame(line) {
        Ok(frame) => frame,
        Err(err) => return Some(vec![err.to_frame()]),
    };
    match frame.command() {
        None => Some(vec![Frame::error(
            "unexpected_frame",
            format!("{} frames are sent by the device, not to it", frame.type_name()),
        )]),
        Some(CommandName::Subscribe) if feed.is_some() => Some(vec![Frame::Ack {
            of: CommandName::Subscribe,
        }]),
        Some(CommandName::Subscribe) => {
            let (replies, rx) = device.subscribe().await.ok()?;
            *feed = Some(rx);
            Some(replies)
        }
        Some(_) => device.command(frame).await.ok(),
    }
}
