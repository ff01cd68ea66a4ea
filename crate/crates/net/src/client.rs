//! Cursor client: connects to `/cursor`, applies commands to a virtual
//! cursor and reconnects with backoff when the link breaks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use airhmi_core::client::{ApplyOutcome, Backoff, CursorSnapshot, CursorState, LogEntry};
use airhmi_core::protocol::{self, encode, Hello, Message};
use airhmi_core::stabilizer::ScreenGeometry;
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_util::sync::CancellationToken;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("event log {path}: {source}")]
    Log { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    /// `ws://host:port/cursor`
    pub url: String,
    pub screen: ScreenGeometry,
    pub name: String,
    /// JSONL event log, one applied command per line.
    pub log_path: Option<PathBuf>,
    /// Keep applied commands in memory (returned in the report).
    pub keep_log: bool,
    pub backoff: Backoff,
    /// Receives every applied command as it happens.
    pub observer: Option<mpsc::UnboundedSender<Applied>>,
}

impl ClientOptions {
    pub fn new(url: impl Into<String>, screen: ScreenGeometry) -> Self {
        Self {
            url: url.into(),
            screen,
            name: "airhmi-client".into(),
            log_path: None,
            keep_log: true,
            backoff: Backoff::default(),
            observer: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Applied {
    pub entry: LogEntry,
    pub outcome: ApplyOutcome,
    pub at: Instant,
    /// 1 for the first connection, incremented on every reconnect.
    pub connection: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClientStatus {
    pub cursor: CursorSnapshot,
    pub decode_errors: u64,
    pub stale: u64,
    pub connections: u64,
}

#[derive(Debug, Clone)]
pub struct ClientReport {
    pub state: CursorState,
    pub status: ClientStatus,
}

pub struct ClientHandle {
    status: watch::Receiver<ClientStatus>,
    shutdown: CancellationToken,
    join: JoinHandle<Result<ClientReport, ClientError>>,
}

/// Runs a client on the current runtime.
pub fn spawn_client(opts: ClientOptions) -> ClientHandle {
    let shutdown = CancellationToken::new();
    let (tx, status) = watch::channel(ClientStatus::default());
    let join = tokio::spawn(run_client_with(opts, shutdown.clone(), tx));
    ClientHandle { status, shutdown, join }
}

impl ClientHandle {
    pub fn status(&self) -> ClientStatus {
        *self.status.borrow()
    }

    pub fn subscribe(&self) -> watch::Receiver<ClientStatus> {
        self.status.clone()
    }

    /// Waits until `pred` holds for the published status, up to `timeout`.
    /// Returns the status that satisfied it.
    pub async fn wait_for(
        &self,
        timeout: Duration,
        mut pred: impl FnMut(&ClientStatus) -> bool,
    ) -> Option<ClientStatus> {
        let mut rx = self.status.clone();
        let res = tokio::time::timeout(timeout, rx.wait_for(|s| pred(s))).await;
        match res {
            Ok(Ok(s)) => Some(*s),
            _ => None,
        }
    }

    /// Closes the connection, flushes the log and returns the final state.
    pub async fn shutdown(self) -> Result<ClientReport, ClientError> {
        self.shutdown.cancel();
        self.join.await.expect("client task panicked")
    }
}

/// Runs until `shutdown` is cancelled.
pub async fn run_client(opts: ClientOptions, shutdown: CancellationToken) -> Result<ClientReport, ClientError> {
    let (tx, _rx) = watch::channel(ClientStatus::default());
    run_client_with(opts, shutdown, tx).await
}

struct Session {
    state: CursorState,
    status: ClientStatus,
    log: Option<BufWriter<File>>,
    log_path: Option<PathBuf>,
    epoch: Instant,
    observer: Option<mpsc::UnboundedSender<Applied>>,
    publish: watch::Sender<ClientStatus>,
}

impl Session {
    fn publish(&mut self) {
        self.status.cursor = self.state.snapshot();
        self.publish.send_replace(self.status);
    }

    fn log_err(&self, source: std::io::Error) -> ClientError {
        ClientError::Log { path: self.log_path.clone().unwrap_or_default(), source }
    }

    fn receive(&mut self, text: &str) -> Result<(), ClientError> {
        let msg = match protocol::decode(text) {
            Ok(Message::Command(c)) => c,
            Ok(other) => {
                tracing::warn!(kind = ?other, "ignoring non-command message");
                return Ok(());
            }
            Err(e) => {
                tracing::warn!(error = %e, "undecodable message skipped");
                self.status.decode_errors += 1;
                self.publish();
                return Ok(());
            }
        };
        let at = Instant::now();
        let now_us = at.duration_since(self.epoch).as_micros() as u64;
        let (outcome, entry) = self.state.apply_command(msg, now_us);
        if outcome == ApplyOutcome::Stale {
            self.status.stale += 1;
        }
        if let Some(entry) = entry {
            if let Some(log) = &mut self.log {
                writeln!(log, "{}", entry.to_json_line()).map_err(|e| self.log_err(e))?;
            }
            if let Some(obs) = &self.observer {
                let _ = obs.send(Applied { entry, outcome, at, connection: self.status.connections });
            }
        }
        self.publish();
        Ok(())
    }

    fn flush(&mut self) -> Result<(), ClientError> {
        if let Some(log) = &mut self.log {
            log.flush().map_err(|e| self.log_err(e))?;
        }
        Ok(())
    }
}

async fn run_client_with(
    opts: ClientOptions,
    shutdown: CancellationToken,
    publish: watch::Sender<ClientStatus>,
) -> Result<ClientReport, ClientError> {
    let log = match &opts.log_path {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|source| ClientError::Log { path: path.clone(), source })?,
        )),
        None => None,
    };
    let mut state = CursorState::new(opts.screen);
    if !opts.keep_log {
        state = state.without_log();
    }
    let mut s = Session {
        state,
        status: ClientStatus::default(),
        log,
        log_path: opts.log_path.clone(),
        epoch: Instant::now(),
        observer: opts.observer.clone(),
        publish,
    };
    s.publish();
    let mut backoff = opts.backoff.clone();
    let hello = encode(&Message::Hello(Hello::client(opts.name.clone()))).expect("hello encodes");

    'outer: loop {
        let conn = tokio::select! {
            c = tokio_tungstenite::connect_async(opts.url.as_str()) => c,
            _ = shutdown.cancelled() => break,
        };
        let mut ws = match conn {
            Ok((ws, _)) => ws,
            Err(e) => {
                let delay = backoff.next_delay();
                tracing::debug!(error = %e, ?delay, "connect failed, retrying");
                tokio::select! {
                    _ = tokio::time::sleep(delay) => continue,
                    _ = shutdown.cancelled() => break,
                }
            }
        };
        backoff.reset();
        s.state.on_connect();
        s.status.connections += 1;
        s.publish();
        tracing::info!(url = %opts.url, "connected");
        if ws.send(WsMessage::text(hello.clone())).await.is_ok() {
            loop {
                let msg = tokio::select! {
                    m = ws.next() => m,
                    _ = shutdown.cancelled() => {
                        let _ = ws.close(None).await;
                        s.state.on_disconnect();
                        break 'outer;
                    }
                };
                match msg {
                    Some(Ok(WsMessage::Text(t))) => s.receive(t.as_str())?,
                    Some(Ok(WsMessage::Binary(b))) => match std::str::from_utf8(&b) {
                        Ok(t) => s.receive(t)?,
                        Err(_) => s.status.decode_errors += 1,
                    },
                    Some(Ok(WsMessage::Close(_))) | None => break,
                    Some(Err(e)) => {
                        tracing::warn!(error = %e, "connection error");
                        break;
                    }
                    Some(Ok(_)) => {}
                }
            }
        }
        // Freeze where we are and try again.
        s.state.on_disconnect();
        s.publish();
        s.flush()?;
        tracing::info!("disconnected, cursor frozen");
        let delay = backoff.next_delay();
        tokio::select! {
            _ = tokio::time::sleep(delay) => {}
            _ = shutdown.cancelled() => break,
        }
    }
    s.publish();
    s.flush()?;
    Ok(ClientReport { state: s.state, status: s.status })
}
