//! WebSocket server: frames in on `/feed` (or from a file source), commands
//! out on `/cursor`.
//!
//! Three contexts: ingest (feed sockets or the file source) pushes frames
//! into one bounded channel; a single process task owns the pipeline and
//! broadcasts commands into per-client queues; each client has a sender
//! task that drains its queue through the optional link simulator.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use airhmi_core::fanout::Fanout;
use airhmi_core::metrics::{MetricsSnapshot, PipelineMetrics};
use airhmi_core::model::HandFrame;
use airhmi_core::pipeline::{Pipeline, SyncStatus};
use airhmi_core::protocol::{self, encode_command, CommandMessage, Delivery, LinkParams, LinkSim, Message};
use airhmi_core::recognizer::GestureEvent;
use airhmi_core::stabilizer::StabilizerError;
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch, Notify};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::WebSocketStream;
use tokio_util::sync::CancellationToken;
use tokio_util::task::TaskTracker;

use crate::config::{ConfigError, ServerConfig};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] StabilizerError),
    #[error("metrics output {path}: {source}")]
    Metrics { path: PathBuf, source: std::io::Error },
}

/// How frames reach the pipeline.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// Frames arrive on `/feed`.
    Live,
    /// A fixed frame sequence, replayed once.
    Frames {
        frames: Vec<HandFrame>,
        /// Pace frames by their timestamps; otherwise push them as fast as
        /// the pipeline accepts them.
        realtime: bool,
        /// Hold the first frame until this many `/cursor` clients are
        /// registered.
        wait_for_clients: usize,
    },
}

/// What the process task did with one frame. Sent to an optional tap for
/// measurement.
#[derive(Debug, Clone)]
pub struct TapRecord {
    pub ts_us: u64,
    /// When the frame entered the ingest queue.
    pub ingest: Instant,
    /// When its commands were in every client queue.
    pub enqueued: Instant,
    pub events: Vec<GestureEvent>,
    pub sent: Vec<CommandMessage>,
}

struct Ingest {
    frame: HandFrame,
    at: Instant,
}

struct Hub {
    fanout: Fanout<u64>,
    wakers: BTreeMap<u64, Arc<Notify>>,
    status: SyncStatus,
    last_ts_us: u64,
}

struct Shared {
    epoch: Instant,
    hub: Mutex<Hub>,
    metrics: Mutex<PipelineMetrics>,
    latest: Mutex<MetricsSnapshot>,
    live: bool,
    link: Option<LinkParams>,
    outage: Option<(u64, u64)>,
    next_client: AtomicU64,
    max_queue_depth: AtomicUsize,
    registered: watch::Sender<usize>,
    ingest: mpsc::Sender<Ingest>,
    shutdown: CancellationToken,
    /// Cancelled once the process task has handled every frame it will
    /// ever see; senders then flush and close.
    drained: CancellationToken,
}

impl Shared {
    fn now_us(&self) -> u64 {
        self.epoch.elapsed().as_micros() as u64
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    tracker: TaskTracker,
    source_done: watch::Receiver<bool>,
    metrics_task: tokio::task::JoinHandle<Result<(), ServerError>>,
    metrics_path: Option<PathBuf>,
}

/// Loads the configured source and starts serving.
pub async fn serve(cfg: ServerConfig) -> Result<ServerHandle, ServerError> {
    let source = match cfg.load_frames()? {
        None => FrameSource::Live,
        Some(frames) => {
            let (realtime, wait_for_clients) = cfg.pacing();
            FrameSource::Frames { frames, realtime, wait_for_clients }
        }
    };
    serve_with(cfg, source, None).await
}

/// Starts a server with an explicit frame source and an optional tap that
/// receives one record per processed frame.
pub async fn serve_with(
    cfg: ServerConfig,
    source: FrameSource,
    tap: Option<mpsc::UnboundedSender<TapRecord>>,
) -> Result<ServerHandle, ServerError> {
    cfg.validate()?;
    let pipeline = Pipeline::new(cfg.pipeline())?;
    let listener = TcpListener::bind(cfg.listen)
        .await
        .map_err(|source| ServerError::BindFailure { addr: cfg.listen, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServerError::BindFailure { addr: cfg.listen, source })?;

    let metrics_file = match &cfg.metrics_path {
        Some(path) => Some(
            tokio::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .await
                .map_err(|source| ServerError::Metrics { path: path.clone(), source })?,
        ),
        None => None,
    };

    let (ingest_tx, ingest_rx) = mpsc::channel(cfg.queue.ingest);
    let (registered, _) = watch::channel(0usize);
    let shared = Arc::new(Shared {
        epoch: Instant::now(),
        hub: Mutex::new(Hub {
            fanout: Fanout::new(cfg.queue.capacity, cfg.queue.move_budget),
            wakers: BTreeMap::new(),
            status: SyncStatus::default(),
            last_ts_us: 0,
        }),
        metrics: Mutex::new(PipelineMetrics::default()),
        latest: Mutex::new(MetricsSnapshot::default()),
        live: matches!(source, FrameSource::Live),
        // An outage alone still needs a simulated link to act on.
        link: cfg.link.or(cfg.link_outage.map(|_| LinkParams::default())),
        outage: cfg.link_outage.map(|o| (o.start_ms * 1000, o.end_ms * 1000)),
        next_client: AtomicU64::new(1),
        max_queue_depth: AtomicUsize::new(0),
        registered,
        ingest: ingest_tx,
        shutdown: CancellationToken::new(),
        drained: CancellationToken::new(),
    });

    let tracker = TaskTracker::new();
    tracker.spawn(process_loop(shared.clone(), pipeline, ingest_rx, tap));
    let (done_tx, source_done) = watch::channel(false);
    match source {
        FrameSource::Live => {
            let _ = done_tx.send(true);
        }
        FrameSource::Frames { frames, realtime, wait_for_clients } => {
            tracker.spawn(file_source(shared.clone(), frames, realtime, wait_for_clients, done_tx));
        }
    }
    tracker.spawn(accept_loop(shared.clone(), listener, tracker.clone()));
    let metrics_task = tokio::spawn(metrics_loop(shared.clone(), metrics_file, cfg.metrics_path.clone()));
    tracing::info!(%addr, "server listening");

    Ok(ServerHandle { addr, shared, tracker, source_done, metrics_task, metrics_path: cfg.metrics_path })
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Zero of the server clock, which link outages are expressed in.
    pub fn epoch(&self) -> Instant {
        self.shared.epoch
    }

    pub fn cursor_url(&self) -> String {
        format!("ws://{}/cursor", self.addr)
    }

    pub fn feed_url(&self) -> String {
        format!("ws://{}/feed", self.addr)
    }

    /// Latest once-per-second metrics snapshot.
    pub fn metrics(&self) -> MetricsSnapshot {
        *self.shared.latest.lock().expect("metrics lock")
    }

    /// A fresh snapshot taken now.
    pub fn collect_metrics(&self) -> MetricsSnapshot {
        let now = self.shared.now_us();
        self.shared.metrics.lock().expect("metrics lock").snapshot(now)
    }

    /// Clients currently registered on `/cursor`.
    pub fn client_count(&self) -> usize {
        *self.shared.registered.borrow()
    }

    /// Deepest any client queue has been.
    pub fn max_queue_depth(&self) -> usize {
        self.shared.max_queue_depth.load(Ordering::Relaxed)
    }

    /// Current hold flag and last emitted pixel.
    pub fn sync_status(&self) -> SyncStatus {
        self.shared.hub.lock().expect("hub lock").status
    }

    /// Waits until `n` clients are registered.
    pub async fn wait_for_clients(&self, n: usize) {
        let mut rx = self.shared.registered.subscribe();
        let _ = rx.wait_for(|&c| c >= n).await;
    }

    /// Resolves once a file source has pushed its last frame. Resolves
    /// immediately for a live source.
    pub async fn source_finished(&self) {
        let mut rx = self.source_done.clone();
        let _ = rx.wait_for(|&d| d).await;
    }

    /// Resolves once the process task has emptied the ingest queue.
    pub async fn wait_idle(&self) {
        while self.shared.ingest.capacity() < self.shared.ingest.max_capacity() {
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        // The last frame may still be inside the process task.
        tokio::time::sleep(Duration::from_millis(5)).await;
    }

    /// Stops accepting input, processes frames already queued, flushes
    /// every client queue, closes connections and writes a final metrics
    /// line. Returns the final snapshot.
    pub async fn shutdown(self) -> Result<MetricsSnapshot, ServerError> {
        self.shared.shutdown.cancel();
        self.tracker.close();
        self.tracker.wait().await;
        let res = self.metrics_task.await.unwrap_or(Ok(()));
        let snap = *self.shared.latest.lock().expect("metrics lock");
        tracing::info!(metrics = %snap.to_json_line(), path = ?self.metrics_path, "server stopped");
        res.map(|()| snap)
    }
}

async fn process_loop(
    shared: Arc<Shared>,
    mut pipeline: Pipeline,
    mut rx: mpsc::Receiver<Ingest>,
    tap: Option<mpsc::UnboundedSender<TapRecord>>,
) {
    let mut handle = |ing: Ingest| {
        let now_us = shared.now_us();
        let out = match pipeline.process(ing.frame) {
            Ok(out) => out,
            Err(e) => {
                tracing::warn!(error = %e, "frame rejected");
                let mut m = shared.metrics.lock().expect("metrics lock");
                m.record_frame(now_us);
                m.record_rejected();
                return;
            }
        };
        let mut sent = Vec::with_capacity(out.commands.len());
        {
            let mut hub = shared.hub.lock().expect("hub lock");
            let hub = &mut *hub;
            for &c in &out.commands {
                let report = hub.fanout.broadcast(c, out.ts_us);
                for id in &report.dropped {
                    tracing::warn!(client = id, "client queue overflow, dropping client");
                    if let Some(w) = hub.wakers.remove(id) {
                        w.notify_one();
                    }
                }
                sent.push(report.msg);
            }
            hub.status = pipeline.status();
            hub.last_ts_us = out.ts_us;
            if !sent.is_empty() {
                let mut depth = 0;
                for (id, w) in &hub.wakers {
                    depth = depth.max(hub.fanout.queue(id).map_or(0, |q| q.len()));
                    w.notify_one();
                }
                shared.max_queue_depth.fetch_max(depth, Ordering::Relaxed);
            }
        }
        let enqueued = Instant::now();
        {
            let mut m = shared.metrics.lock().expect("metrics lock");
            m.record_frame(now_us);
            m.record_events(out.events.len());
            m.record_commands(sent.len());
            if !sent.is_empty() {
                m.record_latency(enqueued.duration_since(ing.at).as_micros() as u64);
            }
        }
        if let Some(tap) = &tap {
            let _ = tap.send(TapRecord { ts_us: out.ts_us, ingest: ing.at, enqueued, events: out.events, sent });
        }
    };

    loop {
        tokio::select! {
            biased;
            m = rx.recv() => match m {
                Some(ing) => handle(ing),
                None => break,
            },
            _ = shared.shutdown.cancelled() => break,
        }
    }
    while let Ok(ing) = rx.try_recv() {
        handle(ing);
    }
    shared.drained.cancel();
}

async fn file_source(
    shared: Arc<Shared>,
    frames: Vec<HandFrame>,
    realtime: bool,
    wait_for_clients: usize,
    done: watch::Sender<bool>,
) {
    let mut registered = shared.registered.subscribe();
    tokio::select! {
        _ = registered.wait_for(|&c| c >= wait_for_clients) => {}
        _ = shared.shutdown.cancelled() => return,
    }
    let start = tokio::time::Instant::now();
    let ts0 = frames.first().map_or(0, |f| f.ts_us);
    for frame in frames {
        if realtime {
            let due = start + Duration::from_micros(frame.ts_us.saturating_sub(ts0));
            tokio::select! {
                _ = tokio::time::sleep_until(due) => {}
                _ = shared.shutdown.cancelled() => return,
            }
        }
        let ing = Ingest { frame, at: Instant::now() };
        tokio::select! {
            r = shared.ingest.send(ing) => if r.is_err() { return },
            _ = shared.shutdown.cancelled() => return,
        }
    }
    let _ = done.send(true);
}

async fn metrics_loop(
    shared: Arc<Shared>,
    mut file: Option<tokio::fs::File>,
    path: Option<PathBuf>,
) -> Result<(), ServerError> {
    let mut tick = tokio::time::interval(Duration::from_secs(1));
    tick.tick().await;
    let io_err = |source| ServerError::Metrics { path: path.clone().unwrap_or_default(), source };
    loop {
        let stop = tokio::select! {
            _ = tick.tick() => false,
            _ = shared.shutdown.cancelled() => true,
        };
        if stop {
            // Let the process task finish its backlog so the last line
            // counts every frame.
            shared.drained.cancelled().await;
        }
        let snap = {
            let now = shared.now_us();
            shared.metrics.lock().expect("metrics lock").snapshot(now)
        };
        *shared.latest.lock().expect("metrics lock") = snap;
        if let Some(f) = &mut file {
            let line = snap.to_json_line() + "\n";
            f.write_all(line.as_bytes()).await.map_err(io_err)?;
            f.flush().await.map_err(io_err)?;
        }
        if stop {
            return Ok(());
        }
    }
}

async fn accept_loop(shared: Arc<Shared>, listener: TcpListener, tracker: TaskTracker) {
    loop {
        tokio::select! {
            r = listener.accept() => match r {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    tracker.spawn(connection(shared.clone(), stream, peer));
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
            _ = shared.shutdown.cancelled() => return,
        }
    }
}

#[derive(Clone, Copy)]
enum Endpoint {
    Feed,
    Cursor,
}

fn reject(status: StatusCode, why: &str) -> ErrorResponse {
    let mut resp = ErrorResponse::new(Some(why.to_string()));
    *resp.status_mut() = status;
    resp
}

async fn connection(shared: Arc<Shared>, stream: TcpStream, peer: SocketAddr) {
    let mut endpoint = None;
    let live = shared.live;
    #[allow(clippy::result_large_err)]
    let callback = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        match req.uri().path() {
            "/cursor" => endpoint = Some(Endpoint::Cursor),
            "/feed" if live => endpoint = Some(Endpoint::Feed),
            "/feed" => return Err(reject(StatusCode::CONFLICT, "server is replaying a file source")),
            _ => return Err(reject(StatusCode::NOT_FOUND, "unknown endpoint")),
        }
        Ok(resp)
    };
    let ws = match tokio_tungstenite::accept_hdr_async(stream, callback).await {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!(%peer, error = %e, "handshake failed");
            return;
        }
    };
    match endpoint {
        Some(Endpoint::Feed) => feed_session(shared, ws, peer).await,
        Some(Endpoint::Cursor) => cursor_session(shared, ws, peer).await,
        None => {}
    }
}

async fn feed_session(shared: Arc<Shared>, mut ws: WebSocketStream<TcpStream>, peer: SocketAddr) {
    tracing::info!(%peer, "feed connected");
    loop {
        let msg = tokio::select! {
            m = ws.next() => m,
            _ = shared.shutdown.cancelled() => break,
        };
        let decoded = match msg {
            Some(Ok(WsMessage::Text(t))) => protocol::decode(t.as_str()),
            Some(Ok(WsMessage::Binary(b))) => protocol::decode_bytes(&b),
            Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        };
        match decoded {
            Ok(Message::Frame(frame)) => {
                if shared.ingest.try_send(Ingest { frame, at: Instant::now() }).is_err() {
                    tracing::warn!(%peer, "ingest queue full, frame dropped");
                    shared.metrics.lock().expect("metrics lock").record_rejected();
                }
            }
            Ok(Message::Hello(_)) => {}
            Ok(other) => tracing::warn!(%peer, kind = ?other, "unexpected message on /feed"),
            Err(e) => tracing::warn!(%peer, error = %e, "undecodable feed message"),
        }
    }
    let _ = ws.close(None).await;
    tracing::info!(%peer, "feed closed");
}

/// Registers client `id` and queues its resync ahead of any live command.
fn register(shared: &Shared, id: u64, waker: Arc<Notify>) {
    let mut hub = shared.hub.lock().expect("hub lock");
    hub.fanout.add_client(id);
    let (status, ts) = (hub.status, hub.last_ts_us);
    hub.fanout.resync(&id, status, ts);
    hub.wakers.insert(id, waker.clone());
    waker.notify_one();
    shared.registered.send_modify(|c| *c += 1);
}

fn unregister(shared: &Shared, id: u64) {
    let mut hub = shared.hub.lock().expect("hub lock");
    hub.fanout.remove_client(&id);
    hub.wakers.remove(&id);
    shared.registered.send_modify(|c| *c -= 1);
}

const HELLO_WAIT: Duration = Duration::from_secs(1);

async fn cursor_session(shared: Arc<Shared>, ws: WebSocketStream<TcpStream>, peer: SocketAddr) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = ws.split();

    // Clients announce themselves; one that stays silent is registered
    // anyway after a short wait.
    let first = tokio::select! {
        m = tokio::time::timeout(HELLO_WAIT, stream.next()) => m,
        _ = shared.shutdown.cancelled() => return,
    };
    match first {
        Ok(Some(Ok(WsMessage::Text(t)))) => match protocol::decode(t.as_str()) {
            Ok(Message::Hello(h)) => tracing::info!(%peer, client = id, name = %h.name, role = %h.role, "hello"),
            Ok(_) | Err(_) => tracing::warn!(%peer, client = id, "expected hello"),
        },
        Ok(None) | Ok(Some(Err(_))) | Ok(Some(Ok(WsMessage::Close(_)))) => return,
        Ok(Some(Ok(_))) | Err(_) => {}
    }

    let waker = Arc::new(Notify::new());
    register(&shared, id, waker.clone());

    let closed = CancellationToken::new();
    let reader = {
        let closed = closed.clone();
        tokio::spawn(async move {
            while let Some(Ok(m)) = stream.next().await {
                if matches!(m, WsMessage::Close(_)) {
                    break;
                }
            }
            closed.cancel();
        })
    };

    let (line_tx, mut line_rx) = mpsc::channel::<(tokio::time::Instant, String)>(1024);
    let writer = tokio::spawn(async move {
        while let Some((at, text)) = line_rx.recv().await {
            tokio::time::sleep_until(at).await;
            sink.send(WsMessage::text(text)).await?;
        }
        let _ = sink
            .send(WsMessage::Close(Some(CloseFrame { code: CloseCode::Normal, reason: "server shutdown".into() })))
            .await;
        let _ = sink.close().await;
        Ok::<(), tokio_tungstenite::tungstenite::Error>(())
    });

    let mut link = shared.link.map(|p| {
        let p = LinkParams { seed: p.seed.wrapping_add(id), ..p };
        let mut l = LinkSim::new(p).expect("validated with the config");
        if let Some((a, b)) = shared.outage {
            l = l.with_outage(a, b);
        }
        l
    });
    let epoch = tokio::time::Instant::from_std(shared.epoch);

    let reason = loop {
        let next = {
            let mut hub = shared.hub.lock().expect("hub lock");
            if hub.fanout.queue(&id).is_none() {
                break "queue overflow";
            }
            hub.fanout.pop(&id)
        };
        let Some(msg) = next else {
            if shared.drained.is_cancelled() {
                break "server shutdown";
            }
            tokio::select! {
                _ = waker.notified() => {}
                _ = shared.drained.cancelled() => {}
                _ = closed.cancelled() => break "client closed",
                _ = line_tx.closed() => break "write failed",
            }
            continue;
        };
        let text = match encode_command(&msg) {
            Ok(t) => t,
            Err(e) => {
                tracing::error!(error = %e, "unencodable command skipped");
                continue;
            }
        };
        let (deliver_at, tx_done) = match &mut link {
            None => (tokio::time::Instant::now(), None),
            Some(l) => match l.transmit(text.len(), shared.now_us()) {
                Delivery::Dropped => continue,
                Delivery::Deliver { tx_done_us, deliver_at_us } => (
                    epoch + Duration::from_micros(deliver_at_us),
                    Some(epoch + Duration::from_micros(tx_done_us)),
                ),
            },
        };
        if line_tx.send((deliver_at, text)).await.is_err() {
            break "write failed";
        }
        // The link is busy until the message is on the wire; later commands
        // wait in the coalescing queue meanwhile.
        if let Some(t) = tx_done {
            tokio::select! {
                _ = tokio::time::sleep_until(t) => {}
                _ = closed.cancelled() => break "client closed",
            }
        }
    };
    unregister(&shared, id);
    drop(line_tx);
    match reason {
        "server shutdown" => {
            let _ = tokio::time::timeout(Duration::from_secs(5), writer).await;
        }
        _ => writer.abort(),
    }
    reader.abort();
    tracing::info!(%peer, client = id, reason, "cursor client disconnected");
}
