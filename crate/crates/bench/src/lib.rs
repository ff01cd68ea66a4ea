//! End-to-end scenarios: synthetic source, server, optional simulated link,
//! cursor clients. Everything runs in one process so ingest and apply are
//! timestamped on the same monotonic clock.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use airhmi_core::pipeline::{Pipeline, PipelineConfig};
use airhmi_core::protocol::{encode_command, Command, CommandMessage, LinkParams};
use airhmi_core::recognizer::ScrollDirection;
use airhmi_core::synth::{self, Label, LabelKind, Segment, TrajectoryScript};
use airhmi_net::config::{OutageConfig, QueueConfig};
use airhmi_net::{serve_with, spawn_client, Applied, ClientOptions, FrameSource, ServerConfig, TapRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

/// Fastest frame rate the generator is asked to produce.
pub const MAX_FPS: f64 = 1000.0;

pub const MEASUREMENT_NOTE: &str =
    "single host, one monotonic clock: frame ingest to client apply over loopback WebSocket plus simulated link";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),
    #[error("invalid scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Server(#[from] airhmi_net::ServerError),
    #[error(transparent)]
    Client(#[from] airhmi_net::client::ClientError),
}

/// Which checks a scenario is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Criteria {
    pub p95_latency_us: Option<u64>,
    pub min_input_fps: Option<f64>,
    /// Every labeled click, hold, release and scroll notch reaches every
    /// client exactly once.
    pub events: bool,
    pub bounded_queues: bool,
    pub in_order: bool,
    pub zero_decode_errors: bool,
    /// Client trace is (prefix, constant through the outage, suffix).
    pub freeze_jump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub fps: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub clients: usize,
    #[serde(default)]
    pub link: Option<LinkParams>,
    /// `[start, end)` on the server clock, milliseconds.
    #[serde(default)]
    pub outage_ms: Option<(u64, u64)>,
    /// Caps link bandwidth at this fraction of what the script needs when
    /// nothing is coalesced.
    #[serde(default)]
    pub bandwidth_fraction: Option<f64>,
    #[serde(default)]
    pub criteria: Criteria,
    pub script: TrajectoryScript,
}

fn one() -> usize {
    1
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("clean_120fps", include_str!("../scenarios/clean_120fps.json")),
    ("burst_300fps", include_str!("../scenarios/burst_300fps.json")),
    ("dropout_2s", include_str!("../scenarios/dropout_2s.json")),
    ("bandwidth_10pct", include_str!("../scenarios/bandwidth_10pct.json")),
    ("delay_50ms", include_str!("../scenarios/delay_50ms.json")),
];

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(text)?)
    }

    /// A bundled scenario by name, or a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self, BenchError> {
        if let Some(s) = bundled(name_or_path) {
            return Ok(s);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|source| BenchError::Io { path: name_or_path.into(), source })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), BenchError> {
        if !(self.fps > 0.0 && self.fps <= MAX_FPS) {
            return Err(BenchError::ScenarioInfeasible(format!("fps {} outside (0, {MAX_FPS}]", self.fps)));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(BenchError::ScenarioInfeasible("duration must be positive".into()));
        }
        if self.clients == 0 {
            return Err(BenchError::ScenarioInfeasible("at least one client is needed".into()));
        }
        if let Some(f) = self.bandwidth_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(BenchError::ScenarioInfeasible(format!("bandwidth_fraction {f} outside (0, 1]")));
            }
        }
        if let Some((a, b)) = self.outage_ms {
            if b <= a {
                return Err(BenchError::ScenarioInfeasible("outage must end after it starts".into()));
            }
        }
        Ok(())
    }
}

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text).expect("bundled scenarios parse"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventCounts {
    pub clicks: u64,
    pub holds: u64,
    pub releases: u64,
    pub scroll_up: u64,
    pub scroll_down: u64,
}

impl EventCounts {
    pub fn from_labels(labels: &[Label]) -> Self {
        let mut c = Self::default();
        for l in labels {
            match l.kind {
                LabelKind::Click => c.clicks += 1,
                LabelKind::HoldStart => c.holds += 1,
                LabelKind::HoldEnd => c.releases += 1,
                LabelKind::Scroll { direction: ScrollDirection::Up } => c.scroll_up += 1,
                LabelKind::Scroll { direction: ScrollDirection::Down } => c.scroll_down += 1,
            }
        }
        c
    }

    pub fn add(&mut self, cmd: &Command) {
        match *cmd {
            Command::Move { .. } => {}
            Command::Click { .. } => self.clicks += 1,
            Command::Hold => self.holds += 1,
            Command::Release => self.releases += 1,
            Command::Scroll { dir: ScrollDirection::Up, n } => self.scroll_up += u64::from(n),
            Command::Scroll { dir: ScrollDirection::Down, n } => self.scroll_down += u64::from(n),
        }
    }

    pub fn of_commands<'a>(cmds: impl IntoIterator<Item = &'a Command>) -> Self {
        let mut c = Self::default();
        for cmd in cmds {
            c.add(cmd);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LatencySummary {
    pub samples: usize,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

impl LatencySummary {
    /// Nearest-rank percentiles.
    pub fn from_samples(mut v: Vec<u64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_unstable();
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self { samples: v.len(), p50_us: rank(0.50), p95_us: rank(0.95), p99_us: rank(0.99), max_us: v[v.len() - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientResult {
    pub applied: u64,
    pub events_observed: EventCounts,
    pub decode_errors: u64,
    pub stale: u64,
    pub connections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub input_fps: f64,
    pub duration_s: f64,
    pub frames: usize,
    pub measured_input_fps: f64,
    pub measurement: &'static str,
    /// Frame ingest to client apply, over every applied command.
    pub latency: LatencySummary,
    /// Frame ingest to command enqueue inside the server.
    pub server_latency: LatencySummary,
    pub events_expected: EventCounts,
    pub events_sent: EventCounts,
    pub commands_sent: usize,
    pub clients: Vec<ClientResult>,
    pub queue_depth_max: usize,
    pub queue_capacity: usize,
    pub link: Option<LinkParams>,
    pub outage_ms: Option<(u64, u64)>,
    /// Encoded bytes per second the script needs with no coalescing.
    pub demand_bps: u64,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

impl BenchReport {
    pub fn criterion(&self, name: &str) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

/// Bytes per second of encoded commands the pipeline emits for `frames`,
/// with every move sent.
pub fn offline_demand_bps(cfg: PipelineConfig, frames: &[airhmi_core::model::HandFrame]) -> u64 {
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return 0;
    };
    let mut p = Pipeline::new(cfg).expect("validated config");
    let mut bytes = 0usize;
    let mut seq = 0;
    for f in frames {
        let Ok(out) = p.process(f.clone()) else { continue };
        for command in out.commands {
            seq += 1;
            let m = CommandMessage { command, seq, ts_us: out.ts_us };
            bytes += encode_command(&m).map_or(0, |t| t.len());
        }
    }
    let span_s = (last.ts_us - first.ts_us).max(1) as f64 * 1e-6;
    (bytes as f64 / span_s).ceil() as u64
}

struct Sent {
    msg: CommandMessage,
    ingest: Instant,
    enqueued: Instant,
}

fn render(sc: &Scenario) -> Result<synth::LabeledStream, BenchError> {
    let mut script = sc.script.clone();
    script.frame_rate = sc.fps;
    let infeasible = |e: synth::SynthError| BenchError::ScenarioInfeasible(e.to_string());
    let stream = synth::generate(&script, sc.seed).map_err(infeasible)?;
    let span_s = stream.frames.last().map_or(0, |f| f.ts_us) as f64 * 1e-6;
    if span_s + 0.5 / sc.fps < sc.duration_s {
        script.segments.push(Segment::Dwell { duration_s: sc.duration_s - span_s });
        return synth::generate(&script, sc.seed).map_err(infeasible);
    }
    Ok(stream)
}

/// Runs one scenario end to end and judges it.
pub async fn run_bench(sc: &Scenario) -> Result<BenchReport, BenchError> {
    sc.check()?;
    let stream = render(sc)?;
    let frames = stream.frames;
    let duration_s = frames.last().map_or(0, |f| f.ts_us) as f64 * 1e-6;

    let mut cfg = ServerConfig {
        listen: "127.0.0.1:0".parse().expect("literal address"),
        link: sc.link,
        link_outage: sc.outage_ms.map(|(start_ms, end_ms)| OutageConfig { start_ms, end_ms }),
        queue: QueueConfig::default(),
        ..ServerConfig::default()
    };
    let demand_bps = offline_demand_bps(cfg.pipeline(), &frames);
    if let Some(frac) = sc.bandwidth_fraction {
        let cap = ((demand_bps as f64 * frac).ceil() as u64).max(1);
        cfg.link = Some(LinkParams { bandwidth_bps: cap, ..cfg.link.unwrap_or_default() });
    }
    let link = cfg.link;
    let queue_capacity = cfg.queue.capacity;
    let screen = cfg.screen;

    let (tap_tx, mut tap_rx) = mpsc::unbounded_channel();
    let source = FrameSource::Frames { frames: frames.clone(), realtime: true, wait_for_clients: sc.clients };
    let server = serve_with(cfg, source, Some(tap_tx)).await?;
    let epoch = server.epoch();

    let mut clients = Vec::new();
    for i in 0..sc.clients {
        let (obs_tx, obs_rx) = mpsc::unbounded_channel();
        let mut opts = ClientOptions::new(server.cursor_url(), screen);
        opts.name = format!("bench-{i}");
        opts.observer = Some(obs_tx);
        clients.push((spawn_client(opts), obs_rx));
    }

    server.source_finished().await;
    server.wait_idle().await;
    let mut taps: Vec<TapRecord> = Vec::new();
    while let Ok(t) = tap_rx.try_recv() {
        taps.push(t);
    }
    let last_seq = taps.iter().flat_map(|t| t.sent.iter().map(|m| m.seq)).max();

    // Wait for every client to get the newest command, or to go quiet when
    // the link may have lost it.
    let quiet = Duration::from_millis(750) + link.map_or(Duration::ZERO, |l| Duration::from_secs_f64((l.delay_ms + l.jitter_ms) * 1e-3));
    for (c, _) in &clients {
        let deadline = Instant::now() + Duration::from_secs(30);
        let mut seen = c.status().cursor.applied;
        let mut since = Instant::now();
        loop {
            let st = c.status();
            if last_seq.is_none() || st.cursor.last_seq >= last_seq || Instant::now() > deadline {
                break;
            }
            if st.cursor.applied != seen {
                seen = st.cursor.applied;
                since = Instant::now();
            } else if since.elapsed() > quiet {
                break;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    let mut results = Vec::new();
    for (c, mut obs) in clients {
        let report = c.shutdown().await?;
        let mut applied = Vec::new();
        while let Ok(a) = obs.try_recv() {
            applied.push(a);
        }
        results.push((report, applied));
    }
    let queue_depth_max = server.max_queue_depth();
    server.shutdown().await?;

    let mut sent: BTreeMap<u64, Sent> = BTreeMap::new();
    let mut server_lat = Vec::new();
    for t in &taps {
        if !t.sent.is_empty() {
            server_lat.push(t.enqueued.duration_since(t.ingest).as_micros() as u64);
        }
        for m in &t.sent {
            sent.insert(m.seq, Sent { msg: *m, ingest: t.ingest, enqueued: t.enqueued });
        }
    }
    let measured_input_fps = match (taps.first(), taps.last()) {
        (Some(a), Some(b)) if taps.len() > 1 => (taps.len() - 1) as f64 / b.ingest.duration_since(a.ingest).as_secs_f64(),
        _ => 0.0,
    };

    let mut e2e = Vec::new();
    for (_, applied) in &results {
        for a in applied {
            if let Some(s) = sent.get(&a.entry.msg.seq) {
                e2e.push(a.at.saturating_duration_since(s.ingest).as_micros() as u64);
            }
        }
    }
    let latency = LatencySummary::from_samples(e2e);
    let events_expected = EventCounts::from_labels(&stream.labels);
    let events_sent = EventCounts::of_commands(sent.values().map(|s| &s.msg.command));

    let client_results: Vec<ClientResult> = results
        .iter()
        .map(|(r, applied)| ClientResult {
            applied: r.status.cursor.applied,
            events_observed: EventCounts::of_commands(
                applied.iter().filter(|a| sent.contains_key(&a.entry.msg.seq)).map(|a| &a.entry.msg.command),
            ),
            decode_errors: r.status.decode_errors,
            stale: r.status.stale,
            connections: r.status.connections,
        })
        .collect();

    let cr = &sc.criteria;
    let mut criteria = Vec::new();
    let mut judge = |name: &str, pass: bool, detail: String| {
        criteria.push(CriterionResult { name: name.into(), pass, detail });
    };
    if let Some(max) = cr.p95_latency_us {
        judge(
            "p95_latency",
            latency.samples > 0 && latency.p95_us < max,
            format!("p95 {} us (p50 {}, p99 {}) over {} applies, limit {max} us", latency.p95_us, latency.p50_us, latency.p99_us, latency.samples),
        );
    }
    if let Some(min) = cr.min_input_fps {
        judge("input_fps", measured_input_fps >= min, format!("{measured_input_fps:.1} fps sustained over {duration_s:.1} s, need {min}"));
    }
    if cr.events {
        let (pass, detail) = check_events(&sent, &results, events_expected, events_sent);
        judge("events_delivered", pass, detail);
    }
    if cr.bounded_queues {
        let dropped = client_results.iter().any(|c| c.connections != 1);
        judge(
            "bounded_queues",
            queue_depth_max <= queue_capacity && !dropped,
            format!("max queue depth {queue_depth_max} of {queue_capacity}, clients dropped: {dropped}"),
        );
    }
    if cr.in_order {
        let ok = results.iter().all(|(_, applied)| applied.windows(2).all(|w| w[0].entry.msg.seq < w[1].entry.msg.seq));
        let stale: u64 = client_results.iter().map(|c| c.stale).sum();
        judge("in_order", ok && stale == 0, format!("strictly increasing seq on every client, {stale} stale"));
    }
    if cr.zero_decode_errors {
        let n: u64 = client_results.iter().map(|c| c.decode_errors).sum();
        judge("zero_decode_errors", n == 0, format!("{n} decode errors"));
    }
    if cr.freeze_jump {
        let (pass, detail) = match sc.outage_ms {
            None => (false, "scenario has no outage".to_string()),
            Some((a, b)) => {
                let window = (epoch + Duration::from_millis(a), epoch + Duration::from_millis(b));
                let grace = Duration::from_millis(50)
                    + link.map_or(Duration::ZERO, |l| Duration::from_secs_f64((l.delay_ms + l.jitter_ms) * 1e-3));
                let mut all = (true, String::new());
                for (_, applied) in &results {
                    if let Err(e) = check_freeze_jump(applied, &sent, window, grace).map(|d| all.1 = d) {
                        all = (false, e);
                        break;
                    }
                }
                all
            }
        };
        judge("freeze_jump", pass, detail);
    }

    let pass = criteria.iter().all(|c| c.pass);
    Ok(BenchReport {
        scenario: sc.name.clone(),
        input_fps: sc.fps,
        duration_s,
        frames: frames.len(),
        measured_input_fps,
        measurement: MEASUREMENT_NOTE,
        latency,
        server_latency: LatencySummary::from_samples(server_lat),
        events_expected,
        events_sent,
        commands_sent: sent.len(),
        clients: client_results,
        queue_depth_max,
        queue_capacity,
        link,
        outage_ms: sc.outage_ms,
        demand_bps,
        criteria,
        pass,
    })
}

fn check_events(
    sent: &BTreeMap<u64, Sent>,
    results: &[(airhmi_net::ClientReport, Vec<Applied>)],
    expected: EventCounts,
    sent_counts: EventCounts,
) -> (bool, String) {
    if expected != sent_counts {
        return (false, format!("server sent {sent_counts:?}, labels expect {expected:?}"));
    }
    let wanted: Vec<u64> = sent.values().filter(|s| !s.msg.command.is_move()).map(|s| s.msg.seq).collect();
    for (i, (_, applied)) in results.iter().enumerate() {
        let got: Vec<u64> = applied
            .iter()
            .filter(|a| !a.entry.msg.command.is_move() && sent.contains_key(&a.entry.msg.seq))
            .map(|a| a.entry.msg.seq)
            .collect();
        if got != wanted {
            return (false, format!("client {i} applied non-move seqs {got:?}, server sent {wanted:?}"));
        }
    }
    (
        true,
        format!("{} non-move commands ({expected:?}) delivered once each to {} client(s)", wanted.len(), results.len()),
    )
}

/// Structural dropout check for one client: positions before the outage are
/// commands the server sent, nothing is applied while the link is down, and
/// the first command after it is newer than everything lost, with no
/// replay of what was missed.
fn check_freeze_jump(
    applied: &[Applied],
    sent: &BTreeMap<u64, Sent>,
    (start, end): (Instant, Instant),
    grace: Duration,
) -> Result<String, String> {
    let live: Vec<&Applied> = applied.iter().filter(|a| sent.contains_key(&a.entry.msg.seq)).collect();
    for a in &live {
        let s = &sent[&a.entry.msg.seq];
        if s.msg != a.entry.msg {
            return Err(format!("applied {:?} but server sent {:?}", a.entry.msg, s.msg));
        }
    }
    let prefix: Vec<_> = live.iter().filter(|a| a.at < start).collect();
    let during: Vec<_> = live.iter().filter(|a| a.at >= start + grace && a.at < end).collect();
    let suffix: Vec<_> = live.iter().filter(|a| a.at >= end).collect();
    if let Some(a) = during.first() {
        return Err(format!("command seq {} applied during the outage", a.entry.msg.seq));
    }
    let last_before = prefix.iter().rev().find_map(|a| a.entry.msg.command.position());
    let Some(frozen) = last_before else {
        return Err("no position received before the outage".into());
    };
    let first_after = suffix.iter().find(|a| a.entry.msg.command.position().is_some());
    let Some(first_after) = first_after else {
        return Err("no position received after the outage".into());
    };
    let lost: Vec<u64> = sent
        .values()
        .filter(|s| s.enqueued >= start && s.enqueued + grace < end)
        .map(|s| s.msg.seq)
        .collect();
    if let Some(seq) = lost.iter().find(|seq| live.iter().any(|a| a.entry.msg.seq == **seq)) {
        return Err(format!("seq {seq} sent during the outage was delivered"));
    }
    if lost.last().is_some_and(|&l| first_after.entry.msg.seq <= l) {
        return Err(format!("first post-outage command seq {} replays the outage", first_after.entry.msg.seq));
    }
    Ok(format!(
        "{} commands before, 0 during ({} lost), {} after; frozen at {:?}, jumped to {:?} (seq {})",
        prefix.len(),
        lost.len(),
        suffix.len(),
        frozen,
        first_after.entry.msg.command.position().expect("filtered"),
        first_after.entry.msg.seq,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_render() {
        for (name, _) in BUNDLED {
            let sc = bundled(name).unwrap();
            assert_eq!(sc.name, *name);
            let stream = render(&sc).unwrap();
            let span = stream.frames.last().unwrap().ts_us as f64 * 1e-6;
            assert!(span + 1.0 / sc.fps >= sc.duration_s, "{name}: {span}");
            assert!(!stream.labels.is_empty(), "{name}");
        }
    }

    #[test]
    fn percentiles_are_nearest_rank() {
        let s = LatencySummary::from_samples((1..=100).rev().collect());
        assert_eq!((s.p50_us, s.p95_us, s.p99_us, s.max_us), (50, 95, 99, 100));
        assert_eq!(LatencySummary::from_samples(vec![]), LatencySummary::default());
    }

    #[test]
    fn infeasible_rates_are_refused() {
        let mut sc = bundled("clean_120fps").unwrap();
        sc.fps = 5000.0;
        assert!(matches!(sc.check(), Err(BenchError::ScenarioInfeasible(_))));
    }

    #[test]
    fn demand_counts_every_command() {
        let sc = bundled("clean_120fps").unwrap();
        let stream = render(&sc).unwrap();
        let bps = offline_demand_bps(PipelineConfig::default(), &stream.frames);
        // Tens of bytes per move at up to 120 moves per second.
        assert!((500..10_000).contains(&bps), "{bps}");
    }
}
