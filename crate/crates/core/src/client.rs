//! Client-side virtual cursor and reconnect policy.

use std::time::Duration;

use serde::Serialize;

use crate::protocol::{encode_command, Command, CommandMessage};
use crate::recognizer::ScrollDirection;
use crate::stabilizer::ScreenGeometry;

/// One applied command, as written to the client event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    /// Client clock at apply time.
    pub ts_us: u64,
    pub msg: CommandMessage,
}

impl LogEntry {
    /// `{"ts_us":...,"cmd":{...}}`
    pub fn to_json_line(&self) -> String {
        let cmd = encode_command(&self.msg).expect("applied commands are always encodable");
        format!("{{\"ts_us\":{},\"cmd\":{}}}", self.ts_us, cmd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    /// seq at or below the newest seq seen on this connection.
    Stale,
    /// Release while not held. Logged and otherwise ignored.
    RedundantRelease,
}

/// Cheap copy of the observable cursor state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CursorSnapshot {
    pub x_px: u32,
    pub y_px: u32,
    pub held: bool,
    pub connected: bool,
    pub last_seq: Option<u64>,
    pub applied: u64,
    pub clicks: u64,
    pub scroll_up: u64,
    pub scroll_down: u64,
}

#[derive(Debug, Clone)]
pub struct CursorState {
    screen: ScreenGeometry,
    pub x_px: u32,
    pub y_px: u32,
    pub held: bool,
    pub connected: bool,
    /// Newest seq applied on the current connection.
    pub last_seq: Option<u64>,
    pub event_log: Vec<LogEntry>,
    keep_log: bool,
    applied: u64,
    clicks: u64,
    scroll_up: u64,
    scroll_down: u64,
}

impl CursorState {
    /// Cursor starts centered, released and disconnected.
    pub fn new(screen: ScreenGeometry) -> Self {
        Self {
            screen,
            x_px: screen.width_px / 2,
            y_px: screen.height_px / 2,
            held: false,
            connected: false,
            last_seq: None,
            event_log: Vec::new(),
            keep_log: true,
            applied: 0,
            clicks: 0,
            scroll_up: 0,
            scroll_down: 0,
        }
    }

    /// Stops retaining applied commands in memory; callers that stream the
    /// log elsewhere use this for long sessions.
    pub fn without_log(mut self) -> Self {
        self.keep_log = false;
        self
    }

    pub fn screen(&self) -> ScreenGeometry {
        self.screen
    }

    pub fn snapshot(&self) -> CursorSnapshot {
        CursorSnapshot {
            x_px: self.x_px,
            y_px: self.y_px,
            held: self.held,
            connected: self.connected,
            last_seq: self.last_seq,
            applied: self.applied,
            clicks: self.clicks,
            scroll_up: self.scroll_up,
            scroll_down: self.scroll_down,
        }
    }

    fn set_position(&mut self, x: u32, y: u32) {
        let (x, y) = self.screen.clamp(x, y);
        self.x_px = x;
        self.y_px = y;
    }

    /// Applies one decoded command. `now_us` is the client clock used for the
    /// log entry. Returns the entry that was logged, if any.
    pub fn apply_command(&mut self, msg: CommandMessage, now_us: u64) -> (ApplyOutcome, Option<LogEntry>) {
        if self.last_seq.is_some_and(|last| msg.seq <= last) {
            tracing::debug!(seq = msg.seq, last = ?self.last_seq, "stale command discarded");
            return (ApplyOutcome::Stale, None);
        }
        self.last_seq = Some(msg.seq);

        let mut outcome = ApplyOutcome::Applied;
        match msg.command {
            Command::Move { x, y } => self.set_position(x, y),
            Command::Click { x, y } => {
                self.set_position(x, y);
                self.clicks += 1;
            }
            Command::Hold => self.held = true,
            Command::Release => {
                if !self.held {
                    tracing::warn!(seq = msg.seq, "release while not held");
                    outcome = ApplyOutcome::RedundantRelease;
                }
                self.held = false;
            }
            Command::Scroll { dir, n } => match dir {
                ScrollDirection::Up => self.scroll_up += u64::from(n),
                ScrollDirection::Down => self.scroll_down += u64::from(n),
            },
        }
        // Commands are logged as received with the position clamped.
        let mut msg = msg;
        if let Command::Move { x, y } | Command::Click { x, y } = &mut msg.command {
            *x = self.x_px;
            *y = self.y_px;
        }
        let entry = LogEntry { ts_us: now_us, msg };
        self.applied += 1;
        if self.keep_log {
            self.event_log.push(entry);
        }
        (outcome, Some(entry))
    }

    /// The connection dropped. Position and hold flag stay frozen.
    pub fn on_disconnect(&mut self) {
        self.connected = false;
    }

    /// A new connection was established. Sequence numbers are scoped to a
    /// connection, so staleness tracking starts over.
    pub fn on_connect(&mut self) {
        self.connected = true;
        self.last_seq = None;
    }

    /// Convenience for the first message after a reconnect: the cursor jumps
    /// straight to it with nothing interpolated.
    pub fn on_reconnect(&mut self, first_fresh: CommandMessage, now_us: u64) -> (ApplyOutcome, Option<LogEntry>) {
        self.on_connect();
        self.apply_command(first_fresh, now_us)
    }

    /// Positions of every applied move and click, in order.
    pub fn position_trace(&self) -> Vec<(u32, u32)> {
        self.event_log.iter().filter_map(|e| e.msg.command.position()).collect()
    }
}

/// Exponential reconnect delay: 100 ms, doubling, capped at 2 s.
#[derive(Debug, Clone)]
pub struct Backoff {
    initial: Duration,
    max: Duration,
    next: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new(Duration::from_millis(100), Duration::from_secs(2))
    }
}

impl Backoff {
    pub fn new(initial: Duration, max: Duration) -> Self {
        Self { initial, max, next: initial }
    }

    pub fn next_delay(&mut self) -> Duration {
        let d = self.next;
        self.next = (self.next * 2).min(self.max);
        d
    }

    pub fn reset(&mut self) {
        self.next = self.initial;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(seq: u64, command: Command) -> CommandMessage {
        CommandMessage { command, seq, ts_us: seq * 10 }
    }

    #[test]
    fn move_then_click() {
        let mut c = CursorState::new(ScreenGeometry::default());
        c.on_connect();
        c.apply_command(msg(1, Command::Move { x: 100, y: 200 }), 0);
        c.apply_command(msg(2, Command::Click { x: 100, y: 200 }), 1);
        assert_eq!((c.x_px, c.y_px), (100, 200));
        assert_eq!(c.snapshot().clicks, 1);
        assert_eq!(c.event_log.len(), 2);
    }

    #[test]
    fn redundant_release_is_harmless() {
        let mut c = CursorState::new(ScreenGeometry::default());
        let before = c.snapshot();
        let (o, _) = c.apply_command(msg(1, Command::Release), 0);
        assert_eq!(o, ApplyOutcome::RedundantRelease);
        assert!(!c.held);
        assert_eq!((c.x_px, c.y_px), (before.x_px, before.y_px));
    }

    #[test]
    fn stale_seq_discarded() {
        let mut c = CursorState::new(ScreenGeometry::default());
        c.apply_command(msg(7, Command::Move { x: 1, y: 1 }), 0);
        let (o, e) = c.apply_command(msg(5, Command::Move { x: 9, y: 9 }), 1);
        assert_eq!(o, ApplyOutcome::Stale);
        assert!(e.is_none());
        assert_eq!((c.x_px, c.y_px), (1, 1));
        assert_eq!(c.last_seq, Some(7));
    }

    #[test]
    fn disconnect_freezes_and_reconnect_jumps() {
        let mut c = CursorState::new(ScreenGeometry::default());
        c.on_connect();
        c.apply_command(msg(1, Command::Move { x: 10, y: 10 }), 0);
        c.on_disconnect();
        assert_eq!((c.x_px, c.y_px), (10, 10));
        assert!(!c.connected);
        c.on_reconnect(msg(1, Command::Move { x: 500, y: 500 }), 5);
        assert_eq!(c.position_trace(), vec![(10, 10), (500, 500)]);
    }

    #[test]
    fn positions_are_clamped() {
        let mut c = CursorState::new(ScreenGeometry::new(100, 50).unwrap());
        c.apply_command(msg(1, Command::Move { x: 400, y: 400 }), 0);
        assert_eq!((c.x_px, c.y_px), (99, 49));
    }

    #[test]
    fn log_line_format() {
        let e = LogEntry { ts_us: 42, msg: msg(3, Command::Hold) };
        assert_eq!(e.to_json_line(), r#"{"ts_us":42,"cmd":{"t":"hold","seq":3,"ts_us":30}}"#);
    }

    #[test]
    fn backoff_doubles_to_cap() {
        let mut b = Backoff::default();
        let ms: Vec<_> = (0..7).map(|_| b.next_delay().as_millis()).collect();
        assert_eq!(ms, vec![100, 200, 400, 800, 1600, 2000, 2000]);
        b.reset();
        assert_eq!(b.next_delay().as_millis(), 100);
    }
}
