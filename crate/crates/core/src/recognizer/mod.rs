//! Gesture state machine.
//!
//! Consumes validated [`HandFrame`]s and emits [`GestureEvent`]s: cursor
//! motion from the index fingertip, click from an in-air tap, hold/release
//! from open-hand/fist poses and scroll notches from circular motion.
//! Output is a pure function of the frame stream.

mod circle;
mod hold;
mod tap;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use circle::{swept_step, CircleConfig};
pub use hold::HoldConfig;
pub use tap::{detect_screen_tap, TapConfig, TapHit, TapSample};

use crate::model::{HandFrame, InteractionBox, NormPos, Vec3};
use circle::CircleDetector;
use hold::{HoldDetector, HoldTransition};
use tap::TapDetector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
}

impl ScrollDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GestureKind {
    CursorMove { pos: NormPos },
    Click { pos: NormPos },
    HoldStart,
    HoldEnd,
    Scroll { direction: ScrollDirection, notches: u32 },
}

impl GestureKind {
    pub fn is_move(&self) -> bool {
        matches!(self, GestureKind::CursorMove { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub ts_us: u64,
    #[serde(flatten)]
    pub kind: GestureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Idle,
    Tracking,
    Holding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerConfig {
    pub tap: TapConfig,
    pub circle: CircleConfig,
    pub hold: HoldConfig,
    /// Fingertip samples averaged before kinematic detection.
    pub smoothing_samples: usize,
    /// Minimum history retained for tap detection.
    pub window_ms: f64,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            tap: TapConfig::default(),
            circle: CircleConfig::default(),
            hold: HoldConfig::default(),
            smoothing_samples: 4,
            window_ms: 250.0,
        }
    }
}

/// Number of fingers flagged as extended.
pub fn extended_count(frame: &HandFrame) -> usize {
    frame.extended_count()
}

#[derive(Debug, Clone)]
pub struct Recognizer {
    cfg: RecognizerConfig,
    bbox: InteractionBox,
    mode: Mode,
    recent_tips: VecDeque<Vec3>,
    tap: TapDetector,
    circle: CircleDetector,
    hold: HoldDetector,
}

impl Recognizer {
    pub fn new(cfg: RecognizerConfig, bbox: InteractionBox) -> Self {
        Self {
            cfg,
            bbox,
            mode: Mode::Idle,
            recent_tips: VecDeque::with_capacity(cfg.smoothing_samples.max(1)),
            tap: TapDetector::new(cfg.tap, cfg.window_ms),
            circle: CircleDetector::new(cfg.circle),
            hold: HoldDetector::new(cfg.hold),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.cfg
    }

    /// Signed circle angle accumulated so far, positive toward scroll up.
    pub fn circle_accum(&self) -> f64 {
        self.circle.accum()
    }

    fn go_idle(&mut self, ts_us: u64, events: &mut Vec<GestureEvent>) {
        if self.mode == Mode::Holding {
            events.push(GestureEvent { ts_us, kind: GestureKind::HoldEnd });
        }
        self.mode = Mode::Idle;
        self.recent_tips.clear();
        self.tap.reset();
        self.circle.reset();
        self.hold.reset();
    }

    fn smoothed(&mut self, tip: Vec3) -> Vec3 {
        let n = self.cfg.smoothing_samples.max(1);
        if self.recent_tips.len() == n {
            self.recent_tips.pop_front();
        }
        self.recent_tips.push_back(tip);
        let sum = self.recent_tips.iter().fold(Vec3::ZERO, |a, &b| a + b);
        sum * (1.0 / self.recent_tips.len() as f64)
    }

    /// Advances the state machine by one frame.
    pub fn update(&mut self, frame: &HandFrame) -> Vec<GestureEvent> {
        let ts_us = frame.ts_us;
        let mut events = Vec::new();

        let tip = frame.hand_present.then(|| frame.index_tip()).flatten();
        let Some(tip) = tip.filter(|t| self.bbox.contains(t)) else {
            if self.mode != Mode::Idle {
                self.go_idle(ts_us, &mut events);
            }
            return events;
        };
        if self.mode == Mode::Idle {
            self.mode = Mode::Tracking;
        }

        let (norm, _) = self.bbox.normalize(tip);
        events.push(GestureEvent { ts_us, kind: GestureKind::CursorMove { pos: norm } });

        let smooth = self.smoothed(tip);

        let allow_scroll = !self.tap.in_refractory(ts_us);
        if let Some((direction, notches)) = self.circle.push(ts_us, smooth, allow_scroll) {
            events.push(GestureEvent { ts_us, kind: GestureKind::Scroll { direction, notches } });
        }

        let tap_blocked = self.circle.accum().abs() > self.cfg.circle.tap_exclusion_rad;
        if let Some(hit) = self.tap.push(TapSample { ts_us, pos: smooth }, tap_blocked) {
            let (pos, _) = self.bbox.normalize(hit.onset);
            events.push(GestureEvent { ts_us, kind: GestureKind::Click { pos } });
        }

        let holding = self.mode == Mode::Holding;
        match self.hold.update(ts_us, frame.extended_count(), holding) {
            Some(HoldTransition::Start) => {
                self.mode = Mode::Holding;
                events.push(GestureEvent { ts_us, kind: GestureKind::HoldStart });
            }
            Some(HoldTransition::End) => {
                self.mode = Mode::Tracking;
                events.push(GestureEvent { ts_us, kind: GestureKind::HoldEnd });
            }
            None => {}
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FingerName, FingerState};

    fn frame(ts_us: u64, tip: Vec3, extended: [bool; 5]) -> HandFrame {
        HandFrame::from_tip(ts_us, tip, extended)
    }

    const POINT: [bool; 5] = [false, true, false, false, false];
    const OPEN: [bool; 5] = [true; 5];
    const FIST: [bool; 5] = [false; 5];

    fn rec() -> Recognizer {
        Recognizer::new(RecognizerConfig::default(), InteractionBox::default())
    }

    #[test]
    fn hand_loss_returns_to_idle_silently() {
        let mut r = rec();
        r.update(&frame(0, Vec3::new(0.0, 400.0, 0.0), POINT));
        assert_eq!(r.mode(), Mode::Tracking);
        let ev = r.update(&HandFrame::empty(8333));
        assert!(ev.is_empty());
        assert_eq!(r.mode(), Mode::Idle);
    }

    #[test]
    fn still_tip_yields_one_cursor_move() {
        let mut r = rec();
        let tip = Vec3::new(0.0, 404.8, 0.0);
        let ev = r.update(&frame(1000, tip, POINT));
        assert_eq!(ev.len(), 1);
        match ev[0].kind {
            GestureKind::CursorMove { pos } => {
                assert!((pos.x - 0.5).abs() < 1e-12 && (pos.y - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ev[0].ts_us, 1000);
    }

    #[test]
    fn leaving_box_stops_tracking() {
        let mut r = rec();
        r.update(&frame(0, Vec3::new(0.0, 400.0, 0.0), POINT));
        let ev = r.update(&frame(8333, Vec3::new(400.0, 400.0, 0.0), POINT));
        assert!(ev.is_empty());
        assert_eq!(r.mode(), Mode::Idle);
    }

    #[test]
    fn open_palm_then_fist_is_hold_then_release() {
        let mut r = rec();
        let tip = Vec3::new(0.0, 400.0, 0.0);
        let mut kinds = Vec::new();
        let mut ts = 0;
        for (pose, frames) in [(POINT, 10), (OPEN, 15), (FIST, 15)] {
            for _ in 0..frames {
                ts += 8333;
                kinds.extend(r.update(&frame(ts, tip, pose)).into_iter().map(|e| e.kind).filter(|k| !k.is_move()));
            }
        }
        assert_eq!(kinds, vec![GestureKind::HoldStart, GestureKind::HoldEnd]);
        assert_eq!(r.mode(), Mode::Tracking);
    }

    #[test]
    fn brief_open_palm_does_not_hold() {
        let mut r = rec();
        let tip = Vec3::new(0.0, 400.0, 0.0);
        let mut ts = 0;
        let mut any = false;
        for (pose, frames) in [(POINT, 5), (OPEN, 6), (POINT, 20)] {
            for _ in 0..frames {
                ts += 8333;
                any |= r.update(&frame(ts, tip, pose)).iter().any(|e| !e.kind.is_move());
            }
        }
        assert!(!any);
    }

    #[test]
    fn losing_hand_while_holding_releases() {
        let mut r = rec();
        let tip = Vec3::new(0.0, 400.0, 0.0);
        let mut ts = 0;
        for _ in 0..20 {
            ts += 8333;
            r.update(&frame(ts, tip, OPEN));
        }
        assert_eq!(r.mode(), Mode::Holding);
        let ev = r.update(&HandFrame::empty(ts + 8333));
        assert_eq!(ev.iter().map(|e| e.kind).collect::<Vec<_>>(), vec![GestureKind::HoldEnd]);
    }

    #[test]
    fn extended_count_examples() {
        let tip = Vec3::new(0.0, 400.0, 0.0);
        assert_eq!(extended_count(&frame(0, tip, OPEN)), 5);
        assert_eq!(extended_count(&frame(0, tip, FIST)), 0);
        assert_eq!(extended_count(&frame(0, tip, POINT)), 1);
        let f = frame(0, tip, POINT);
        assert!(f.fingers.contains(&FingerState { name: FingerName::Index, tip, extended: true }));
    }
}
