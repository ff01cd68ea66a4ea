//! Synthetic hand trajectories with ground-truth gesture labels.
//!
//! A [`TrajectoryScript`] is a list of motion segments driving the index
//! fingertip. [`generate`] samples it at the script frame rate and derives
//! the gestures the recognizer must report from the same thresholds the
//! recognizer uses. Segments that would land close to a threshold are
//! rejected with [`SynthError::InfeasibleSegment`] instead of producing a
//! label that could go either way.

pub mod corpus;
mod record;

use std::f64::consts::PI;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HandFrame, InteractionBox, Vec3};
use crate::recognizer::{GestureEvent, GestureKind, RecognizerConfig, ScrollDirection};

pub use record::{read_frames, read_labels, record, replay, write_frames, write_labels, RecordError};

/// Ground-truth tolerance on label timestamps.
pub const LABEL_TOLERANCE_US: u64 = 100_000;

/// Largest jitter amplitude the generator accepts.
pub const MAX_JITTER_MM: f64 = 2.0;

const DEFAULT_FRAME_RATE: f64 = 120.0;
const POINTING: [bool; 5] = [false, true, false, false, false];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Dwell {
        duration_s: f64,
    },
    /// Straight line at constant speed (mm/s).
    Line {
        to: Vec3,
        speed: f64,
    },
    /// Forward poke along -z and back, raised-cosine velocity profile.
    Tap {
        depth_mm: f64,
        peak_speed: f64,
        #[serde(default)]
        drift_mm: f64,
    },
    /// Circle in the x-y plane starting from the current position, which must
    /// lie on it. Direction is as seen by the user, looking down -z.
    Circle {
        center: Vec3,
        radius_mm: f64,
        revolutions: f64,
        direction: Rotation,
        /// rad/s
        angular_speed: f64,
    },
    SetFingers {
        extended: [bool; 5],
    },
    /// Gaussian tremor about the current position, `amplitude_mm` being one
    /// standard deviation per axis.
    Jitter {
        amplitude_mm: f64,
        duration_s: f64,
    },
}

impl Segment {
    fn name(&self) -> &'static str {
        match self {
            Segment::Dwell { .. } => "dwell",
            Segment::Line { .. } => "line",
            Segment::Tap { .. } => "tap",
            Segment::Circle { .. } => "circle",
            Segment::SetFingers { .. } => "set_fingers",
            Segment::Jitter { .. } => "jitter",
        }
    }

    fn validate(&self) -> Result<(), String> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be positive, got {v}"))
            }
        };
        let non_negative = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be non-negative, got {v}"))
            }
        };
        match *self {
            Segment::Dwell { duration_s } => positive(duration_s, "duration_s"),
            Segment::Line { to, speed } => {
                if !to.is_finite() {
                    return Err("line target is not finite".into());
                }
                positive(speed, "speed")
            }
            Segment::Tap { depth_mm, peak_speed, drift_mm } => {
                positive(depth_mm, "depth_mm")?;
                positive(peak_speed, "peak_speed")?;
                non_negative(drift_mm, "drift_mm")
            }
            Segment::Circle { center, radius_mm, revolutions, angular_speed, .. } => {
                if !center.is_finite() {
                    return Err("circle center is not finite".into());
                }
                non_negative(radius_mm, "radius_mm")?;
                positive(revolutions, "revolutions")?;
                positive(angular_speed, "angular_speed")
            }
            Segment::SetFingers { .. } => Ok(()),
            Segment::Jitter { amplitude_mm, duration_s } => {
                non_negative(amplitude_mm, "amplitude_mm")?;
                positive(duration_s, "duration_s")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryScript {
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_start")]
    pub start: Vec3,
    #[serde(default = "default_extended")]
    pub extended: [bool; 5],
    pub segments: Vec<Segment>,
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

fn default_start() -> Vec3 {
    InteractionBox::default().center()
}

fn default_extended() -> [bool; 5] {
    POINTING
}

impl TrajectoryScript {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self {
            frame_rate: DEFAULT_FRAME_RATE,
            start: default_start(),
            extended: POINTING,
            segments,
        }
    }

    /// Accepts either a bare array of segments or an object with
    /// `frame_rate`, `start`, `extended` and `segments`.
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let script = if value.is_array() {
            Self::new(serde_json::from_value(value)?)
        } else {
            serde_json::from_value(value)?
        };
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(SynthError::InvalidScript {
                segment: None,
                reason: format!("frame_rate must be positive, got {}", self.frame_rate),
            });
        }
        if !self.start.is_finite() {
            return Err(SynthError::InvalidScript { segment: None, reason: "start is not finite".into() });
        }
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate()
                .map_err(|reason| SynthError::InvalidScript { segment: Some(i), reason })?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid script{}: {reason}", segment.map(|i| format!(" (segment {i})")).unwrap_or_default())]
    InvalidScript { segment: Option<usize>, reason: String },
    #[error("infeasible segment {segment} ({kind}): {reason}")]
    InfeasibleSegment { segment: usize, kind: &'static str, reason: String },
    #[error("script parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelKind {
    Click,
    HoldStart,
    HoldEnd,
    /// One notch.
    Scroll { direction: ScrollDirection },
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Click => f.write_str("click"),
            LabelKind::HoldStart => f.write_str("hold_start"),
            LabelKind::HoldEnd => f.write_str("hold_end"),
            LabelKind::Scroll { direction } => write!(f, "scroll_{}", direction.as_str()),
        }
    }
}

impl LabelKind {
    /// The label kind and multiplicity of a recognizer event; `None` for
    /// cursor motion.
    pub fn of_event(kind: &GestureKind) -> Option<(LabelKind, u32)> {
        match *kind {
            GestureKind::CursorMove { .. } => None,
            GestureKind::Click { .. } => Some((LabelKind::Click, 1)),
            GestureKind::HoldStart => Some((LabelKind::HoldStart, 1)),
            GestureKind::HoldEnd => Some((LabelKind::HoldEnd, 1)),
            GestureKind::Scroll { direction, notches } => Some((LabelKind::Scroll { direction }, notches)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub ts_us: u64,
    #[serde(flatten)]
    pub kind: LabelKind,
    pub tolerance_us: u64,
}

/// Time range of one segment and the fastest the fingertip moves in it.
/// `max_speed_mm_s` is `None` for jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpan {
    pub start_us: u64,
    pub end_us: u64,
    pub max_speed_mm_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub frames: Vec<HandFrame>,
    pub labels: Vec<Label>,
    pub spans: Vec<SegmentSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelMismatch {
    Count { kind: LabelKind, expected: usize, observed: usize },
    Timing { kind: LabelKind, index: usize, expected_us: u64, observed_us: u64 },
}

impl fmt::Display for LabelMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMismatch::Count { kind, expected, observed } => {
                write!(f, "{kind}: expected {expected}, observed {observed}")
            }
            LabelMismatch::Timing { kind, index, expected_us, observed_us } => {
                write!(f, "{kind} #{index}: expected at {expected_us} us, observed at {observed_us} us")
            }
        }
    }
}

fn expand_events(events: &[GestureEvent]) -> Vec<(u64, LabelKind)> {
    let mut out = Vec::new();
    for ev in events {
        if let Some((kind, n)) = LabelKind::of_event(&ev.kind) {
            out.extend(std::iter::repeat_n((ev.ts_us, kind), n as usize));
        }
    }
    out
}

/// Compares recognizer output with labels: per kind, the same number of
/// occurrences, each within its label's tolerance in order.
pub fn check_labels(labels: &[Label], events: &[GestureEvent]) -> Result<(), Vec<LabelMismatch>> {
    let observed = expand_events(events);
    let mut kinds: Vec<LabelKind> = labels.iter().map(|l| l.kind).chain(observed.iter().map(|o| o.1)).collect();
    kinds.sort_by_key(|k| k.to_string());
    kinds.dedup();

    let mut problems = Vec::new();
    for kind in kinds {
        let exp: Vec<&Label> = labels.iter().filter(|l| l.kind == kind).collect();
        let obs: Vec<u64> = observed.iter().filter(|o| o.1 == kind).map(|o| o.0).collect();
        if exp.len() != obs.len() {
            problems.push(LabelMismatch::Count { kind, expected: exp.len(), observed: obs.len() });
            continue;
        }
        for (index, (l, &o)) in exp.iter().zip(&obs).enumerate() {
            if l.ts_us.abs_diff(o) > l.tolerance_us {
                problems.push(LabelMismatch::Timing { kind, index, expected_us: l.ts_us, observed_us: o });
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

#[derive(Debug, Clone, Copy)]
enum Motion {
    Still(Vec3),
    Line { from: Vec3, to: Vec3 },
    Tap { origin: Vec3, depth: f64, stroke_s: f64, drift: f64 },
    Circle { center: Vec3, radius: f64, phase0: f64, omega: f64 },
    Jitter { base: Vec3, sigma: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    dur: f64,
    motion: Motion,
}

impl Piece {
    fn end(&self) -> f64 {
        self.t0 + self.dur
    }

    /// Position `u` seconds into the piece; jitter noise is added by the
    /// sampler.
    fn at(&self, u: f64) -> Vec3 {
        match self.motion {
            Motion::Still(p) | Motion::Jitter { base: p, .. } => p,
            Motion::Line { from, to } => {
                let s = (u / self.dur).clamp(0.0, 1.0);
                from + (to - from) * s
            }
            Motion::Tap { origin, depth, stroke_s, drift } => {
                let (s, lateral) = if u <= stroke_s {
                    let s = (1.0 - (PI * u / stroke_s).cos()) / 2.0;
                    (s, s)
                } else {
                    let v = (u - stroke_s).min(stroke_s);
                    ((1.0 + (PI * v / stroke_s).cos()) / 2.0, 1.0)
                };
                origin + Vec3::new(drift * lateral, 0.0, -depth * s)
            }
            Motion::Circle { center, radius, phase0, omega } => {
                let phi = phase0 + omega * u;
                Vec3::new(center.x + radius * phi.cos(), center.y + radius * phi.sin(), center.z)
            }
        }
    }
}

const THRESHOLD_CLEAR: f64 = 1.2;
const THRESHOLD_MISS: f64 = 0.7;
/// Slack allowed after refractory and decay periods before the next gesture.
const SETTLE_S: f64 = 0.06;
/// Labels must sit at least this far before the last frame.
const TAIL_S: f64 = 0.05;

struct Planner {
    cfg: RecognizerConfig,
    bbox: InteractionBox,
    dt: f64,
    t: f64,
    pos: Vec3,
    extended: [bool; 5],
    holding: bool,
    /// (time the hold transition fires, whether it is a start)
    pending_hold: Option<(f64, bool)>,
    last_click_s: Option<f64>,
    /// Scroll accumulator is surely back at zero after this time.
    circle_quiet_s: f64,
    pieces: Vec<Piece>,
    finger_changes: Vec<(f64, [bool; 5])>,
    labels: Vec<(f64, LabelKind)>,
    spans: Vec<(f64, f64, Option<f64>)>,
}

impl Planner {
    fn infeasible(&self, segment: usize, seg: &Segment, reason: impl Into<String>) -> SynthError {
        SynthError::InfeasibleSegment { segment, kind: seg.name(), reason: reason.into() }
    }

    fn inside(&self, p: Vec3) -> bool {
        self.bbox.contains(&p)
    }

    fn hold_armed(&self, extended: [bool; 5], holding: bool) -> bool {
        let n = extended.iter().filter(|&&e| e).count();
        if holding {
            n <= self.cfg.hold.fist_max
        } else {
            n >= self.cfg.hold.open_min
        }
    }

    /// Resolves a pending hold transition that has certainly fired by `t`.
    /// Returns false when `t` is too close to the firing time to tell.
    fn settle_hold(&mut self, t: f64) -> bool {
        if let Some((fire, start)) = self.pending_hold {
            if t >= fire + 2.0 * self.dt {
                self.holding = start;
                self.pending_hold = None;
            } else if t >= fire - 1e-9 {
                return false;
            }
        }
        true
    }

    fn set_fingers(&mut self, i: usize, seg: &Segment, extended: [bool; 5]) -> Result<(), SynthError> {
        if !self.settle_hold(self.t) {
            return Err(self.infeasible(i, seg, "pose changes while a hold transition is firing"));
        }
        if let Some((fire, start)) = self.pending_hold {
            // Timer still running: the new pose either keeps it armed or
            // cancels it well before it would fire.
            if !self.hold_armed(extended, !start) {
                if self.t > fire - 2.0 * self.dt {
                    return Err(self.infeasible(i, seg, "pose changes just before a hold transition fires"));
                }
                self.pending_hold = None;
                let label = if start { LabelKind::HoldStart } else { LabelKind::HoldEnd };
                if let Some(pos) = self.labels.iter().rposition(|&(at, k)| k == label && at == fire) {
                    self.labels.remove(pos);
                }
            }
        } else if self.hold_armed(extended, self.holding) && !self.hold_armed(self.extended, self.holding) {
            self.arm_hold();
        }
        self.extended = extended;
        self.finger_changes.push((self.t, extended));
        Ok(())
    }

    fn arm_hold(&mut self) {
        let fire = self.t + self.cfg.hold.sustain_ms * 1e-3;
        let start = !self.holding;
        self.pending_hold = Some((fire, start));
        self.labels.push((fire, if start { LabelKind::HoldStart } else { LabelKind::HoldEnd }));
    }

    fn push_piece(&mut self, dur: f64, motion: Motion, speed: Option<f64>) {
        self.pieces.push(Piece { t0: self.t, dur, motion });
        self.spans.push((self.t, self.t + dur, speed));
        self.t += dur;
    }

    fn after_moving_piece(&self) -> bool {
        self.pieces
            .last()
            .is_some_and(|p| (p.end() - self.t).abs() < 1e-9 && matches!(p.motion, Motion::Line { .. } | Motion::Circle { .. }))
    }

    fn check_circle_quiet(&self, i: usize, seg: &Segment) -> Result<(), SynthError> {
        if self.t < self.circle_quiet_s {
            return Err(self.infeasible(i, seg, "starts before the previous circle has decayed; add a dwell"));
        }
        Ok(())
    }

    fn line(&mut self, i: usize, seg: &Segment, to: Vec3, speed: f64) -> Result<(), SynthError> {
        self.check_circle_quiet(i, seg)?;
        if !self.inside(to) {
            return Err(self.infeasible(i, seg, "target outside the interaction box"));
        }
        let d = to - self.pos;
        let dist = d.norm();
        if dist == 0.0 {
            return Ok(());
        }
        let tap = self.cfg.tap;
        let vz = d.z / dist * speed;
        let planar = (d.x.hypot(d.y)) / dist * speed;
        let window = tap.max_duration_ms * 1e-3;
        let reads_as_tap = -vz >= THRESHOLD_MISS * tap.min_peak_speed_mm_s
            && -d.z >= THRESHOLD_MISS * tap.min_travel_mm
            && planar * window < 1.5 * tap.max_drift_mm;
        if reads_as_tap {
            return Err(self.infeasible(i, seg, "forward motion is fast and straight enough to read as a tap"));
        }
        let from = self.pos;
        self.push_piece(dist / speed, Motion::Line { from, to }, Some(speed));
        self.pos = to;
        Ok(())
    }

    fn tap(&mut self, i: usize, seg: &Segment, depth: f64, peak: f64, drift: f64) -> Result<(), SynthError> {
        self.check_circle_quiet(i, seg)?;
        let cfg = self.cfg.tap;
        let origin = self.pos;
        let bottom = origin + Vec3::new(drift, 0.0, -depth);
        if !self.inside(bottom) {
            return Err(self.infeasible(i, seg, "stroke leaves the interaction box"));
        }
        let stroke_s = depth * PI / (2.0 * peak);
        let window = cfg.max_duration_ms * 1e-3;
        let window_travel = if window < stroke_s { depth * (PI * window / (2.0 * stroke_s)).sin() } else { depth };

        let clicks = depth >= THRESHOLD_CLEAR * cfg.min_travel_mm
            && peak >= THRESHOLD_CLEAR * cfg.min_peak_speed_mm_s
            && stroke_s <= 0.9 * window
            && drift <= 0.8 * cfg.max_drift_mm;
        let misses = peak <= THRESHOLD_MISS * cfg.min_peak_speed_mm_s
            || window_travel <= THRESHOLD_MISS * cfg.min_travel_mm
            || drift >= 1.5 * cfg.max_drift_mm;
        if !clicks && !misses {
            return Err(self.infeasible(i, seg, "too close to the tap thresholds to label"));
        }
        let bottom_t = self.t + stroke_s;
        if clicks {
            if self.t < 5.0 * self.dt {
                return Err(self.infeasible(i, seg, "tap needs a few frames of tracking before it"));
            }
            if let Some(last) = self.last_click_s {
                if bottom_t < last + cfg.refractory_ms * 1e-3 + SETTLE_S {
                    return Err(self.infeasible(i, seg, "inside the refractory period of the previous tap"));
                }
            }
            self.labels.push((bottom_t, LabelKind::Click));
            self.last_click_s = Some(bottom_t);
        }
        let speed = peak * (1.0 + (drift / depth).powi(2)).sqrt();
        self.push_piece(2.0 * stroke_s, Motion::Tap { origin, depth, stroke_s, drift }, Some(speed));
        self.pos = bottom + Vec3::new(0.0, 0.0, depth);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn circle(
        &mut self,
        i: usize,
        seg: &Segment,
        center: Vec3,
        radius: f64,
        revolutions: f64,
        direction: Rotation,
        omega: f64,
    ) -> Result<(), SynthError> {
        self.check_circle_quiet(i, seg)?;
        let cfg = self.cfg.circle;
        if self.after_moving_piece() {
            return Err(self.infeasible(i, seg, "circle must start from rest"));
        }
        let offset = self.pos - center;
        if (offset.x.hypot(offset.y) - radius).abs() > 0.5 || offset.z.abs() > 0.5 {
            return Err(self.infeasible(i, seg, "start position is not on the circle"));
        }
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            if !self.inside(center + Vec3::new(dx * radius, dy * radius, 0.0)) {
                return Err(self.infeasible(i, seg, "circle leaves the interaction box"));
            }
        }

        let step = omega * self.dt;
        let scrolls = radius >= 1.3 * cfg.min_radius_mm
            && omega >= 1.3 * cfg.min_angular_speed_rad_s
            && step <= 0.5 * cfg.max_step_rad;
        let quiet = radius <= THRESHOLD_MISS * cfg.min_radius_mm || omega <= THRESHOLD_MISS * cfg.min_angular_speed_rad_s;
        if !scrolls && !quiet {
            return Err(self.infeasible(i, seg, "too close to the circle thresholds to label"));
        }

        let total = 2.0 * PI * revolutions;
        let dur = total / omega;
        if scrolls {
            let in_notches = total / cfg.notch_rad;
            let whole = (in_notches + 1e-9).floor();
            if in_notches - whole > 0.5 {
                return Err(self.infeasible(
                    i,
                    seg,
                    "revolutions end too close to the next notch; use a whole or half notch count",
                ));
            }
            let n = whole as u32;
            let ccw = direction == Rotation::Ccw;
            let direction = if ccw == cfg.ccw_is_up { ScrollDirection::Up } else { ScrollDirection::Down };
            let first_notch = self.t + (cfg.notch_rad - cfg.notch_slack_rad) / omega;
            if let (Some(last), true) = (self.last_click_s, n > 0) {
                if first_notch < last + self.cfg.tap.refractory_ms * 1e-3 + SETTLE_S {
                    return Err(self.infeasible(i, seg, "scroll would start inside a tap refractory period"));
                }
            }
            for k in 1..=n {
                let at = self.t + (k as f64 * cfg.notch_rad - cfg.notch_slack_rad) / omega;
                self.labels.push((at, LabelKind::Scroll { direction }));
            }
            self.circle_quiet_s = self.t + dur + cfg.decay_ms * 1e-3 + SETTLE_S;
        }

        let signed = if direction == Rotation::Ccw { omega } else { -omega };
        let phase0 = offset.y.atan2(offset.x);
        self.push_piece(dur, Motion::Circle { center, radius, phase0, omega: signed }, Some(omega * radius));
        let end = self.pieces.last().expect("just pushed").at(dur);
        self.pos = end;
        Ok(())
    }
}

fn plan(script: &TrajectoryScript, cfg: RecognizerConfig, bbox: InteractionBox) -> Result<Planner, SynthError> {
    script.validate()?;
    let mut p = Planner {
        cfg,
        bbox,
        dt: 1.0 / script.frame_rate,
        t: 0.0,
        pos: script.start,
        extended: script.extended,
        holding: false,
        pending_hold: None,
        last_click_s: None,
        circle_quiet_s: 0.0,
        pieces: Vec::new(),
        finger_changes: vec![(0.0, script.extended)],
        labels: Vec::new(),
        spans: Vec::new(),
    };
    if !p.inside(script.start) {
        return Err(SynthError::InvalidScript { segment: None, reason: "start outside the interaction box".into() });
    }
    if p.hold_armed(script.extended, false) {
        p.arm_hold();
    }

    for (i, seg) in script.segments.iter().enumerate() {
        match *seg {
            Segment::Dwell { duration_s } => {
                let here = p.pos;
                p.push_piece(duration_s, Motion::Still(here), Some(0.0));
            }
            Segment::Line { to, speed } => p.line(i, seg, to, speed)?,
            Segment::Tap { depth_mm, peak_speed, drift_mm } => p.tap(i, seg, depth_mm, peak_speed, drift_mm)?,
            Segment::Circle { center, radius_mm, revolutions, direction, angular_speed } => {
                p.circle(i, seg, center, radius_mm, revolutions, direction, angular_speed)?
            }
            Segment::SetFingers { extended } => p.set_fingers(i, seg, extended)?,
            Segment::Jitter { amplitude_mm, duration_s } => {
                p.check_circle_quiet(i, seg)?;
                if amplitude_mm > MAX_JITTER_MM {
                    return Err(p.infeasible(i, seg, format!("amplitude above {MAX_JITTER_MM} mm can trigger gestures")));
                }
                let reach = Vec3::new(5.0, 5.0, 5.0) * amplitude_mm;
                if !p.inside(p.pos + reach) || !p.inside(p.pos - reach) {
                    return Err(p.infeasible(i, seg, "tremor reaches the edge of the interaction box"));
                }
                let base = p.pos;
                p.push_piece(duration_s, Motion::Jitter { base, sigma: amplitude_mm }, None);
            }
        }
    }

    let end = p.t;
    if !p.settle_hold(end) || p.pending_hold.is_some() {
        let last = script.segments.len().saturating_sub(1);
        return Err(SynthError::InfeasibleSegment {
            segment: last,
            kind: script.segments.get(last).map_or("set_fingers", Segment::name),
            reason: "script ends before a hold transition completes".into(),
        });
    }
    if let Some(&(at, kind)) = p.labels.iter().find(|(at, _)| *at + TAIL_S > end) {
        return Err(SynthError::InvalidScript {
            segment: None,
            reason: format!("{kind} at {at:.3} s is too close to the end of the script; add a trailing dwell"),
        });
    }
    Ok(p)
}

fn to_us(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

/// Samples `script` into frames with ground-truth labels derived from the
/// default recognizer thresholds and interaction box.
pub fn generate(script: &TrajectoryScript, seed: u64) -> Result<LabeledStream, SynthError> {
    generate_with(script, seed, RecognizerConfig::default(), InteractionBox::default())
}

pub fn generate_with(
    script: &TrajectoryScript,
    seed: u64,
    cfg: RecognizerConfig,
    bbox: InteractionBox,
) -> Result<LabeledStream, SynthError> {
    let plan = plan(script, cfg, bbox)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let total = plan.t;
    let frame_count = (total * script.frame_rate + 1e-9).floor() as u64 + 1;
    let mut frames = Vec::with_capacity(frame_count as usize);
    let mut piece_idx = 0;
    let mut finger_idx = 0;
    for k in 0..frame_count {
        let t = k as f64 / script.frame_rate;
        while piece_idx + 1 < plan.pieces.len() && t >= plan.pieces[piece_idx].end() - 1e-12 {
            piece_idx += 1;
        }
        while finger_idx + 1 < plan.finger_changes.len() && plan.finger_changes[finger_idx + 1].0 <= t + 1e-12 {
            finger_idx += 1;
        }
        let tip = match plan.pieces.get(piece_idx) {
            None => script.start,
            Some(piece) => {
                let base = piece.at(t - piece.t0);
                match piece.motion {
                    // The first sample of a tremor sits where the hand already is.
                    Motion::Jitter { sigma, .. } if t > piece.t0 + 1e-12 && t < piece.end() - 1e-12 => {
                        let noise = Vec3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng));
                        base + noise * sigma
                    }
                    _ => base,
                }
            }
        };
        let ts_us = (k as f64 * 1e6 / script.frame_rate).round() as u64;
        frames.push(HandFrame::from_tip(ts_us, tip, plan.finger_changes[finger_idx].1));
    }

    let mut labels: Vec<Label> = plan
        .labels
        .iter()
        .map(|&(at, kind)| Label { ts_us: to_us(at), kind, tolerance_us: LABEL_TOLERANCE_US })
        .collect();
    labels.sort_by_key(|l| l.ts_us);
    let spans = plan
        .spans
        .iter()
        .map(|&(a, b, v)| SegmentSpan { start_us: to_us(a), end_us: to_us(b), max_speed_mm_s: v })
        .collect();
    Ok(LabeledStream { frames, labels, spans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognizer::Recognizer;

    fn run(stream: &LabeledStream) -> Vec<GestureEvent> {
        let mut r = Recognizer::new(RecognizerConfig::default(), InteractionBox::default());
        stream.frames.iter().flat_map(|f| r.update(f)).collect()
    }

    fn script(json: &str) -> TrajectoryScript {
        TrajectoryScript::from_json(json).unwrap()
    }

    #[test]
    fn tap_script_labels_one_click() {
        let s = script(r#"[{"type":"dwell","duration_s":1},{"type":"tap","depth_mm":15,"peak_speed":200},{"type":"dwell","duration_s":1}]"#);
        let out = generate(&s, 0).unwrap();
        let kinds: Vec<_> = out.labels.iter().map(|l| l.kind).collect();
        assert_eq!(kinds, vec![LabelKind::Click]);
        check_labels(&out.labels, &run(&out)).unwrap();
    }

    #[test]
    fn two_cw_revolutions_are_eight_down_notches() {
        let s = script(
            r#"{"start":[20,404.8,0],"segments":[
                {"type":"dwell","duration_s":0.3},
                {"type":"circle","center":[0,404.8,0],"radius_mm":20,"revolutions":2,"direction":"cw","angular_speed":6.283185307179586},
                {"type":"dwell","duration_s":0.5}]}"#,
        );
        let out = generate(&s, 0).unwrap();
        assert_eq!(out.labels.len(), 8);
        assert!(out.labels.iter().all(|l| l.kind == LabelKind::Scroll { direction: ScrollDirection::Down }));
        check_labels(&out.labels, &run(&out)).unwrap();
    }

    #[test]
    fn jitter_only_has_no_labels() {
        let s = script(r#"[{"type":"jitter","amplitude_mm":1,"duration_s":10}]"#);
        let out = generate(&s, 3).unwrap();
        assert!(out.labels.is_empty());
        assert_eq!(out.frames.len(), 1201);
    }

    #[test]
    fn weak_tap_is_rejected() {
        let s = script(r#"[{"type":"dwell","duration_s":1},{"type":"tap","depth_mm":11,"peak_speed":200},{"type":"dwell","duration_s":1}]"#);
        assert!(matches!(generate(&s, 0), Err(SynthError::InfeasibleSegment { segment: 1, .. })));
    }

    #[test]
    fn circle_must_start_on_its_rim() {
        let s = script(
            r#"[{"type":"circle","center":[0,404.8,0],"radius_mm":20,"revolutions":1,"direction":"ccw","angular_speed":6}]"#,
        );
        assert!(matches!(generate(&s, 0), Err(SynthError::InfeasibleSegment { segment: 0, .. })));
    }

    #[test]
    fn hold_needs_its_sustain_time() {
        let open = r#"{"type":"set_fingers","extended":[true,true,true,true,true]}"#;
        let fist = r#"{"type":"set_fingers","extended":[false,false,false,false,false]}"#;
        let short = format!(r#"[{{"type":"dwell","duration_s":0.2}},{open},{{"type":"dwell","duration_s":0.05}},{fist},{{"type":"dwell","duration_s":0.5}}]"#);
        let out = generate(&script(&short), 0).unwrap();
        assert!(out.labels.is_empty());
        check_labels(&out.labels, &run(&out)).unwrap();
        let borderline = short.replace("0.05", "0.095");
        assert!(generate(&script(&borderline), 0).is_err());
        let long = format!(r#"[{{"type":"dwell","duration_s":0.2}},{open},{{"type":"dwell","duration_s":0.5}},{fist},{{"type":"dwell","duration_s":0.5}}]"#);
        let out = generate(&script(&long), 0).unwrap();
        let kinds: Vec<_> = out.labels.iter().map(|l| l.kind).collect();
        assert_eq!(kinds, vec![LabelKind::HoldStart, LabelKind::HoldEnd]);
        check_labels(&out.labels, &run(&out)).unwrap();
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrajectoryScript::from_json(r#"[{"type":"dwell","duration_s":-1}]"#).is_err());
        assert!(TrajectoryScript::from_json(r#"[{"type":"warp"}]"#).is_err());
        assert!(TrajectoryScript::from_json(r#"{"frame_rate":0,"segments":[]}"#).is_err());
    }

    #[test]
    fn timestamps_follow_frame_rate() {
        let s = script(r#"{"frame_rate":300,"segments":[{"type":"dwell","duration_s":0.1}]}"#);
        let out = generate(&s, 0).unwrap();
        let ts: Vec<_> = out.frames.iter().map(|f| f.ts_us).take(4).collect();
        assert_eq!(ts, vec![0, 3333, 6667, 10000]);
        assert_eq!(out.frames.len(), 31);
    }

    #[test]
    fn count_mismatch_reported() {
        let labels = [Label { ts_us: 0, kind: LabelKind::Click, tolerance_us: 10 }];
        let err = check_labels(&labels, &[]).unwrap_err();
        assert_eq!(err, vec![LabelMismatch::Count { kind: LabelKind::Click, expected: 1, observed: 0 }]);
    }
}
