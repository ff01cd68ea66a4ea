//! Hand-frame data model, the interaction box and coordinate normalization.
//!
//! Coordinates follow the sensor convention: origin at the device, +x right,
//! +y up, +z toward the user. Lengths are millimeters, time is microseconds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A position or direction in millimeters. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Distance in the x-y plane only.
    pub fn planar_distance(&self, other: &Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerName {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl FingerName {
    pub const ALL: [FingerName; 5] = [
        FingerName::Thumb,
        FingerName::Index,
        FingerName::Middle,
        FingerName::Ring,
        FingerName::Pinky,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FingerName::Thumb => "thumb",
            FingerName::Index => "index",
            FingerName::Middle => "middle",
            FingerName::Ring => "ring",
            FingerName::Pinky => "pinky",
        }
    }
}

impl fmt::Display for FingerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerState {
    pub name: FingerName,
    pub tip: Vec3,
    #[serde(rename = "ext")]
    pub extended: bool,
}

/// One timestamped sample of hand pose.
///
/// `fingers` holds exactly one entry per [`FingerName`] when `hand_present`
/// and is empty otherwise. The serialized form is the JSONL frame record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandFrame {
    pub ts_us: u64,
    #[serde(rename = "hand")]
    pub hand_present: bool,
    pub palm: Vec3,
    pub palm_normal: Vec3,
    pub fingers: Vec<FingerState>,
}

impl HandFrame {
    /// A frame with no hand in view.
    pub fn empty(ts_us: u64) -> Self {
        Self {
            ts_us,
            hand_present: false,
            palm: Vec3::ZERO,
            palm_normal: Vec3::new(0.0, -1.0, 0.0),
            fingers: Vec::new(),
        }
    }

    /// Builds a plausible right-hand pose around an index fingertip.
    ///
    /// `extended` is indexed in [`FingerName::ALL`] order. Curled fingers
    /// keep their tips close to the palm; the index tip is always `tip`.
    pub fn from_tip(ts_us: u64, tip: Vec3, extended: [bool; 5]) -> Self {
        let palm = tip + Vec3::new(10.0, -15.0, 75.0);
        let reach = [
            Vec3::new(-50.0, 15.0, -35.0),
            Vec3::ZERO,
            Vec3::new(22.0, 15.0, -70.0),
            Vec3::new(42.0, 10.0, -62.0),
            Vec3::new(60.0, 0.0, -48.0),
        ];
        let fingers = FingerName::ALL
            .iter()
            .zip(extended)
            .zip(reach)
            .map(|((&name, ext), r)| {
                let tip = match (name, ext) {
                    (FingerName::Index, _) => tip,
                    (_, true) => palm + r,
                    (_, false) => palm + r * 0.35,
                };
                FingerState { name, tip, extended: ext }
            })
            .collect();
        Self {
            ts_us,
            hand_present: true,
            palm,
            palm_normal: Vec3::new(0.0, -1.0, 0.0),
            fingers,
        }
    }

    pub fn finger(&self, name: FingerName) -> Option<&FingerState> {
        self.fingers.iter().find(|f| f.name == name)
    }

    pub fn index_tip(&self) -> Option<Vec3> {
        self.finger(FingerName::Index).map(|f| f.tip)
    }

    /// Number of fingers flagged as extended.
    pub fn extended_count(&self) -> usize {
        self.fingers.iter().filter(|f| f.extended).count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("timestamp {ts_us} does not follow previous timestamp {prev_us}")]
    NonMonotoneTimestamp { ts_us: u64, prev_us: u64 },
    #[error("non-finite component in {0}")]
    NonFiniteComponent(String),
    #[error("malformed hand: {0}")]
    MalformedHand(String),
}

const UNIT_TOLERANCE: f64 = 1e-6;

/// Checks every frame invariant against the previous accepted timestamp.
///
/// Returns the frame unchanged when it is acceptable.
pub fn validate_frame(raw: HandFrame, prev_ts: Option<u64>) -> Result<HandFrame, FrameError> {
    if let Some(prev_us) = prev_ts {
        if raw.ts_us <= prev_us {
            return Err(FrameError::NonMonotoneTimestamp { ts_us: raw.ts_us, prev_us });
        }
    }
    if !raw.palm.is_finite() {
        return Err(FrameError::NonFiniteComponent("palm".into()));
    }
    if !raw.palm_normal.is_finite() {
        return Err(FrameError::NonFiniteComponent("palm_normal".into()));
    }
    if let Some(f) = raw.fingers.iter().find(|f| !f.tip.is_finite()) {
        return Err(FrameError::NonFiniteComponent(format!("{} tip", f.name)));
    }
    if !raw.hand_present {
        if !raw.fingers.is_empty() {
            return Err(FrameError::MalformedHand("fingers present without a hand".into()));
        }
        return Ok(raw);
    }
    if raw.fingers.len() != FingerName::ALL.len() {
        return Err(FrameError::MalformedHand(format!(
            "expected 5 fingers, got {}",
            raw.fingers.len()
        )));
    }
    for name in FingerName::ALL {
        let n = raw.fingers.iter().filter(|f| f.name == name).count();
        if n != 1 {
            return Err(FrameError::MalformedHand(format!("{n} entries for {name}")));
        }
    }
    if (raw.palm_normal.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(FrameError::MalformedHand("palm_normal is not a unit vector".into()));
    }
    Ok(raw)
}

/// A point in box-normalized coordinates, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct NormPos {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NormPos {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar_distance(&self, other: &NormPos) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 3]> for NormPos {
    fn from(a: [f64; 3]) -> Self {
        NormPos::new(a[0], a[1], a[2])
    }
}

impl From<NormPos> for [f64; 3] {
    fn from(v: NormPos) -> Self {
        [v.x, v.y, v.z]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("interaction box corners must satisfy max > min on every axis")]
pub struct InvalidBox;

/// Axis-aligned tracking volume in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxCorners", into = "BoxCorners")]
pub struct InteractionBox {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxCorners {
    min: Vec3,
    max: Vec3,
}

impl TryFrom<BoxCorners> for InteractionBox {
    type Error = InvalidBox;
    fn try_from(c: BoxCorners) -> Result<Self, InvalidBox> {
        InteractionBox::new(c.min, c.max)
    }
}

impl From<InteractionBox> for BoxCorners {
    fn from(b: InteractionBox) -> Self {
        BoxCorners { min: b.min, max: b.max }
    }
}

/// Two feet, the edge of the default cube.
pub const DEFAULT_BOX_EDGE_MM: f64 = 609.6;
/// Height of the default cube's floor above the device.
pub const DEFAULT_BOX_FLOOR_MM: f64 = 100.0;

impl Default for InteractionBox {
    fn default() -> Self {
        let h = DEFAULT_BOX_EDGE_MM / 2.0;
        InteractionBox {
            min: Vec3::new(-h, DEFAULT_BOX_FLOOR_MM, -h),
            max: Vec3::new(h, DEFAULT_BOX_FLOOR_MM + DEFAULT_BOX_EDGE_MM, h),
        }
    }
}

impl InteractionBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, InvalidBox> {
        let ok = min.is_finite() && max.is_finite() && max.x > min.x && max.y > min.y && max.z > min.z;
        if ok {
            Ok(Self { min, max })
        } else {
            Err(InvalidBox)
        }
    }

    pub fn min_corner(&self) -> Vec3 {
        self.min
    }

    pub fn max_corner(&self) -> Vec3 {
        self.max
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    /// Maps `p` into `[0, 1]³`, clamping points outside the box. The flag
    /// reports whether `p` was inside before clamping.
    pub fn normalize(&self, p: Vec3) -> (NormPos, bool) {
        let e = self.extent();
        let n = NormPos::new(
            ((p.x - self.min.x) / e.x).clamp(0.0, 1.0),
            ((p.y - self.min.y) / e.y).clamp(0.0, 1.0),
            ((p.z - self.min.z) / e.z).clamp(0.0, 1.0),
        );
        (n, self.contains(&p))
    }

    pub fn denormalize(&self, n: NormPos) -> Vec3 {
        let e = self.extent();
        Vec3::new(
            n.x * e.x + self.min.x,
            n.y * e.y + self.min.y,
            n.z * e.z + self.min.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pointing_frame(ts_us: u64, tip: Vec3) -> HandFrame {
        HandFrame::from_tip(ts_us, tip, [false, true, false, false, false])
    }

    #[test]
    fn accepts_well_formed_frame() {
        let f = pointing_frame(1000, Vec3::new(0.0, 300.0, 0.0));
        assert_eq!(validate_frame(f.clone(), Some(900)), Ok(f));
    }

    #[test]
    fn rejects_repeated_timestamp() {
        let f = pointing_frame(900, Vec3::new(0.0, 300.0, 0.0));
        assert!(matches!(
            validate_frame(f, Some(900)),
            Err(FrameError::NonMonotoneTimestamp { .. })
        ));
    }

    #[test]
    fn rejects_nan_tip() {
        let mut f = pointing_frame(1000, Vec3::new(0.0, 300.0, 0.0));
        f.fingers[1].tip.x = f64::NAN;
        assert!(matches!(validate_frame(f, Some(900)), Err(FrameError::NonFiniteComponent(_))));
    }

    #[test]
    fn rejects_duplicate_finger() {
        let mut f = pointing_frame(1000, Vec3::new(0.0, 300.0, 0.0));
        f.fingers[4].name = FingerName::Index;
        assert!(matches!(validate_frame(f, None), Err(FrameError::MalformedHand(_))));
    }

    #[test]
    fn rejects_non_unit_normal() {
        let mut f = pointing_frame(1000, Vec3::new(0.0, 300.0, 0.0));
        f.palm_normal = Vec3::new(0.0, -2.0, 0.0);
        assert!(matches!(validate_frame(f, None), Err(FrameError::MalformedHand(_))));
    }

    #[test]
    fn empty_hand_must_have_no_fingers() {
        assert!(validate_frame(HandFrame::empty(5), None).is_ok());
        let mut f = pointing_frame(5, Vec3::ZERO);
        f.hand_present = false;
        assert!(matches!(validate_frame(f, None), Err(FrameError::MalformedHand(_))));
    }

    #[test]
    fn default_box_is_two_foot_cube() {
        let e = InteractionBox::default().extent();
        for v in [e.x, e.y, e.z] {
            assert!((v - 609.6).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_examples() {
        let b = InteractionBox::default();
        let (n, inside) = b.normalize(Vec3::new(0.0, 404.8, 0.0));
        assert!(inside);
        for v in [n.x, n.y, n.z] {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert_eq!(b.normalize(b.min_corner()), (NormPos::new(0.0, 0.0, 0.0), true));
        let beyond = b.max_corner() + Vec3::new(100.0, 0.0, 0.0);
        let (n, inside) = b.normalize(Vec3::new(beyond.x, 400.0, 0.0));
        assert_eq!(n.x, 1.0);
        assert!(!inside);
    }

    #[test]
    fn box_rejects_inverted_corners() {
        assert_eq!(InteractionBox::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0)), Err(InvalidBox));
    }
}
