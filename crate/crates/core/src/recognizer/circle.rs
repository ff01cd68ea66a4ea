//! Circular index-finger motion in the x-y plane, quantized into scroll notches.
//!
//! The swept angle is measured about the local center of curvature of the
//! fingertip path: each pair of successive chords defines that center, and
//! the signed angle between the chords is the angle swept about it. Steps
//! count only while the curvature radius and angular speed stay above their
//! floors; otherwise the accumulator decays linearly to zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ScrollDirection;
use crate::model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleConfig {
    /// Swept angle per scroll notch.
    pub notch_rad: f64,
    /// Each notch fires this much before its exact multiple, absorbing the
    /// angle lost to smoothing at the ends of a stroke.
    pub notch_slack_rad: f64,
    pub min_radius_mm: f64,
    pub min_angular_speed_rad_s: f64,
    /// Largest angle a single step may contribute; bigger turns are noise.
    pub max_step_rad: f64,
    pub decay_ms: f64,
    /// Counterclockwise as seen from +z (the user) scrolls up when true.
    pub ccw_is_up: bool,
    /// Taps are ignored while the accumulated angle exceeds this.
    pub tap_exclusion_rad: f64,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            notch_rad: PI / 2.0,
            notch_slack_rad: PI / 8.0,
            min_radius_mm: 5.0,
            min_angular_speed_rad_s: 1.5,
            max_step_rad: PI / 3.0,
            decay_ms: 200.0,
            ccw_is_up: true,
            tap_exclusion_rad: PI / 4.0,
        }
    }
}

impl CircleConfig {
    /// Notches implied by an exact swept angle of `angle_rad`.
    pub fn notches_for(&self, angle_rad: f64) -> u32 {
        ((angle_rad.abs() + self.notch_slack_rad) / self.notch_rad).floor() as u32
    }
}

/// Signed angle swept about the center of curvature between two successive
/// chords, or `None` when the step fails the radius/speed floors.
pub fn swept_step(prev_chord: (f64, f64), chord: (f64, f64), dt_s: f64, cfg: &CircleConfig) -> Option<f64> {
    let l0 = prev_chord.0.hypot(prev_chord.1);
    let l1 = chord.0.hypot(chord.1);
    if l0 <= f64::EPSILON || l1 <= f64::EPSILON || dt_s <= 0.0 {
        return None;
    }
    let cross = prev_chord.0 * chord.1 - prev_chord.1 * chord.0;
    let dot = prev_chord.0 * chord.0 + prev_chord.1 * chord.1;
    let turn = cross.atan2(dot);
    let mag = turn.abs();
    if mag > cfg.max_step_rad || mag / dt_s < cfg.min_angular_speed_rad_s {
        return None;
    }
    let radius = 0.5 * (l0 + l1) / mag;
    if radius < cfg.min_radius_mm {
        return None;
    }
    Some(turn)
}

#[derive(Debug, Clone)]
pub(crate) struct CircleDetector {
    cfg: CircleConfig,
    prev: Option<(u64, Vec3)>,
    prev_chord: Option<(f64, f64)>,
    /// Signed, positive = scroll up.
    accum: f64,
    emitted: u32,
    decay_from: Option<f64>,
}

impl CircleDetector {
    pub(crate) fn new(cfg: CircleConfig) -> Self {
        Self {
            cfg,
            prev: None,
            prev_chord: None,
            accum: 0.0,
            emitted: 0,
            decay_from: None,
        }
    }

    pub(crate) fn reset(&mut self) {
        *self = Self::new(self.cfg);
    }

    pub(crate) fn accum(&self) -> f64 {
        self.accum
    }

    /// Feeds one smoothed fingertip sample; returns newly completed notches.
    /// With `allow_emit` false the angle still accumulates but notches are
    /// held back until emission is allowed again.
    pub(crate) fn push(&mut self, ts_us: u64, tip: Vec3, allow_emit: bool) -> Option<(ScrollDirection, u32)> {
        let (prev_ts, prev_tip) = self.prev.replace((ts_us, tip))?;
        let dt_s = (ts_us - prev_ts) as f64 * 1e-6;
        let chord = (tip.x - prev_tip.x, tip.y - prev_tip.y);
        let degenerate = chord.0.hypot(chord.1) <= f64::EPSILON;

        let step = self
            .prev_chord
            .and_then(|pc| swept_step(pc, chord, dt_s, &self.cfg));
        self.prev_chord = (!degenerate).then_some(chord);

        match step {
            Some(turn) => {
                let signed = if self.cfg.ccw_is_up { turn } else { -turn };
                let before = self.accum;
                self.accum += signed;
                self.decay_from = None;
                if before != 0.0 && before.signum() != self.accum.signum() {
                    self.emitted = 0;
                }
            }
            None => {
                let from = *self.decay_from.get_or_insert(self.accum.abs());
                let drop = from * dt_s * 1e3 / self.cfg.decay_ms;
                if self.accum.abs() <= drop {
                    self.accum = 0.0;
                    self.emitted = 0;
                } else {
                    self.accum -= drop * self.accum.signum();
                }
            }
        }

        if !allow_emit {
            return None;
        }
        let target = self.cfg.notches_for(self.accum);
        if target > self.emitted {
            let n = target - self.emitted;
            self.emitted = target;
            let dir = if self.accum > 0.0 { ScrollDirection::Up } else { ScrollDirection::Down };
            return Some((dir, n));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_circle(radius: f64, revs: f64, omega: f64, ccw: bool) -> Vec<(ScrollDirection, u32)> {
        let mut d = CircleDetector::new(CircleConfig::default());
        let dt = 1.0 / 120.0;
        let duration = 2.0 * PI * revs / omega;
        let sign = if ccw { 1.0 } else { -1.0 };
        let mut out = Vec::new();
        let mut k = 0u64;
        let mut push = |t: f64, p: Vec3, out: &mut Vec<_>| {
            if let Some(e) = d.push((t * 1e6) as u64, p, true) {
                out.push(e);
            }
        };
        for _ in 0..20 {
            push(k as f64 * dt, Vec3::new(radius, 300.0, 0.0), &mut out);
            k += 1;
        }
        let t0 = k as f64 * dt;
        loop {
            let t = k as f64 * dt;
            let u = (t - t0).min(duration);
            let a = sign * omega * u;
            push(t, Vec3::new(radius * a.cos(), 300.0 + radius * a.sin(), 0.0), &mut out);
            k += 1;
            if t - t0 > duration + 0.5 {
                break;
            }
        }
        out
    }

    fn total(events: &[(ScrollDirection, u32)], dir: ScrollDirection) -> u32 {
        events.iter().filter(|e| e.0 == dir).map(|e| e.1).sum()
    }

    #[test]
    fn ccw_revolution_scrolls_up_four_notches() {
        let ev = run_circle(20.0, 1.0, 2.0 * PI, true);
        assert_eq!(total(&ev, ScrollDirection::Up), 4);
        assert_eq!(total(&ev, ScrollDirection::Down), 0);
    }

    #[test]
    fn cw_revolution_scrolls_down_four_notches() {
        let ev = run_circle(20.0, 1.0, 2.0 * PI, false);
        assert_eq!(total(&ev, ScrollDirection::Down), 4);
        assert_eq!(total(&ev, ScrollDirection::Up), 0);
    }

    #[test]
    fn straight_sweep_does_not_scroll() {
        let mut d = CircleDetector::new(CircleConfig::default());
        for k in 0..120u64 {
            let x = -50.0 + 100.0 * k as f64 / 119.0;
            assert!(d.push(k * 8333, Vec3::new(x, 300.0, 0.0), true).is_none());
        }
        assert_eq!(d.accum(), 0.0);
    }

    #[test]
    fn tiny_circle_is_below_radius_floor() {
        let ev = run_circle(3.0, 2.0, 2.0 * PI, true);
        assert!(ev.is_empty());
    }

    #[test]
    fn slow_circle_is_below_speed_floor() {
        let ev = run_circle(20.0, 1.0, 1.0, true);
        assert!(ev.is_empty());
    }

    #[test]
    fn sign_flag_inverts_direction() {
        let cfg = CircleConfig { ccw_is_up: false, ..Default::default() };
        let mut d = CircleDetector::new(cfg);
        let mut notches = Vec::new();
        for k in 0..=130u64 {
            let a = 2.0 * PI * (k.min(120) as f64) / 120.0;
            if let Some(e) = d.push(k * 8333, Vec3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0), true) {
                notches.push(e);
            }
        }
        assert!(notches.iter().all(|e| e.0 == ScrollDirection::Down));
    }

    #[test]
    fn accumulator_decays_when_motion_stops() {
        let mut d = CircleDetector::new(CircleConfig::default());
        let mut ts = 0;
        for k in 0..40u64 {
            let a = 2.0 * PI * k as f64 / 120.0;
            ts = k * 8333;
            d.push(ts, Vec3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0), true);
        }
        assert!(d.accum() > 1.0);
        let still = Vec3::new(20.0 * (2.0 * PI * 39.0 / 120.0_f64).cos(), 20.0 * (2.0 * PI * 39.0 / 120.0_f64).sin(), 0.0);
        for k in 1..=25u64 {
            d.push(ts + k * 8333, still, true);
        }
        assert_eq!(d.accum(), 0.0);
    }

    #[test]
    fn held_notches_are_released_later() {
        let mut d = CircleDetector::new(CircleConfig::default());
        let mut got = 0;
        for k in 0..=130u64 {
            let a = 2.0 * PI * (k.min(120) as f64) / 120.0;
            let allow = k > 100;
            if let Some((_, n)) = d.push(k * 8333, Vec3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0), allow) {
                got += n;
            }
        }
        assert_eq!(got, 4);
    }
}
