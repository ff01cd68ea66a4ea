//! In-air screen tap: a short forward poke of the index finger along -z.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapConfig {
    /// Minimum forward (-z) travel between onset and reversal.
    pub min_travel_mm: f64,
    /// Longest onset-to-reversal interval that still counts as a tap.
    pub max_duration_ms: f64,
    pub min_peak_speed_mm_s: f64,
    /// Largest x-y excursion from the onset point during the stroke.
    pub max_drift_mm: f64,
    pub refractory_ms: f64,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            min_travel_mm: 10.0,
            max_duration_ms: 150.0,
            min_peak_speed_mm_s: 100.0,
            max_drift_mm: 8.0,
            refractory_ms: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSample {
    pub ts_us: u64,
    pub pos: Vec3,
}

/// A detected tap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapHit {
    /// Tip position where the forward stroke began.
    pub onset: Vec3,
    pub onset_us: u64,
    /// Timestamp of the deepest sample.
    pub reversal_us: u64,
    pub travel_mm: f64,
    pub peak_speed_mm_s: f64,
}

/// Looks for a tap that completes at the newest sample of `window`.
///
/// A tap completes when the z-velocity turns from negative to non-negative;
/// the stroke is then traced back from the deepest sample to the highest-z
/// sample no older than `max_duration_ms` and checked against the travel,
/// speed and drift bounds. Refractory handling is left to the caller.
pub fn detect_screen_tap(window: &[TapSample], cfg: &TapConfig) -> Option<TapHit> {
    let n = window.len();
    if n < 3 {
        return None;
    }
    let vz = |i: usize| {
        let dt = (window[i].ts_us - window[i - 1].ts_us) as f64 * 1e-6;
        (window[i].pos.z - window[i - 1].pos.z) / dt
    };
    if !(vz(n - 2) < 0.0 && vz(n - 1) >= 0.0) {
        return None;
    }
    let bottom = n - 2;
    let bottom_s = window[bottom];
    let max_us = (cfg.max_duration_ms * 1e3) as u64;

    let mut onset = bottom;
    for i in (0..bottom).rev() {
        if bottom_s.ts_us - window[i].ts_us > max_us {
            break;
        }
        if window[i].pos.z > window[onset].pos.z {
            onset = i;
        }
    }
    let onset_s = window[onset];
    let travel = onset_s.pos.z - bottom_s.pos.z;
    if travel < cfg.min_travel_mm {
        return None;
    }
    let peak = (onset + 1..=bottom).map(|i| -vz(i)).fold(f64::MIN, f64::max);
    if peak < cfg.min_peak_speed_mm_s {
        return None;
    }
    let drift = window[onset..=bottom]
        .iter()
        .map(|s| s.pos.planar_distance(&onset_s.pos))
        .fold(0.0, f64::max);
    if drift > cfg.max_drift_mm {
        return None;
    }
    Some(TapHit {
        onset: onset_s.pos,
        onset_us: onset_s.ts_us,
        reversal_us: bottom_s.ts_us,
        travel_mm: travel,
        peak_speed_mm_s: peak,
    })
}

/// Windowed tap detection with a refractory period.
#[derive(Debug, Clone)]
pub(crate) struct TapDetector {
    cfg: TapConfig,
    span_us: u64,
    window: VecDeque<TapSample>,
    last_click_us: Option<u64>,
}

impl TapDetector {
    pub(crate) fn new(cfg: TapConfig, span_ms: f64) -> Self {
        let span_ms = span_ms.max(cfg.max_duration_ms + 50.0);
        Self {
            cfg,
            span_us: (span_ms * 1e3) as u64,
            window: VecDeque::new(),
            last_click_us: None,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.window.clear();
    }

    /// True while a recent click still blocks other discrete gestures.
    pub(crate) fn in_refractory(&self, ts_us: u64) -> bool {
        self.last_click_us
            .is_some_and(|t| ts_us.saturating_sub(t) < (self.cfg.refractory_ms * 1e3) as u64)
    }

    pub(crate) fn push(&mut self, sample: TapSample, suppressed: bool) -> Option<TapHit> {
        self.window.push_back(sample);
        while let Some(front) = self.window.front() {
            if sample.ts_us - front.ts_us > self.span_us {
                self.window.pop_front();
            } else {
                break;
            }
        }
        if suppressed || self.in_refractory(sample.ts_us) {
            return None;
        }
        let hit = detect_screen_tap(self.window.make_contiguous(), &self.cfg)?;
        self.last_click_us = Some(sample.ts_us);
        Some(hit)
    }

    #[cfg(test)]
    pub(crate) fn window_len(&self) -> usize {
        self.window.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT_US: u64 = 8333;

    /// Raised-cosine forward stroke followed by the mirrored return,
    /// padded with `dwell` still samples on both sides.
    fn poke_at(t0_us: u64, dwell: usize, depth: f64, peak: f64, drift: f64) -> Vec<TapSample> {
        let t_stroke = depth * std::f64::consts::PI / (2.0 * peak);
        let mut out = Vec::new();
        let mut ts = t0_us;
        let mut push = |pos| {
            out.push(TapSample { ts_us: ts, pos });
            ts += DT_US;
        };
        for _ in 0..dwell {
            push(Vec3::new(0.0, 300.0, 0.0));
        }
        let steps = (2.0 * t_stroke / (DT_US as f64 * 1e-6)).ceil() as usize;
        for k in 1..=steps {
            let t = k as f64 * DT_US as f64 * 1e-6;
            let (s, lateral) = if t <= t_stroke {
                let s = (1.0 - (std::f64::consts::PI * t / t_stroke).cos()) / 2.0;
                (s, s)
            } else {
                let u = (t - t_stroke).min(t_stroke);
                ((1.0 + (std::f64::consts::PI * u / t_stroke).cos()) / 2.0, 1.0)
            };
            push(Vec3::new(drift * lateral, 300.0, -depth * s));
        }
        for _ in 0..dwell {
            push(Vec3::new(drift, 300.0, 0.0));
        }
        out
    }

    fn poke(depth: f64, peak: f64, drift: f64) -> Vec<TapSample> {
        poke_at(0, 30, depth, peak, drift)
    }

    fn count_taps(samples: &[TapSample]) -> usize {
        let mut d = TapDetector::new(TapConfig::default(), 250.0);
        samples.iter().filter(|s| d.push(**s, false).is_some()).count()
    }

    #[test]
    fn quick_poke_is_one_click() {
        assert_eq!(count_taps(&poke(15.0, 200.0, 2.0)), 1);
    }

    #[test]
    fn click_latches_onset_position() {
        let samples = poke(15.0, 200.0, 2.0);
        let mut d = TapDetector::new(TapConfig::default(), 250.0);
        let hit = samples.iter().find_map(|s| d.push(*s, false)).unwrap();
        assert!(hit.onset.z.abs() < 0.2, "onset z {}", hit.onset.z);
        assert!(hit.onset.x.abs() < 0.1);
        assert!(hit.travel_mm > 14.0);
    }

    #[test]
    fn slow_push_is_ignored() {
        let mut samples = Vec::new();
        let mut z = 0.0;
        let mut ts = 0;
        while z > -20.0 {
            samples.push(TapSample { ts_us: ts, pos: Vec3::new(0.0, 300.0, z) });
            z -= 30.0 * DT_US as f64 * 1e-6;
            ts += DT_US;
        }
        for _ in 0..40 {
            samples.push(TapSample { ts_us: ts, pos: Vec3::new(0.0, 300.0, -20.0) });
            ts += DT_US;
        }
        assert_eq!(count_taps(&samples), 0);
    }

    #[test]
    fn wide_drift_is_not_a_tap() {
        assert_eq!(count_taps(&poke(15.0, 200.0, 12.0)), 0);
    }

    #[test]
    fn shallow_poke_is_not_a_tap() {
        assert_eq!(count_taps(&poke(6.0, 200.0, 0.0)), 0);
    }

    #[test]
    fn refractory_blocks_double_tap() {
        let mut samples = poke_at(0, 10, 15.0, 300.0, 0.0);
        let next = samples.last().unwrap().ts_us + DT_US;
        samples.extend(poke_at(next, 2, 15.0, 300.0, 0.0));
        assert_eq!(count_taps(&samples), 1);

        // The same pair spaced past the refractory period yields two clicks.
        let mut samples = poke_at(0, 10, 15.0, 300.0, 0.0);
        let next = samples.last().unwrap().ts_us + DT_US;
        samples.extend(poke_at(next, 40, 15.0, 300.0, 0.0));
        assert_eq!(count_taps(&samples), 2);
    }

    #[test]
    fn window_is_bounded() {
        let mut d = TapDetector::new(TapConfig::default(), 250.0);
        for k in 0..1000 {
            d.push(TapSample { ts_us: k * DT_US, pos: Vec3::ZERO }, false);
        }
        assert!(d.window_len() <= 250_000 / DT_US as usize + 2);
    }
}
