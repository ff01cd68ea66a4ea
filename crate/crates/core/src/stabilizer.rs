//! Cursor stabilization: a velocity-adaptive low-pass (one-euro style)
//! followed by a hysteresis deadzone, then mapping to screen pixels.
//!
//! Faster fingertip motion raises the filter cutoff, so the cursor trails
//! the finger by less time when it moves quickly and stays calm when it
//! barely moves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NormPos;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Minimum cutoff frequency, Hz.
    pub fc_min: f64,
    /// Cutoff gain per unit of normalized speed.
    pub beta: f64,
    /// Cutoff of the velocity low-pass, Hz.
    pub dcutoff: f64,
    /// Deadzone radius in normalized units.
    pub r_dead: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { fc_min: 1.0, beta: 0.5, dcutoff: 1.0, r_dead: 0.0025 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilizerError {
    #[error("filter parameters must be strictly positive")]
    InvalidParams,
    #[error("timestamp {ts_us} does not follow {last_us}")]
    NonMonotoneTimestamp { ts_us: u64, last_us: u64 },
    #[error("screen geometry must be at least 1x1")]
    InvalidScreen,
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), StabilizerError> {
        let ok = [self.fc_min, self.beta, self.dcutoff, self.r_dead]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(StabilizerError::InvalidParams)
        }
    }
}

fn smoothing_factor(cutoff_hz: f64, dt_s: f64) -> f64 {
    let r = 2.0 * PI * cutoff_hz * dt_s;
    r / (r + 1.0)
}

/// Filter memory for the cursor path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub smoothed: NormPos,
    /// Per-axis speed estimate, normalized units per second.
    pub velocity_est: [f64; 3],
    pub last_ts_us: u64,
    pub deadzone_anchor: NormPos,
}

impl FilterState {
    /// Starts the filter at rest on `initial`.
    pub fn new(initial: NormPos, ts_us: u64) -> Self {
        Self {
            smoothed: initial,
            velocity_est: [0.0; 3],
            last_ts_us: ts_us,
            deadzone_anchor: initial,
        }
    }

    /// One step of the adaptive low-pass. Returns the filtered position.
    pub fn filter_update(&mut self, params: &FilterParams, raw: NormPos, ts_us: u64) -> Result<NormPos, StabilizerError> {
        if ts_us <= self.last_ts_us {
            return Err(StabilizerError::NonMonotoneTimestamp { ts_us, last_us: self.last_ts_us });
        }
        let dt = (ts_us - self.last_ts_us) as f64 * 1e-6;
        let a_d = smoothing_factor(params.dcutoff, dt);
        let prev: [f64; 3] = self.smoothed.into();
        let input: [f64; 3] = raw.into();
        let mut out = [0.0; 3];
        for axis in 0..3 {
            let speed = (input[axis] - prev[axis]) / dt;
            let v = a_d * speed + (1.0 - a_d) * self.velocity_est[axis];
            self.velocity_est[axis] = v;
            let fc = params.fc_min + params.beta * v.abs();
            let a = smoothing_factor(fc, dt);
            out[axis] = (a * input[axis] + (1.0 - a) * prev[axis]).clamp(0.0, 1.0);
        }
        self.smoothed = out.into();
        self.last_ts_us = ts_us;
        Ok(self.smoothed)
    }

    /// Holds the output at the anchor until the filtered point leaves the
    /// deadzone circle (x-y only), then re-anchors on it.
    pub fn apply_deadzone(&mut self, params: &FilterParams, filtered: NormPos) -> NormPos {
        if filtered.planar_distance(&self.deadzone_anchor) < params.r_dead {
            self.deadzone_anchor
        } else {
            self.deadzone_anchor = filtered;
            filtered
        }
    }
}

/// Filter plus deadzone for one cursor, started lazily on the first sample.
#[derive(Debug, Clone)]
pub struct Stabilizer {
    params: FilterParams,
    state: Option<FilterState>,
}

impl Stabilizer {
    pub fn new(params: FilterParams) -> Result<Self, StabilizerError> {
        params.validate()?;
        Ok(Self { params, state: None })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }

    /// Forgets all history; the next sample starts a fresh track.
    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn update(&mut self, raw: NormPos, ts_us: u64) -> Result<NormPos, StabilizerError> {
        match &mut self.state {
            None => {
                self.state = Some(FilterState::new(raw, ts_us));
                Ok(raw)
            }
            Some(state) => {
                let filtered = state.filter_update(&self.params, raw, ts_us)?;
                Ok(state.apply_deadzone(&self.params, filtered))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenGeometry {
    pub width_px: u32,
    pub height_px: u32,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self { width_px: 1920, height_px: 1080 }
    }
}

impl ScreenGeometry {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self, StabilizerError> {
        if width_px == 0 || height_px == 0 {
            return Err(StabilizerError::InvalidScreen);
        }
        Ok(Self { width_px, height_px })
    }

    pub fn clamp(&self, x: u32, y: u32) -> (u32, u32) {
        (x.min(self.width_px - 1), y.min(self.height_px - 1))
    }
}

/// Box x grows right and y grows up; screen y grows down. Rounds half-up.
pub fn map_to_screen(gated: NormPos, screen: ScreenGeometry) -> (u32, u32) {
    let scale = |v: f64, extent: u32| {
        let max = (extent - 1) as f64;
        (v.clamp(0.0, 1.0) * max + 0.5).floor().min(max) as u32
    };
    (scale(gated.x, screen.width_px), scale(1.0 - gated.y, screen.height_px))
}
