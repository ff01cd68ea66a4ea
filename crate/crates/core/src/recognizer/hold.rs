use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldConfig {
    /// Extended fingers needed to start a hold (open hand).
    pub open_min: usize,
    /// Extended fingers at or below which a hold is released (fist).
    pub fist_max: usize,
    pub sustain_ms: f64,
}

impl Default for HoldConfig {
    fn default() -> Self {
        Self { open_min: 4, fist_max: 1, sustain_ms: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HoldTransition {
    Start,
    End,
}

/// Sustain timer for the open-hand / fist conditions.
#[derive(Debug, Clone)]
pub(crate) struct HoldDetector {
    cfg: HoldConfig,
    since_us: Option<u64>,
}

impl HoldDetector {
    pub(crate) fn new(cfg: HoldConfig) -> Self {
        Self { cfg, since_us: None }
    }

    pub(crate) fn reset(&mut self) {
        self.since_us = None;
    }

    pub(crate) fn update(&mut self, ts_us: u64, extended: usize, holding: bool) -> Option<HoldTransition> {
        let armed = if holding {
            extended <= self.cfg.fist_max
        } else {
            extended >= self.cfg.open_min
        };
        if !armed {
            self.since_us = None;
            return None;
        }
        let since = *self.since_us.get_or_insert(ts_us);
        if (ts_us - since) as f64 >= self.cfg.sustain_ms * 1e3 {
            self.since_us = None;
            Some(if holding { HoldTransition::End } else { HoldTransition::Start })
        } else {
            None
        }
    }
}
