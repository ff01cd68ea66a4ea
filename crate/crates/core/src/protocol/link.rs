//! Deterministic lossy-link model: drop, fixed delay, uniform jitter and a
//! byte-rate cap with FIFO delivery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub delay_ms: f64,
    /// Upper bound of the uniform extra delay.
    pub jitter_ms: f64,
    pub drop_prob: f64,
    /// Bytes per second; 0 means unlimited.
    pub bandwidth_bps: u64,
    pub seed: u64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { delay_ms: 0.0, jitter_ms: 0.0, drop_prob: 0.0, bandwidth_bps: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid link parameters: {0}")]
pub struct InvalidLink(String);

impl LinkParams {
    pub fn validate(&self) -> Result<(), InvalidLink> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(InvalidLink(format!("drop_prob {} outside [0, 1]", self.drop_prob)));
        }
        if !(self.delay_ms.is_finite() && self.delay_ms >= 0.0) {
            return Err(InvalidLink("delay_ms must be non-negative".into()));
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return Err(InvalidLink("jitter_ms must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Deliver {
        /// When the link finishes putting the message on the wire; the next
        /// message cannot start before this.
        tx_done_us: u64,
        deliver_at_us: u64,
    },
    Dropped,
}

impl Delivery {
    pub fn deliver_at(&self) -> Option<u64> {
        match self {
            Delivery::Deliver { deliver_at_us, .. } => Some(*deliver_at_us),
            Delivery::Dropped => None,
        }
    }
}

/// One direction of one link. Single owner; schedule messages in send order.
#[derive(Debug, Clone)]
pub struct LinkSim {
    params: LinkParams,
    rng: ChaCha8Rng,
    busy_until_us: u64,
    last_delivery_us: u64,
    outages: Vec<(u64, u64)>,
}

impl LinkSim {
    pub fn new(params: LinkParams) -> Result<Self, InvalidLink> {
        params.validate()?;
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            busy_until_us: 0,
            last_delivery_us: 0,
            outages: Vec::new(),
        })
    }

    /// Drops every message sent in `[start_us, end_us)`.
    pub fn with_outage(mut self, start_us: u64, end_us: u64) -> Self {
        self.outages.push((start_us, end_us));
        self
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    /// Schedules a message of `len_bytes` offered to the link at `now_us`.
    pub fn transmit(&mut self, len_bytes: usize, now_us: u64) -> Delivery {
        // Draw both variates every time so the random stream depends only on
        // the number of messages, not on which ones were dropped.
        let drop_draw: f64 = self.rng.random();
        let jitter_draw: f64 = self.rng.random();

        let in_outage = self.outages.iter().any(|&(a, b)| (a..b).contains(&now_us));
        if in_outage || drop_draw < self.params.drop_prob {
            return Delivery::Dropped;
        }
        let start = now_us.max(self.busy_until_us);
        let tx_us = match self.params.bandwidth_bps {
            0 => 0,
            bps => (len_bytes as u64 * 1_000_000).div_ceil(bps),
        };
        let tx_done_us = start + tx_us;
        self.busy_until_us = tx_done_us;

        let extra_us = (self.params.delay_ms + jitter_draw * self.params.jitter_ms) * 1e3;
        let deliver_at_us = (tx_done_us + extra_us.round() as u64).max(self.last_delivery_us);
        self.last_delivery_us = deliver_at_us;
        Delivery::Deliver { tx_done_us, deliver_at_us }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_drop_delivers_nothing() {
        let mut l = LinkSim::new(LinkParams { drop_prob: 1.0, ..Default::default() }).unwrap();
        assert!((0..1000).all(|k| l.transmit(60, k * 1000) == Delivery::Dropped));
    }

    #[test]
    fn fixed_delay_is_exact() {
        let mut l = LinkSim::new(LinkParams { delay_ms: 50.0, ..Default::default() }).unwrap();
        for k in 0..100 {
            assert_eq!(l.transmit(60, k * 8333).deliver_at(), Some(k * 8333 + 50_000));
        }
    }

    #[test]
    fn jitter_never_reorders() {
        let mut l = LinkSim::new(LinkParams { delay_ms: 5.0, jitter_ms: 40.0, seed: 9, ..Default::default() }).unwrap();
        let mut last = 0;
        for k in 0..2000 {
            let at = l.transmit(60, k * 1000).deliver_at().unwrap();
            assert!(at >= last);
            assert!(at >= k * 1000 + 5000 && at <= k * 1000 + 45_000 || at == last);
            last = at;
        }
    }

    #[test]
    fn outage_window_drops() {
        let mut l = LinkSim::new(LinkParams::default()).unwrap().with_outage(1000, 2000);
        assert!(l.transmit(10, 999).deliver_at().is_some());
        assert_eq!(l.transmit(10, 1000), Delivery::Dropped);
        assert_eq!(l.transmit(10, 1999), Delivery::Dropped);
        assert!(l.transmit(10, 2000).deliver_at().is_some());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LinkSim::new(LinkParams { drop_prob: 1.5, ..Default::default() }).is_err());
        assert!(LinkSim::new(LinkParams { delay_ms: -1.0, ..Default::default() }).is_err());
    }
}
