//! Range-based wireless transport.
//!
//! `Ideal` delivers every frame to every in-range node exactly
//! `per_hop_latency` after it is sent. `Shared` adds a single shared channel:
//! a node defers while any neighbor is on the air, frames occupy the channel
//! for their airtime at `bitrate_bps`, and a reception fails when another
//! in-range transmission overlaps it (hidden terminals, half duplex).

use crate::error::ConfigError;
use crate::topology::{Adjacency, NodeId};

use super::event::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    Ideal,
    Shared,
}

impl ChannelModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelModel::Ideal => "ideal",
            ChannelModel::Shared => "shared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ideal" => Some(ChannelModel::Ideal),
            "shared" => Some(ChannelModel::Shared),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportModel {
    /// seconds, used by the ideal channel
    pub per_hop_latency: f64,
    pub loss_probability: f64,
    pub channel: ChannelModel,
    pub bitrate_bps: f64,
    /// Fixed per-frame preamble time, seconds.
    pub phy_overhead: f64,
    pub control_bytes: usize,
    pub data_header_bytes: usize,
    /// Upper bound of the uniform delay before a broadcast relay contends.
    pub relay_jitter: f64,
}

impl Default for TransportModel {
    fn default() -> Self {
        Self {
            per_hop_latency: 0.002,
            loss_probability: 0.0,
            channel: ChannelModel::Ideal,
            bitrate_bps: 2_000_000.0,
            phy_overhead: 192e-6,
            control_bytes: 48,
            data_header_bytes: 28,
            relay_jitter: 0.0,
        }
    }
}

impl TransportModel {
    /// Shared-channel transport with carrier sense and relay jitter.
    pub fn shared() -> Self {
        Self { channel: ChannelModel::Shared, relay_jitter: 0.01, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.per_hop_latency > 0.0 && self.per_hop_latency.is_finite()) {
            return Err(ConfigError::invalid("transport.per_hop_latency", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(ConfigError::invalid("transport.loss_probability", "must lie in [0, 1]"));
        }
        if !(self.bitrate_bps > 0.0 && self.bitrate_bps.is_finite()) {
            return Err(ConfigError::invalid("transport.bitrate", "must be > 0"));
        }
        if !(self.phy_overhead >= 0.0) {
            return Err(ConfigError::invalid("transport.phy_overhead", "must be >= 0"));
        }
        if !(self.relay_jitter >= 0.0) {
            return Err(ConfigError::invalid("transport.relay_jitter", "must be >= 0"));
        }
        Ok(())
    }

    pub fn airtime(&self, bytes: usize) -> SimTime {
        SimTime::from_secs(self.phy_overhead + (bytes * 8) as f64 / self.bitrate_bps)
    }
}

#[derive(Debug, Clone, Copy)]
struct OnAir {
    frame: u64,
    sender: NodeId,
    start: SimTime,
    end: SimTime,
}

/// Channel occupancy bookkeeping for the shared model.
#[derive(Debug, Clone)]
pub struct Channel {
    busy_until: Vec<SimTime>,
    on_air: Vec<OnAir>,
    longest: SimTime,
}

impl Channel {
    pub fn new(n: usize) -> Self {
        Self { busy_until: vec![SimTime::ZERO; n], on_air: Vec::new(), longest: SimTime::ZERO }
    }

    /// Reserves the earliest slot at or after `now` for `sender`; returns
    /// (start, end).
    pub fn reserve(
        &mut self,
        frame: u64,
        sender: NodeId,
        now: SimTime,
        airtime: SimTime,
        adj: &Adjacency,
    ) -> (SimTime, SimTime) {
        let start = now.max(self.busy_until[sender.index()]);
        let end = start + airtime;
        self.busy_until[sender.index()] = end;
        for &j in adj.neighbors(sender) {
            let b = &mut self.busy_until[j.index()];
            *b = (*b).max(end);
        }
        self.longest = self.longest.max(airtime);
        self.on_air.push(OnAir { frame, sender, start, end });
        (start, end)
    }

    /// Whether `receiver` hears frame `frame` (sent by `sender` over
    /// `[start, end)`) without an overlapping transmission in its range.
    pub fn clean_reception(
        &self,
        frame: u64,
        sender: NodeId,
        start: SimTime,
        end: SimTime,
        receiver: NodeId,
        adj: &Adjacency,
    ) -> bool {
        !self.on_air.iter().any(|o| {
            o.frame != frame
                && o.sender != sender
                && o.start < end
                && start < o.end
                && (o.sender == receiver || adj.are_linked(o.sender, receiver))
        })
    }

    /// Drops frames that can no longer overlap anything delivered at or after `now`.
    pub fn prune(&mut self, now: SimTime) {
        let horizon = now.saturating_sub(self.longest);
        self.on_air.retain(|o| o.end > horizon);
    }
}
