//! Session traffic sources: constant bit rate and Poisson arrivals of
//! fixed-size data packets.

use std::fmt;

use crate::des::RngStream;
use crate::error::{contract, Result};
use crate::medium::DATA_PAYLOAD_BYTES;
use crate::packet::FlowKey;

/// Aggregate offered load treated as 100 %, in kilobits per second.
pub const FULL_LOAD_KBPS: f64 = 225.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficKind {
    Cbr { pkts_per_s: f64 },
    /// Mean rate in kilobits (1000 bit) of payload per second.
    Poisson { rate_kbps: f64 },
}

impl TrafficKind {
    pub fn mean_interval(&self) -> f64 {
        match *self {
            TrafficKind::Cbr { pkts_per_s } => 1.0 / pkts_per_s,
            TrafficKind::Poisson { rate_kbps } => (8 * DATA_PAYLOAD_BYTES) as f64 / (rate_kbps * 1000.0),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let v = match *self {
            TrafficKind::Cbr { pkts_per_s } => pkts_per_s,
            TrafficKind::Poisson { rate_kbps } => rate_kbps,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(format!("traffic rate must be positive, got {v}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketCount {
    Finite(u64),
    /// Generate until the simulation ends.
    Open,
}

impl fmt::Display for PacketCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PacketCount::Finite(n) => write!(f, "{n}"),
            PacketCount::Open => f.write_str("open"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartSpec {
    At(f64),
    /// Drawn once per run from the scenario stream.
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSpec {
    pub flow: FlowKey,
    pub kind: TrafficKind,
    pub packets: PacketCount,
    pub start: StartSpec,
    /// Tell the routing layer how long the session is expected to last.
    pub declare_duration: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Waiting,
    Active,
    /// Every packet was generated.
    Completed,
    /// Ended early; carries the reason.
    Ceased(CeaseReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CeaseReason {
    Stopped,
    RouteLost,
    SourceDead,
}

impl CeaseReason {
    pub fn as_str(self) -> &'static str {
        match self {
            CeaseReason::Stopped => "STOPPED",
            CeaseReason::RouteLost => "NO_ROUTE",
            CeaseReason::SourceDead => "SOURCE_DEAD",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub spec: SessionSpec,
    pub start: f64,
    pub generated: u64,
    pub state: SessionState,
    rng: RngStream,
}

impl Session {
    pub fn new(spec: SessionSpec, start: f64, rng: RngStream) -> Result<Session> {
        if let Err(e) = spec.kind.validate() {
            return contract(e);
        }
        if !(start >= 0.0) {
            return contract(format!("session {} starts at negative time {start}", spec.flow));
        }
        Ok(Session { spec, start, generated: 0, state: SessionState::Waiting, rng })
    }

    pub fn flow(&self) -> FlowKey {
        self.spec.flow
    }

    pub fn is_running(&self) -> bool {
        matches!(self.state, SessionState::Waiting | SessionState::Active)
    }

    pub fn remaining(&self) -> Option<u64> {
        match self.spec.packets {
            PacketCount::Finite(n) => Some(n.saturating_sub(self.generated)),
            PacketCount::Open => None,
        }
    }

    /// Gap to the next arrival: exact for CBR, exponential for Poisson.
    pub fn next_arrival(&mut self) -> Result<f64> {
        match self.spec.kind {
            TrafficKind::Cbr { .. } => Ok(self.spec.kind.mean_interval()),
            TrafficKind::Poisson { .. } => self.rng.exponential(self.spec.kind.mean_interval()),
        }
    }

    /// Expected end time handed to the routing layer, if declared.
    /// Open sessions run until `horizon`.
    pub fn declared_end(&self, horizon: Option<f64>) -> Option<f64> {
        if !self.spec.declare_duration {
            return None;
        }
        match self.spec.packets {
            PacketCount::Finite(n) => Some(self.start + n as f64 * self.spec.kind.mean_interval()),
            PacketCount::Open => horizon,
        }
    }

    /// Packets that would still have been generated before `horizon` had the session not ended at `now`.
    pub fn unsent(&self, now: f64, horizon: Option<f64>) -> u64 {
        match self.spec.packets {
            PacketCount::Finite(n) => n.saturating_sub(self.generated),
            PacketCount::Open => match horizon {
                Some(h) if h > now => ((h - now) / self.spec.kind.mean_interval()).floor() as u64,
                _ => 0,
            },
        }
    }
}
