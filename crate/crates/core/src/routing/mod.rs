//! Routing agents. One [`Router`] runs on each node; the protocol variant
//! decides how requests are admitted, relayed and answered.
//!
//! Handlers never touch the medium directly: they return [`Action`]s that the
//! simulator turns into frames, timers and metric updates.

mod aodv;
mod mdr;
mod sqaodv;

pub use aodv::{better_route, RouteEntry, RouteKey, RouteState, INFINITE_HOPS};
pub use mdr::MdrConfig;
pub use sqaodv::{admit, choose_candidate, Admission, Candidate, DestCollector};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::des::SimTime;
use crate::energy::{Battery, DrainEstimator};
use crate::packet::{DataPacket, FlowKey, NodeId, Packet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Aodv,
    SqAodv,
    Mdr,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Aodv, Protocol::SqAodv, Protocol::Mdr];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::SqAodv => "sqaodv",
            Protocol::Mdr => "mdr",
        }
    }

    /// Routes keyed by flow rather than by destination.
    pub fn per_flow(self) -> bool {
        !matches!(self, Protocol::Aodv)
    }

    pub fn estimator(self) -> DrainEstimator {
        match self {
            Protocol::Mdr => DrainEstimator::MDR,
            _ => DrainEstimator::SQAODV,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aodv" => Ok(Protocol::Aodv),
            "sqaodv" | "sq-aodv" => Ok(Protocol::SqAodv),
            "mdr" => Ok(Protocol::Mdr),
            other => Err(format!("unknown protocol `{other}` (expected aodv, sqaodv or mdr)")),
        }
    }
}

/// Protocol timers and limits. Defaults follow common AODV practice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    pub rreq_retries: u32,
    pub rreq_timeout_s: f64,
    pub active_route_timeout_s: f64,
    pub reverse_route_lifetime_s: f64,
    pub local_repair: bool,
    pub local_repair_max_hops: u32,
    /// Upper bound of the uniform delay before relaying a broadcast request.
    pub rebroadcast_jitter_s: f64,
    pub dest_wait_s: f64,
    pub dest_max_candidates: usize,
    pub rcr_period_s: f64,
    pub mdr: MdrConfig,
    pub hello_enabled: bool,
    pub hello_interval_s: f64,
    pub allowed_hello_loss: u32,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            rreq_retries: 3,
            rreq_timeout_s: 2.0,
            active_route_timeout_s: 10.0,
            reverse_route_lifetime_s: 3.0,
            local_repair: true,
            local_repair_max_hops: 2,
            rebroadcast_jitter_s: 0.01,
            dest_wait_s: 0.25,
            dest_max_candidates: 3,
            rcr_period_s: 0.1,
            mdr: MdrConfig::default(),
            hello_enabled: false,
            hello_interval_s: 1.0,
            allowed_hello_loss: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropCause {
    QueueFull,
    NodeDead,
    NoRoute,
    RetriesExhausted,
    LinkBreak,
}

impl DropCause {
    pub const ALL: [DropCause; 5] = [
        DropCause::QueueFull,
        DropCause::NodeDead,
        DropCause::NoRoute,
        DropCause::RetriesExhausted,
        DropCause::LinkBreak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::QueueFull => "QUEUE_FULL",
            DropCause::NodeDead => "NODE_DEAD",
            DropCause::NoRoute => "NO_ROUTE",
            DropCause::RetriesExhausted => "RETRIES_EXHAUSTED",
            DropCause::LinkBreak => "LINK_BREAK",
        }
    }
}

/// Timers a router asks the simulator to arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    RreqRetry { key: RouteKey, broadcast_id: u32 },
    DestReply { flow: FlowKey, origin: NodeId, broadcast_id: u32 },
    MdrRefresh { flow: FlowKey },
    Hello,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Unicast { to: NodeId, packet: Packet },
    Broadcast { packet: Packet, jitter: bool },
    SetTimer { delay: f64, timer: Timer },
    /// Data packet reached its destination.
    Deliver(DataPacket),
    Drop { packet: DataPacket, cause: DropCause },
    /// Control packet discarded for lack of energy (admission control).
    EnergyReject { uid: u64 },
    /// Source stops generating traffic for the flow.
    StopSession(FlowKey),
    /// Make-before-break rediscovery gave up; the session ends.
    SessionFailed(FlowKey),
    /// Discovery at the source gave up; the session keeps trying later.
    RouteFailed(FlowKey),
    /// A route for a local flow became available at its source.
    RouteUp(FlowKey),
}

/// Read-only view of the hosting node handed to every handler.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub now: SimTime,
    pub battery: &'a Battery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscoveryKind {
    /// No usable route; data waits in the buffer.
    Demand,
    /// Intermediate node repairing a break close to the destination.
    LocalRepair,
    /// Source replacing a route through a draining node while still using it.
    MakeBeforeBreak,
    /// Periodic MDR refresh.
    Refresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingDiscovery {
    pub dst: NodeId,
    pub kind: DiscoveryKind,
    pub broadcast_id: u32,
    pub retries_used: u32,
    pub buffered: VecDeque<DataPacket>,
    pub rreq_timeout: SimTime,
}

/// Session bookkeeping at its source.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFlow {
    /// Expected end of the session, when the application knows it.
    pub declared_end: Option<SimTime>,
    pub active: bool,
    pub refresh_armed: bool,
}

#[derive(Debug, Clone)]
pub struct Router {
    pub(crate) id: NodeId,
    pub(crate) protocol: Protocol,
    pub(crate) cfg: RoutingConfig,
    pub(crate) seq: u32,
    pub(crate) broadcast_id: u32,
    pub(crate) routes: BTreeMap<RouteKey, RouteEntry>,
    pub(crate) seen: BTreeSet<(NodeId, u32)>,
    pub(crate) pending: BTreeMap<RouteKey, PendingDiscovery>,
    pub(crate) collectors: BTreeMap<FlowKey, DestCollector>,
    pub(crate) closed_discoveries: BTreeSet<(NodeId, u32)>,
    pub(crate) local_flows: BTreeMap<FlowKey, LocalFlow>,
    pub(crate) rcr_sent: bool,
    pub(crate) rcr_relayed: BTreeSet<(FlowKey, NodeId)>,
    pub(crate) last_rerr: BTreeMap<RouteKey, SimTime>,
    pub(crate) heard: BTreeMap<NodeId, SimTime>,
    pub(crate) hello_seq: u32,
}

impl Router {
    pub fn new(id: NodeId, protocol: Protocol, cfg: RoutingConfig) -> Router {
        Router {
            id,
            protocol,
            cfg,
            seq: 0,
            broadcast_id: 0,
            routes: BTreeMap::new(),
            seen: BTreeSet::new(),
            pending: BTreeMap::new(),
            collectors: BTreeMap::new(),
            closed_discoveries: BTreeSet::new(),
            local_flows: BTreeMap::new(),
            rcr_sent: false,
            rcr_relayed: BTreeSet::new(),
            last_rerr: BTreeMap::new(),
            heard: BTreeMap::new(),
            hello_seq: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.cfg
    }

    pub fn route(&self, key: &RouteKey) -> Option<&RouteEntry> {
        self.routes.get(key)
    }

    pub fn routes(&self) -> impl Iterator<Item = (&RouteKey, &RouteEntry)> {
        self.routes.iter()
    }

    pub fn pending(&self, key: &RouteKey) -> Option<&PendingDiscovery> {
        self.pending.get(key)
    }

    pub fn collector(&self, flow: &FlowKey) -> Option<&DestCollector> {
        self.collectors.get(flow)
    }

    pub fn rcr_sent(&self) -> bool {
        self.rcr_sent
    }

    /// Data packets parked in discovery buffers.
    pub fn buffered_packets(&self) -> impl Iterator<Item = &DataPacket> {
        self.pending.values().flat_map(|p| p.buffered.iter())
    }

    /// Key of the route a data packet of `flow` follows toward its destination.
    pub fn forward_key(&self, flow: FlowKey) -> RouteKey {
        self.key_toward(flow.dst, Some(flow))
    }

    pub(crate) fn key_toward(&self, target: NodeId, flow: Option<FlowKey>) -> RouteKey {
        RouteKey { target, flow: if self.protocol.per_flow() { flow } else { None } }
    }

    pub fn session_started(&mut self, flow: FlowKey, declared_end: Option<SimTime>) {
        self.local_flows.insert(flow, LocalFlow { declared_end, active: true, refresh_armed: false });
    }

    pub fn session_ended(&mut self, flow: FlowKey) {
        if let Some(f) = self.local_flows.get_mut(&flow) {
            f.active = false;
        }
    }

    pub(crate) fn flow_active(&self, flow: &FlowKey) -> bool {
        self.local_flows.get(flow).map(|f| f.active).unwrap_or(false)
    }

    /// Active local flows whose route is identified by `key`.
    pub(crate) fn local_flows_for(&self, key: &RouteKey) -> Vec<FlowKey> {
        match key.flow {
            Some(f) => {
                if f.src == self.id && self.flow_active(&f) {
                    vec![f]
                } else {
                    vec![]
                }
            }
            None => self
                .local_flows
                .iter()
                .filter(|(f, lf)| lf.active && f.dst == key.target)
                .map(|(f, _)| *f)
                .collect(),
        }
    }

    /// The node went dark: hand back everything still buffered.
    pub fn on_death(&mut self) -> Vec<DataPacket> {
        let mut out = Vec::new();
        for (_, p) in std::mem::take(&mut self.pending) {
            out.extend(p.buffered);
        }
        for f in self.local_flows.values_mut() {
            f.active = false;
        }
        out
    }

    /// Records that a frame from `from` was heard (used by HELLO maintenance).
    pub fn heard_from(&mut self, from: NodeId, now: SimTime) {
        if self.cfg.hello_enabled {
            self.heard.insert(from, now);
        }
    }

    pub fn timer(&mut self, view: &NodeView, timer: Timer) -> Vec<Action> {
        match timer {
            Timer::RreqRetry { key, broadcast_id } => self.rreq_timeout(view, key, broadcast_id),
            Timer::DestReply { flow, origin, broadcast_id } => self.dest_reply_due(view, flow, origin, broadcast_id),
            Timer::MdrRefresh { flow } => self.periodic_refresh(view, flow),
            Timer::Hello => self.hello_tick(view),
        }
    }
}
