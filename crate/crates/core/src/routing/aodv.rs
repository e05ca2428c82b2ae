//! Route table and the AODV machinery shared by all three protocols:
//! request flooding with duplicate suppression, reverse/forward route set-up,
//! route errors, local repair and buffering during discovery.

use std::collections::{BTreeSet, VecDeque};

use super::{Action, DiscoveryKind, DropCause, NodeView, PendingDiscovery, Protocol, Router, Timer};
use crate::des::SimTime;
use crate::energy::LIFETIME_CAP;
use crate::packet::{
    DataPacket, DurationField, FlowKey, Hello, NodeId, Packet, Rerr, Rrep, RrepFlowExt, Rreq, RreqFlowExt,
    Unreachable,
};

/// Hop count of a route that has been invalidated.
pub const INFINITE_HOPS: u32 = 255;
/// Data packets a node will hold while a discovery is running.
const DISCOVERY_BUFFER: usize = 64;
/// Minimum spacing of route errors sent for the same route.
const RERR_HOLDOFF_S: f64 = 1.0;

/// Destination-based routes use `flow: None`; per-flow routes carry the flow
/// they belong to, with `target` being either its destination (forward) or
/// its source (reverse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouteKey {
    pub target: NodeId,
    pub flow: Option<FlowKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteState {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dst_seq: u32,
    pub state: RouteState,
    pub expiry: SimTime,
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn new(next_hop: NodeId, hop_count: u32, dst_seq: u32, expiry: SimTime) -> RouteEntry {
        RouteEntry { next_hop, hop_count, dst_seq, state: RouteState::Up, expiry, precursors: BTreeSet::new() }
    }

    pub fn is_valid(&self, now: SimTime) -> bool {
        self.state == RouteState::Up && self.expiry >= now
    }
}

/// Picks between a stored route and a newly learned one: higher destination
/// sequence number wins, then fewer hops; a full tie keeps the incumbent.
pub fn better_route<'a>(incumbent: &'a RouteEntry, candidate: &'a RouteEntry) -> &'a RouteEntry {
    if candidate.dst_seq > incumbent.dst_seq
        || (candidate.dst_seq == incumbent.dst_seq && candidate.hop_count < incumbent.hop_count)
    {
        candidate
    } else {
        incumbent
    }
}

impl Router {
    pub(crate) fn valid_route(&self, key: &RouteKey, now: SimTime) -> Option<&RouteEntry> {
        self.routes.get(key).filter(|e| e.is_valid(now))
    }

    /// Installs `cand` if it beats what is stored. Returns true when the
    /// table now holds `cand`'s next hop for the key.
    pub(crate) fn offer_route(&mut self, key: RouteKey, cand: RouteEntry, now: SimTime) -> bool {
        match self.routes.get_mut(&key) {
            None => {
                self.routes.insert(key, cand);
                true
            }
            Some(e) => {
                let take = if e.is_valid(now) {
                    std::ptr::eq(better_route(e, &cand), &cand)
                } else {
                    cand.dst_seq >= e.dst_seq
                };
                if take {
                    let precursors = std::mem::take(&mut e.precursors);
                    *e = cand;
                    e.precursors = precursors;
                    true
                } else if e.next_hop == cand.next_hop && e.dst_seq == cand.dst_seq && e.is_valid(now) {
                    e.expiry = e.expiry.max(cand.expiry);
                    true
                } else {
                    false
                }
            }
        }
    }

    fn touch(&mut self, key: &RouteKey, until: SimTime) {
        if let Some(e) = self.routes.get_mut(key) {
            if e.state == RouteState::Up {
                e.expiry = e.expiry.max(until);
            }
        }
    }

    fn invalidate(&mut self, key: &RouteKey) -> Option<(u32, u32, bool)> {
        let e = self.routes.get_mut(key)?;
        let hops = e.hop_count;
        e.state = RouteState::Down;
        e.dst_seq = e.dst_seq.wrapping_add(1);
        e.hop_count = INFINITE_HOPS;
        Some((hops, e.dst_seq, !e.precursors.is_empty()))
    }

    /// Entry point for every frame addressed to (or overheard broadcast by) this node.
    pub fn receive(&mut self, view: &NodeView, from: NodeId, packet: Packet) -> Vec<Action> {
        match packet {
            Packet::Data(d) => self.recv_data(view, from, d),
            Packet::Rreq(r) => self.recv_rreq(view, from, r),
            Packet::Rrep(r) if r.is_rcr() => self.recv_rcr(view, from, r),
            Packet::Rrep(r) => self.recv_rrep(view, from, r),
            Packet::Rerr(r) => self.recv_rerr(view, from, r),
            Packet::StopTraffic(s) => self.recv_stop(view, from, s),
            Packet::Hello(_) => vec![],
        }
    }

    /// A locally generated data packet.
    pub fn originate_data(&mut self, view: &NodeView, pkt: DataPacket) -> Vec<Action> {
        let key = self.forward_key(pkt.flow);
        if self.valid_route(&key, view.now).is_some() {
            return self.forward_data(view, pkt);
        }
        let mut acts = Vec::new();
        if !self.pending.contains_key(&key) {
            acts.extend(self.start_discovery(view, key, DiscoveryKind::Demand));
        }
        acts.extend(self.buffer(key, pkt));
        acts
    }

    fn buffer(&mut self, key: RouteKey, pkt: DataPacket) -> Option<Action> {
        let p = self.pending.get_mut(&key).expect("discovery running");
        if p.buffered.len() >= DISCOVERY_BUFFER {
            return Some(Action::Drop { packet: pkt, cause: DropCause::QueueFull });
        }
        p.buffered.push_back(pkt);
        None
    }

    fn forward_data(&mut self, view: &NodeView, pkt: DataPacket) -> Vec<Action> {
        let key = self.forward_key(pkt.flow);
        let until = view.now.after(self.cfg.active_route_timeout_s);
        let Some(next) = self.valid_route(&key, view.now).map(|e| e.next_hop) else {
            return vec![Action::Drop { packet: pkt, cause: DropCause::NoRoute }];
        };
        self.touch(&key, until);
        let rev = self.key_toward(pkt.flow.src, Some(pkt.flow));
        self.touch(&rev, until);
        vec![Action::Unicast { to: next, packet: Packet::Data(pkt) }]
    }

    fn recv_data(&mut self, view: &NodeView, _from: NodeId, mut pkt: DataPacket) -> Vec<Action> {
        pkt.hops += 1;
        if pkt.flow.dst == self.id {
            let rev = self.key_toward(pkt.flow.src, Some(pkt.flow));
            self.touch(&rev, view.now.after(self.cfg.active_route_timeout_s));
            return vec![Action::Deliver(pkt)];
        }
        let key = self.forward_key(pkt.flow);
        if self.valid_route(&key, view.now).is_some() {
            return self.forward_data(view, pkt);
        }
        if self.pending.contains_key(&key) {
            return self.buffer(key, pkt).into_iter().collect();
        }
        let mut acts = vec![Action::Drop { packet: pkt, cause: DropCause::NoRoute }];
        let holdoff = self.last_rerr.get(&key).is_some_and(|t| view.now.as_secs() - t.as_secs() < RERR_HOLDOFF_S);
        if !holdoff {
            let seq = self.routes.get(&key).map(|e| e.dst_seq).unwrap_or(0);
            acts.extend(self.route_errors(view.now, &[(key, seq)]));
        }
        acts
    }

    /// Builds route-error broadcasts for the given `(key, sequence)` pairs.
    fn route_errors(&mut self, now: SimTime, keys: &[(RouteKey, u32)]) -> Vec<Action> {
        let mut acts = Vec::new();
        let mut base = Vec::new();
        for &(key, seq) in keys {
            self.last_rerr.insert(key, now);
            let u = Unreachable { dst: key.target, dst_seq: seq };
            match key.flow {
                None => base.push(u),
                Some(f) if f.dst == key.target => acts.push(Action::Broadcast {
                    packet: Packet::Rerr(Rerr { uid: 0, unreachable: vec![u], flow: Some((f.src, f.fid)) }),
                    jitter: false,
                }),
                Some(_) => {}
            }
        }
        if !base.is_empty() {
            acts.push(Action::Broadcast { packet: Packet::Rerr(Rerr { uid: 0, unreachable: base, flow: None }), jitter: false });
        }
        acts
    }

    fn recv_rreq(&mut self, view: &NodeView, from: NodeId, mut r: Rreq) -> Vec<Action> {
        if r.src == self.id {
            return vec![];
        }
        let per_flow = self.protocol.per_flow();
        let flow = r.flow_key();
        if per_flow != flow.is_some() {
            return vec![];
        }
        if per_flow && r.dst == self.id {
            return self.dest_collect(view, from, r);
        }
        if !self.seen.insert((r.src, r.broadcast_id)) {
            return vec![];
        }
        if self.protocol == Protocol::SqAodv {
            let dur = r.flow.map(|f| f.session_duration).unwrap_or(DurationField::Unknown);
            if super::admit(view.battery.residual_j(), view.battery.aedr_w(), dur) == super::Admission::Reject {
                return vec![Action::EnergyReject { uid: r.uid }];
            }
        }
        let rev_key = self.key_toward(r.src, flow);
        let rev = RouteEntry::new(from, r.hop_count + 1, r.src_seq, view.now.after(self.cfg.reverse_route_lifetime_s));
        self.offer_route(rev_key, rev, view.now);

        if !per_flow {
            if r.dst == self.id {
                self.seq = self.seq.max(r.dst_seq);
                let rrep = Rrep {
                    uid: 0,
                    hop_count: 0,
                    dst: self.id,
                    dst_seq: self.seq,
                    src: r.src,
                    lifetime_s: self.cfg.active_route_timeout_s,
                    timestamp: view.now,
                    flow: None,
                };
                return vec![Action::Unicast { to: from, packet: Packet::Rrep(rrep) }];
            }
            let fwd_key = self.key_toward(r.dst, None);
            if let Some(e) = self.valid_route(&fwd_key, view.now) {
                if e.dst_seq >= r.dst_seq {
                    let (hops, seq, next, expiry) = (e.hop_count, e.dst_seq, e.next_hop, e.expiry);
                    if let Some(f) = self.routes.get_mut(&fwd_key) {
                        f.precursors.insert(from);
                    }
                    if let Some(b) = self.routes.get_mut(&rev_key) {
                        b.precursors.insert(next);
                    }
                    let rrep = Rrep {
                        uid: 0,
                        hop_count: hops,
                        dst: r.dst,
                        dst_seq: seq,
                        src: r.src,
                        lifetime_s: (expiry.as_secs() - view.now.as_secs()).max(0.0),
                        timestamp: view.now,
                        flow: None,
                    };
                    return vec![Action::Unicast { to: from, packet: Packet::Rrep(rrep) }];
                }
            }
            // a node still routing to the destination may sit upstream of the repairer
            if r.repair && self.valid_route(&fwd_key, view.now).is_some() {
                return vec![];
            }
            if let Some(e) = self.routes.get(&fwd_key) {
                r.dst_seq = r.dst_seq.max(e.dst_seq);
            }
        }
        if r.hop_count + 1 >= INFINITE_HOPS {
            return vec![];
        }
        r.hop_count += 1;
        if let Some(ext) = r.flow.as_mut() {
            ext.bottleneck = ext.bottleneck.min(view.battery.lifetime());
        }
        vec![Action::Broadcast { packet: Packet::Rreq(r), jitter: true }]
    }

    fn recv_rrep(&mut self, view: &NodeView, from: NodeId, r: Rrep) -> Vec<Action> {
        let flow = r.flow_key();
        if self.protocol.per_flow() != flow.is_some() {
            return vec![];
        }
        let fwd_key = self.key_toward(r.dst, flow);
        let lifetime = if r.lifetime_s > 0.0 { r.lifetime_s } else { self.cfg.active_route_timeout_s };
        let cand = RouteEntry::new(from, r.hop_count + 1, r.dst_seq, view.now.after(lifetime));
        let installed = self.offer_route(fwd_key, cand, view.now);
        if r.src == self.id {
            return if installed { self.discovery_complete(view, fwd_key) } else { vec![] };
        }
        let rev_key = self.key_toward(r.src, flow);
        let Some(next) = self.valid_route(&rev_key, view.now).map(|e| e.next_hop) else {
            return vec![];
        };
        if let Some(e) = self.routes.get_mut(&fwd_key) {
            e.precursors.insert(next);
        }
        let until = view.now.after(self.cfg.active_route_timeout_s);
        if let Some(e) = self.routes.get_mut(&rev_key) {
            e.precursors.insert(from);
            e.expiry = e.expiry.max(until);
        }
        let mut out = r;
        out.hop_count += 1;
        vec![Action::Unicast { to: next, packet: Packet::Rrep(out) }]
    }

    /// A route for `key` became usable: flush the buffer and tell the source's session.
    pub(crate) fn discovery_complete(&mut self, view: &NodeView, key: RouteKey) -> Vec<Action> {
        let mut acts = Vec::new();
        if let Some(p) = self.pending.remove(&key) {
            for pkt in p.buffered {
                acts.extend(self.forward_data(view, pkt));
            }
        }
        for f in self.local_flows_for(&key) {
            acts.push(Action::RouteUp(f));
            acts.extend(self.arm_refresh(f));
        }
        acts
    }

    fn recv_rerr(&mut self, view: &NodeView, from: NodeId, rerr: Rerr) -> Vec<Action> {
        let per_flow = self.protocol.per_flow();
        let mut propagate = Vec::new();
        for u in &rerr.unreachable {
            let key = match rerr.flow {
                Some((src, fid)) if per_flow => RouteKey { target: u.dst, flow: Some(FlowKey { src, dst: u.dst, fid }) },
                None if !per_flow => RouteKey { target: u.dst, flow: None },
                _ => continue,
            };
            let Some(e) = self.routes.get_mut(&key) else { continue };
            if e.state != RouteState::Up || e.next_hop != from {
                continue;
            }
            e.state = RouteState::Down;
            e.hop_count = INFINITE_HOPS;
            e.dst_seq = e.dst_seq.max(u.dst_seq);
            if !e.precursors.is_empty() {
                propagate.push(Unreachable { dst: u.dst, dst_seq: e.dst_seq });
            }
        }
        let _ = view;
        if propagate.is_empty() {
            return vec![];
        }
        vec![Action::Broadcast { packet: Packet::Rerr(Rerr { uid: 0, unreachable: propagate, flow: rerr.flow }), jitter: false }]
    }

    /// Unicast to `lost` failed. `packet` is the frame that could not be delivered, if any.
    pub fn link_failed(&mut self, view: &NodeView, packet: Option<Packet>, lost: NodeId) -> Vec<Action> {
        let broken: Vec<RouteKey> = self
            .routes
            .iter()
            .filter(|(_, e)| e.state == RouteState::Up && e.next_hop == lost)
            .map(|(k, _)| *k)
            .collect();
        let mut acts = Vec::new();
        let mut errors = Vec::new();
        let data = match packet {
            Some(Packet::Data(d)) => Some(d),
            _ => None,
        };
        let data_key = data.as_ref().map(|d| self.forward_key(d.flow));
        for key in &broken {
            let Some((hops, seq, precursors)) = self.invalidate(key) else { continue };
            let at_source = !self.local_flows_for(key).is_empty();
            let repair = Some(*key) == data_key
                && !at_source
                && self.protocol == Protocol::Aodv
                && self.cfg.local_repair
                && hops <= self.cfg.local_repair_max_hops;
            if repair {
                acts.extend(self.start_discovery(view, *key, DiscoveryKind::LocalRepair));
            } else if precursors {
                errors.push((*key, seq));
            }
        }
        acts.extend(self.route_errors(view.now, &errors));
        if let (Some(pkt), Some(key)) = (data, data_key) {
            let repairing = matches!(self.pending.get(&key), Some(p) if p.kind == DiscoveryKind::LocalRepair);
            if repairing {
                acts.extend(self.buffer(key, pkt));
            } else {
                acts.push(Action::Drop { packet: pkt, cause: DropCause::LinkBreak });
            }
        }
        acts
    }

    /// Begins a discovery for `key` unless one is already running. A running
    /// periodic refresh is upgraded in place when a more urgent reason appears.
    pub(crate) fn start_discovery(&mut self, view: &NodeView, key: RouteKey, kind: DiscoveryKind) -> Vec<Action> {
        if let Some(p) = self.pending.get_mut(&key) {
            if p.kind == DiscoveryKind::Refresh && kind != DiscoveryKind::Refresh {
                p.kind = kind;
            }
            return vec![];
        }
        self.pending.insert(
            key,
            PendingDiscovery {
                dst: key.target,
                kind,
                broadcast_id: 0,
                retries_used: 0,
                buffered: VecDeque::new(),
                rreq_timeout: view.now,
            },
        );
        self.emit_rreq(view, key)
    }

    /// Sends a fresh request for the pending discovery on `key` and arms its timeout.
    pub(crate) fn emit_rreq(&mut self, view: &NodeView, key: RouteKey) -> Vec<Action> {
        self.broadcast_id = self.broadcast_id.wrapping_add(1);
        self.seq = self.seq.wrapping_add(1);
        let bid = self.broadcast_id;
        self.seen.insert((self.id, bid));
        let dst_seq = self.routes.get(&key).map(|e| e.dst_seq).unwrap_or(0);
        let ext = key.flow.map(|f| RreqFlowExt {
            flow_id: f.fid,
            session_duration: match self.protocol {
                Protocol::SqAodv => match self.local_flows.get(&f).and_then(|lf| lf.declared_end) {
                    Some(end) => DurationField::Known((end.as_secs() - view.now.as_secs()).max(0.0)),
                    None => DurationField::Unknown,
                },
                _ => DurationField::NotCarried,
            },
            bottleneck: LIFETIME_CAP,
        });
        let timeout = self.cfg.rreq_timeout_s;
        let p = self.pending.get_mut(&key).expect("discovery registered");
        p.broadcast_id = bid;
        p.rreq_timeout = view.now.after(timeout);
        let rreq = Rreq {
            uid: 0,
            hop_count: 0,
            broadcast_id: bid,
            dst: key.target,
            dst_seq,
            src: self.id,
            src_seq: self.seq,
            repair: p.kind == DiscoveryKind::LocalRepair,
            flow: ext,
        };
        vec![
            Action::Broadcast { packet: Packet::Rreq(rreq), jitter: false },
            Action::SetTimer { delay: timeout, timer: Timer::RreqRetry { key, broadcast_id: bid } },
        ]
    }

    pub(crate) fn rreq_timeout(&mut self, view: &NodeView, key: RouteKey, bid: u32) -> Vec<Action> {
        let Some(p) = self.pending.get(&key) else { return vec![] };
        if p.broadcast_id != bid {
            return vec![];
        }
        if self.valid_route(&key, view.now).is_some() && p.kind != DiscoveryKind::MakeBeforeBreak && p.kind != DiscoveryKind::Refresh {
            return self.discovery_complete(view, key);
        }
        if p.kind == DiscoveryKind::Refresh && p.buffered.is_empty() {
            self.pending.remove(&key);
            return vec![];
        }
        if p.retries_used < self.cfg.rreq_retries {
            self.pending.get_mut(&key).expect("present").retries_used += 1;
            return self.emit_rreq(view, key);
        }
        let p = self.pending.remove(&key).expect("present");
        let mut acts: Vec<Action> = p
            .buffered
            .into_iter()
            .map(|packet| Action::Drop { packet, cause: DropCause::RetriesExhausted })
            .collect();
        let flows = self.local_flows_for(&key);
        match p.kind {
            DiscoveryKind::MakeBeforeBreak => acts.extend(flows.into_iter().map(Action::SessionFailed)),
            DiscoveryKind::LocalRepair => {
                let seq = self.routes.get(&key).map(|e| e.dst_seq).unwrap_or(0);
                acts.extend(self.route_errors(view.now, &[(key, seq)]));
            }
            DiscoveryKind::Demand | DiscoveryKind::Refresh => acts.extend(flows.into_iter().map(Action::RouteFailed)),
        }
        acts
    }

    pub(crate) fn hello_tick(&mut self, view: &NodeView) -> Vec<Action> {
        if !self.cfg.hello_enabled {
            return vec![];
        }
        self.hello_seq = self.hello_seq.wrapping_add(1);
        let mut acts = vec![
            Action::Broadcast { packet: Packet::Hello(Hello { uid: 0, src: self.id, seq: self.hello_seq }), jitter: false },
            Action::SetTimer { delay: self.cfg.hello_interval_s, timer: Timer::Hello },
        ];
        let deadline = view.now.as_secs() - self.cfg.allowed_hello_loss as f64 * self.cfg.hello_interval_s;
        let lost: BTreeSet<NodeId> = self
            .routes
            .values()
            .filter(|e| e.state == RouteState::Up)
            .map(|e| e.next_hop)
            .filter(|n| self.heard.get(n).is_some_and(|t| t.as_secs() < deadline))
            .collect();
        for n in lost {
            self.heard.remove(&n);
            acts.extend(self.link_failed(view, None, n));
        }
        acts
    }

    pub(crate) fn reply_flow_ext(flow: FlowKey) -> Option<RrepFlowExt> {
        Some(RrepFlowExt { flow_id: flow.fid, rcr: false })
    }
}

#[cfg(test)]
mod tests {
    use super::super::RoutingConfig;
    use super::*;
    use crate::energy::{Battery, DrainEstimator};

    fn entry(seq: u32, hops: u32) -> RouteEntry {
        RouteEntry::new(NodeId(1), hops, seq, SimTime::secs(10.0))
    }

    #[test]
    fn better_route_rules() {
        let (inc, cand) = (entry(5, 4), entry(6, 7));
        assert!(std::ptr::eq(better_route(&inc, &cand), &cand));
        let (inc, cand) = (entry(5, 4), entry(5, 3));
        assert!(std::ptr::eq(better_route(&inc, &cand), &cand));
        let (inc, cand) = (entry(5, 4), entry(5, 4));
        assert!(std::ptr::eq(better_route(&inc, &cand), &inc));
        let (inc, cand) = (entry(5, 4), entry(4, 1));
        assert!(std::ptr::eq(better_route(&inc, &cand), &inc));
    }

    fn view(b: &Battery, t: f64) -> NodeView<'_> {
        NodeView { now: SimTime::secs(t), battery: b }
    }

    #[test]
    fn duplicate_request_is_relayed_once() {
        let b = Battery::new(10.0, DrainEstimator::SQAODV).unwrap();
        let mut r = Router::new(NodeId(2), Protocol::Aodv, RoutingConfig::default());
        let rreq = Rreq {
            uid: 9,
            hop_count: 0,
            broadcast_id: 1,
            dst: NodeId(5),
            dst_seq: 0,
            src: NodeId(1),
            src_seq: 1,
            repair: false,
            flow: None,
        };
        let a = r.receive(&view(&b, 1.0), NodeId(1), Packet::Rreq(rreq.clone()));
        assert_eq!(a.len(), 1);
        assert!(matches!(&a[0], Action::Broadcast { packet: Packet::Rreq(x), jitter: true } if x.hop_count == 1));
        let a = r.receive(&view(&b, 1.01), NodeId(3), Packet::Rreq(rreq));
        assert!(a.is_empty());
        let rev = r.route(&RouteKey { target: NodeId(1), flow: None }).unwrap();
        assert_eq!((rev.next_hop, rev.hop_count), (NodeId(1), 1));
    }

    #[test]
    fn repair_request_skips_nodes_still_routing_to_destination() {
        let b = Battery::new(10.0, DrainEstimator::SQAODV).unwrap();
        let mut r = Router::new(NodeId(2), Protocol::Aodv, RoutingConfig::default());
        r.offer_route(RouteKey { target: NodeId(5), flow: None }, RouteEntry::new(NodeId(7), 3, 3, SimTime::secs(20.0)), SimTime::secs(1.0));
        let mut rreq = Rreq {
            uid: 4,
            hop_count: 0,
            broadcast_id: 1,
            dst: NodeId(5),
            dst_seq: 4,
            src: NodeId(1),
            src_seq: 1,
            repair: true,
            flow: None,
        };
        assert!(r.receive(&view(&b, 1.0), NodeId(1), Packet::Rreq(rreq.clone())).is_empty());
        rreq.repair = false;
        rreq.broadcast_id = 2;
        let a = r.receive(&view(&b, 1.0), NodeId(1), Packet::Rreq(rreq));
        assert!(matches!(&a[..], [Action::Broadcast { .. }]));
    }

    #[test]
    fn link_break_drops_at_source_and_repairs_near_destination() {
        let b = Battery::new(10.0, DrainEstimator::SQAODV).unwrap();
        let flow = FlowKey::new(1, 4, 1);
        let pkt = DataPacket { uid: 7, flow, created_at: SimTime::secs(0.0), hops: 0 };
        let key = RouteKey { target: NodeId(4), flow: None };

        let mut src = Router::new(NodeId(1), Protocol::Aodv, RoutingConfig::default());
        src.session_started(flow, None);
        src.offer_route(key, RouteEntry::new(NodeId(2), 3, 1, SimTime::secs(20.0)), SimTime::secs(1.0));
        let a = src.link_failed(&view(&b, 2.0), Some(Packet::Data(pkt.clone())), NodeId(2));
        assert!(a.iter().any(|x| matches!(x, Action::Drop { cause: DropCause::LinkBreak, .. })));

        let mut mid = Router::new(NodeId(3), Protocol::Aodv, RoutingConfig::default());
        mid.offer_route(key, RouteEntry::new(NodeId(6), 2, 1, SimTime::secs(20.0)), SimTime::secs(1.0));
        let a = mid.link_failed(&view(&b, 2.0), Some(Packet::Data(pkt)), NodeId(6));
        assert!(a.iter().any(|x| matches!(x, Action::Broadcast { packet: Packet::Rreq(q), .. } if q.repair)));
        assert!(!a.iter().any(|x| matches!(x, Action::Drop { .. })));
        assert_eq!(mid.buffered_packets().count(), 1);
    }

    #[test]
    fn sequence_number_never_decreases_in_table() {
        let mut r = Router::new(NodeId(2), Protocol::Aodv, RoutingConfig::default());
        let key = RouteKey { target: NodeId(9), flow: None };
        let now = SimTime::secs(1.0);
        r.offer_route(key, entry(7, 3), now);
        assert!(!r.offer_route(key, entry(6, 1), now));
        r.invalidate(&key);
        assert_eq!(r.route(&key).unwrap().dst_seq, 8);
        assert!(!r.offer_route(key, entry(7, 1), now));
        assert!(r.offer_route(key, entry(8, 5), now));
    }

    #[test]
    fn data_without_route_triggers_discovery_and_buffers() {
        let b = Battery::new(10.0, DrainEstimator::SQAODV).unwrap();
        let mut r = Router::new(NodeId(1), Protocol::Aodv, RoutingConfig::default());
        let flow = FlowKey::new(1, 4, 1);
        r.session_started(flow, None);
        let pkt = DataPacket { uid: 1, flow, created_at: SimTime::secs(0.0), hops: 0 };
        let a = r.originate_data(&view(&b, 0.0), pkt.clone());
        assert!(matches!(a[0], Action::Broadcast { packet: Packet::Rreq(_), jitter: false }));
        assert!(matches!(a[1], Action::SetTimer { timer: Timer::RreqRetry { .. }, .. }));
        assert_eq!(r.buffered_packets().count(), 1);
        let a = r.originate_data(&view(&b, 0.1), DataPacket { uid: 2, ..pkt });
        assert!(a.is_empty());
        assert_eq!(r.buffered_packets().count(), 2);

        let rrep = Rrep {
            uid: 3,
            hop_count: 2,
            dst: NodeId(4),
            dst_seq: 1,
            src: NodeId(1),
            lifetime_s: 10.0,
            timestamp: SimTime::secs(0.2),
            flow: None,
        };
        let a = r.receive(&view(&b, 0.2), NodeId(2), Packet::Rrep(rrep));
        let sends = a.iter().filter(|x| matches!(x, Action::Unicast { to: NodeId(2), .. })).count();
        assert_eq!(sends, 2);
        assert!(a.contains(&Action::RouteUp(flow)));
        assert_eq!(r.buffered_packets().count(), 0);
    }

    #[test]
    fn retries_then_give_up() {
        let b = Battery::new(10.0, DrainEstimator::SQAODV).unwrap();
        let mut r = Router::new(NodeId(1), Protocol::Aodv, RoutingConfig::default());
        let flow = FlowKey::new(1, 4, 1);
        r.session_started(flow, None);
        let pkt = DataPacket { uid: 1, flow, created_at: SimTime::ZERO, hops: 0 };
        let mut acts = r.originate_data(&view(&b, 0.0), pkt);
        let mut requests = 0;
        let mut t = 0.0;
        loop {
            requests += acts.iter().filter(|a| matches!(a, Action::Broadcast { packet: Packet::Rreq(_), .. })).count();
            let Some(timer) = acts.iter().find_map(|a| match a {
                Action::SetTimer { timer, .. } => Some(*timer),
                _ => None,
            }) else {
                break;
            };
            t += 2.0;
            acts = r.timer(&view(&b, t), timer);
            if acts.iter().any(|a| matches!(a, Action::RouteFailed(_))) {
                assert!(acts.iter().any(|a| matches!(a, Action::Drop { cause: DropCause::RetriesExhausted, .. })));
                break;
            }
        }
        assert_eq!(requests, 4);
    }
}
