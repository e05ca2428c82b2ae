//! Energy-aware additions: admission control on route requests, the
//! destination's collect-then-choose reply, and route change requests raised
//! by nodes about to run dry.

use super::{Action, DiscoveryKind, NodeView, Protocol, RouteEntry, Router, Timer};
use crate::des::SimTime;
use crate::energy::THRESHOLD1_SECS;
use crate::packet::{DurationField, FlowKey, NodeId, Packet, Rrep, Rreq, StopTraffic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Reject,
}

/// Whether an intermediate node has the energy to carry a session.
///
/// With a known duration the node must outlast it at its current drain rate;
/// otherwise it must hold more than a fixed number of seconds of drain.
pub fn admit(residual_j: f64, aedr_w: f64, session: DurationField) -> Admission {
    let needed = match session {
        DurationField::Known(d) => d * aedr_w,
        _ => THRESHOLD1_SECS * aedr_w,
    };
    if residual_j > needed {
        Admission::Admit
    } else {
        Admission::Reject
    }
}

/// One copy of a request seen by the destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub prev_hop: NodeId,
    /// Hops from the source to the destination along this copy's path.
    pub hop_count: u32,
    pub bottleneck: f64,
    pub arrival: SimTime,
    pub src_seq: u32,
}

/// Highest bottleneck lifetime, then fewest hops, then earliest arrival.
pub fn choose_candidate(cands: &[Candidate]) -> Option<&Candidate> {
    cands.iter().reduce(|best, c| {
        let better = c.bottleneck > best.bottleneck
            || (c.bottleneck == best.bottleneck
                && (c.hop_count < best.hop_count || (c.hop_count == best.hop_count && c.arrival < best.arrival)));
        if better {
            c
        } else {
            best
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DestCollector {
    pub origin: NodeId,
    pub broadcast_id: u32,
    pub opened_at: SimTime,
    pub candidates: Vec<Candidate>,
}

impl DestCollector {
    pub fn distinct_prev_hops(&self) -> usize {
        let mut hops: Vec<NodeId> = self.candidates.iter().map(|c| c.prev_hop).collect();
        hops.sort();
        hops.dedup();
        hops.len()
    }
}

impl Router {
    pub(crate) fn dest_collect(&mut self, view: &NodeView, from: NodeId, r: Rreq) -> Vec<Action> {
        let Some(flow) = r.flow_key() else { return vec![] };
        if self.closed_discoveries.contains(&(r.src, r.broadcast_id)) {
            return vec![];
        }
        let cand = Candidate {
            prev_hop: from,
            hop_count: r.hop_count + 1,
            bottleneck: r.flow.map(|f| f.bottleneck).unwrap_or(f64::INFINITY),
            arrival: view.now,
            src_seq: r.src_seq,
        };
        let mut acts = Vec::new();
        match self.collectors.get_mut(&flow) {
            Some(c) if c.origin == r.src && c.broadcast_id == r.broadcast_id => c.candidates.push(cand),
            existing => {
                if let Some(old) = existing {
                    self.closed_discoveries.insert((old.origin, old.broadcast_id));
                }
                self.collectors.insert(
                    flow,
                    DestCollector { origin: r.src, broadcast_id: r.broadcast_id, opened_at: view.now, candidates: vec![cand] },
                );
                acts.push(Action::SetTimer {
                    delay: self.cfg.dest_wait_s,
                    timer: Timer::DestReply { flow, origin: r.src, broadcast_id: r.broadcast_id },
                });
            }
        }
        if self.collectors[&flow].distinct_prev_hops() >= self.cfg.dest_max_candidates {
            acts.extend(self.dest_reply(view, flow));
        }
        acts
    }

    pub(crate) fn dest_reply_due(&mut self, view: &NodeView, flow: FlowKey, origin: NodeId, bid: u32) -> Vec<Action> {
        match self.collectors.get(&flow) {
            Some(c) if c.origin == origin && c.broadcast_id == bid => self.dest_reply(view, flow),
            _ => vec![],
        }
    }

    fn dest_reply(&mut self, view: &NodeView, flow: FlowKey) -> Vec<Action> {
        let Some(c) = self.collectors.remove(&flow) else { return vec![] };
        self.closed_discoveries.insert((c.origin, c.broadcast_id));
        let Some(best) = choose_candidate(&c.candidates).copied() else { return vec![] };
        let rev_key = self.key_toward(flow.src, Some(flow));
        let rev = RouteEntry::new(best.prev_hop, best.hop_count, best.src_seq, view.now.after(self.cfg.active_route_timeout_s));
        self.offer_route(rev_key, rev, view.now);
        self.seq = self.seq.wrapping_add(1);
        let rrep = Rrep {
            uid: 0,
            hop_count: 0,
            dst: self.id,
            dst_seq: self.seq,
            src: flow.src,
            lifetime_s: self.cfg.active_route_timeout_s,
            timestamp: view.now,
            flow: Router::reply_flow_ext(flow),
        };
        vec![Action::Unicast { to: best.prev_hop, packet: Packet::Rrep(rrep) }]
    }

    /// Carries at least one valid per-flow route.
    fn on_active_route(&self, now: SimTime) -> bool {
        self.routes.iter().any(|(k, e)| k.flow.is_some() && e.is_valid(now))
    }

    /// Periodic drain check. A node whose residual energy falls below one
    /// second of drain raises a single route change request while it still
    /// carries traffic.
    pub fn rcr_tick(&mut self, view: &NodeView) -> Vec<Action> {
        if self.protocol != Protocol::SqAodv || self.rcr_sent {
            return vec![];
        }
        if view.battery.residual_j() < view.battery.threshold2() && self.on_active_route(view.now) {
            self.rcr_sent = true;
            let me = FlowKey { src: self.id, dst: self.id, fid: 0 };
            return vec![Action::Broadcast { packet: Packet::Rrep(Rrep::rcr(0, me, self.id, view.now)), jitter: false }];
        }
        vec![]
    }

    pub(crate) fn recv_rcr(&mut self, view: &NodeView, from: NodeId, r: Rrep) -> Vec<Action> {
        if self.protocol != Protocol::SqAodv {
            return vec![];
        }
        let Some(drained) = r.drained_node() else { return vec![] };
        if r.src == r.dst {
            return self.rcr_from_neighbor(view, drained);
        }
        let Some(flow) = r.flow_key() else { return vec![] };
        let _ = from;
        if flow.src == self.id {
            return self.source_react(view, flow, drained);
        }
        self.relay_upstream(view, flow, drained, Packet::Rrep(r))
    }

    fn rcr_from_neighbor(&mut self, view: &NodeView, x: NodeId) -> Vec<Action> {
        let flows: Vec<(FlowKey, NodeId)> = self
            .routes
            .iter()
            .filter_map(|(k, e)| {
                let f = k.flow?;
                (k.target == f.dst && e.is_valid(view.now)).then_some((f, e.next_hop))
            })
            .collect();
        let mut acts = Vec::new();
        for (f, fwd_next) in flows {
            if f.src == x {
                continue;
            }
            let rev_next = self.valid_route(&self.key_toward(f.src, Some(f)), view.now).map(|e| e.next_hop);
            let involved = f.dst == x || fwd_next == x || rev_next == Some(x);
            if !involved {
                continue;
            }
            if f.src == self.id {
                acts.extend(self.source_react(view, f, x));
            } else {
                let pkt = if f.dst == x {
                    Packet::StopTraffic(StopTraffic { uid: 0, flow: f, drained: x })
                } else {
                    Packet::Rrep(Rrep::rcr(0, f, x, view.now))
                };
                acts.extend(self.relay_upstream(view, f, x, pkt));
            }
        }
        acts
    }

    fn relay_upstream(&mut self, view: &NodeView, flow: FlowKey, drained: NodeId, pkt: Packet) -> Vec<Action> {
        if !self.rcr_relayed.insert((flow, drained)) {
            return vec![];
        }
        match self.valid_route(&self.key_toward(flow.src, Some(flow)), view.now) {
            Some(e) => vec![Action::Unicast { to: e.next_hop, packet: pkt }],
            None => vec![],
        }
    }

    /// Source reaction: stop when the destination is draining, otherwise look
    /// for a replacement route while the current one still carries data.
    fn source_react(&mut self, view: &NodeView, flow: FlowKey, drained: NodeId) -> Vec<Action> {
        if !self.flow_active(&flow) {
            return vec![];
        }
        if drained == flow.dst {
            self.session_ended(flow);
            return vec![Action::StopSession(flow)];
        }
        let key = self.forward_key(flow);
        if self.pending.get(&key).is_some_and(|p| p.kind != DiscoveryKind::Refresh) {
            return vec![];
        }
        self.start_discovery(view, key, DiscoveryKind::MakeBeforeBreak)
    }

    pub(crate) fn recv_stop(&mut self, view: &NodeView, _from: NodeId, s: StopTraffic) -> Vec<Action> {
        if s.flow.src == self.id {
            return self.source_react(view, s.flow, s.drained);
        }
        self.relay_upstream(view, s.flow, s.drained, Packet::StopTraffic(s))
    }
}
