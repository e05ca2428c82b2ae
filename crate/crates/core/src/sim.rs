//! The simulation run: wires scenario, medium, routers and traffic to one
//! event queue and records metrics and trace.

use crate::config::{ScenarioConfig, SimUntil};
use crate::des::{RngStream, Scheduler, SimTime, StreamId};
use crate::energy::Battery;
use crate::error::{contract, ConfigError, Result, SimError};
use crate::medium::{Addressee, EnqueueOutcome, Frame, FrameSizes, Medium, Topology};
use crate::metrics::{MetricsLedger, RunReport};
use crate::packet::{DataPacket, FlowKey, NodeId, Packet, PacketKind};
use crate::routing::{Action, DropCause, NodeView, Protocol, Router, Timer};
use crate::trace::{Aux, TraceEvent, TraceLevel, TraceRecord};
use crate::traffic::{CeaseReason, Session, SessionState, StartSpec, TrafficKind};

/// Time the run continues after the last session ends when running to completion.
pub const COMPLETION_GRACE_S: f64 = 10.0;

#[derive(Debug)]
enum Ev {
    SessionStart { session: usize },
    Generate { session: usize },
    TxDone { node: usize, listeners: Vec<usize> },
    /// Relay broadcast released after its random hold-off.
    Jittered { node: usize, frame: Frame },
    Timer { node: usize, timer: Timer },
    Sample { node: usize },
    RcrTick { node: usize },
}

/// Per-flow packet accounting at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowBalance {
    pub flow: FlowKey,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl FlowBalance {
    pub fn holds(&self) -> bool {
        self.injected == self.delivered + self.dropped + self.in_flight
    }
}

pub struct Simulator {
    protocol: Protocol,
    seed: u64,
    sched: Scheduler<Ev>,
    medium: Medium,
    routers: Vec<Router>,
    node_rngs: Vec<RngStream>,
    sessions: Vec<Session>,
    ledger: MetricsLedger,
    trace: Vec<TraceRecord>,
    trace_level: TraceLevel,
    next_uid: u64,
    horizon: SimTime,
    fixed_horizon: Option<f64>,
    completion: bool,
    pdr_counts_suppressed: bool,
    jitter_s: f64,
    dispatched: u64,
}

fn config_error(msg: impl Into<String>) -> SimError {
    SimError::Config(vec![ConfigError::new(0, msg)])
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig, protocol: Protocol, seed: u64, trace_level: TraceLevel) -> Result<Simulator> {
        let positions = cfg.node_positions();
        let topo = Topology::new(&positions, cfg.topology.range, cfg.topology.area)
            .map_err(|e| config_error(e.to_string()))?;
        let mut scenario_rng = RngStream::new(seed, StreamId::Scenario);
        let mut batteries = Vec::with_capacity(positions.len());
        for &(id, _, _) in &positions {
            let e = match (cfg.fixed_energy(id), cfg.topology.energy) {
                (Some(e), _) => e,
                (None, Some((lo, hi))) => scenario_rng.uniform(lo, hi)?,
                (None, None) => return Err(config_error(format!("node {id} has no initial energy"))),
            };
            batteries.push(Battery::new(e, protocol.estimator())?);
        }
        let medium = Medium::new(topo, cfg.medium, FrameSizes::default(), batteries)?;
        let routers = positions.iter().map(|&(id, _, _)| Router::new(id, protocol, cfg.routing)).collect();
        let node_rngs = positions.iter().map(|&(id, _, _)| RngStream::new(seed, StreamId::Node(id.0))).collect();

        let load_rate = cfg.load_rate_kbps();
        let mut sessions = Vec::with_capacity(cfg.sessions.len());
        for (k, spec) in cfg.sessions.iter().enumerate() {
            let mut spec = *spec;
            if let (Some(r), TrafficKind::Poisson { .. }) = (load_rate, spec.kind) {
                spec.kind = TrafficKind::Poisson { rate_kbps: r };
            }
            for end in [spec.flow.src, spec.flow.dst] {
                if medium.topo.index_of(end).is_none() {
                    return Err(config_error(format!("flow {} references unknown node {end}", spec.flow)));
                }
            }
            let start = match (cfg.stagger, spec.start, spec.packets) {
                (Some(st), _, crate::traffic::PacketCount::Finite(n)) => k as f64 * st * n as f64 * spec.kind.mean_interval(),
                (_, StartSpec::At(t), _) => t,
                (_, StartSpec::Uniform(a, b), _) => scenario_rng.uniform(a, b)?,
            };
            sessions.push(Session::new(spec, start, RngStream::new(seed, StreamId::Session(k as u32)))?);
        }

        let (fixed_horizon, completion) = match cfg.sim_until {
            SimUntil::Seconds(t) => (Some(t), false),
            SimUntil::Completion => (None, true),
        };
        let horizon = SimTime::from_secs(fixed_horizon.unwrap_or(cfg.completion_cap))?;
        let n = medium.len();
        let mut sim = Simulator {
            protocol,
            seed,
            sched: Scheduler::new(),
            medium,
            routers,
            node_rngs,
            sessions,
            ledger: MetricsLedger::new(n),
            trace: Vec::new(),
            trace_level,
            next_uid: 1,
            horizon,
            fixed_horizon,
            completion,
            pdr_counts_suppressed: cfg.pdr_counts_suppressed,
            jitter_s: cfg.routing.rebroadcast_jitter_s,
            dispatched: 0,
        };
        for s in 0..sim.sessions.len() {
            sim.ledger.register(sim.sessions[s].flow());
            let at = SimTime::from_secs(sim.sessions[s].start)?;
            sim.sched.schedule(at, Ev::SessionStart { session: s })?;
        }
        if !sim.sessions.is_empty() {
            for node in 0..n {
                if protocol != Protocol::Aodv {
                    let dt = sim.medium.battery(node).sample_interval_s();
                    sim.sched.schedule_in(dt, Ev::Sample { node })?;
                }
                if protocol == Protocol::SqAodv {
                    sim.sched.schedule_in(cfg.routing.rcr_period_s, Ev::RcrTick { node })?;
                }
                if cfg.routing.hello_enabled {
                    let off = sim.node_rngs[node].uniform(0.0, cfg.routing.hello_interval_s)?;
                    sim.sched.schedule_in(off, Ev::Timer { node, timer: Timer::Hello })?;
                }
            }
        }
        if sim.completion {
            sim.check_completion(SimTime::ZERO);
        }
        Ok(sim)
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn router(&self, idx: usize) -> &Router {
        &self.routers[idx]
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn events_dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Runs until the configured end.
    pub fn run(&mut self) -> Result<()> {
        self.run_until(f64::INFINITY)
    }

    /// Runs until `t` or the configured end, whichever is first.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        loop {
            let limit = if t < self.horizon.as_secs() { SimTime::from_secs(t)? } else { self.horizon };
            let Some((now, _, ev)) = self.sched.pop_due(limit) else { break };
            self.dispatched += 1;
            self.dispatch(now, ev)?;
        }
        Ok(())
    }

    /// End of the run: the fixed horizon, or the completion point.
    pub fn end_time(&self) -> f64 {
        self.horizon.as_secs()
    }

    pub fn report(&self) -> RunReport {
        let mut r = RunReport::from_ledger(&self.ledger, self.protocol, self.seed, self.end_time());
        if self.pdr_counts_suppressed {
            r.pdr = r.pdr_strict;
        }
        r
    }

    pub fn into_parts(self) -> (RunReport, Vec<TraceRecord>) {
        let r = self.report();
        (r, self.trace)
    }

    fn dispatch(&mut self, now: SimTime, ev: Ev) -> Result<()> {
        match ev {
            Ev::SessionStart { session } => self.start_session(session, now),
            Ev::Generate { session } => self.generate(session, now),
            Ev::TxDone { node, listeners } => self.tx_done(node, listeners, now),
            Ev::Jittered { node, frame } => self.enqueue(node, frame, now),
            Ev::Timer { node, timer } => {
                if !self.medium.is_alive(node) {
                    return Ok(());
                }
                let view = NodeView { now, battery: self.medium.battery(node) };
                let acts = self.routers[node].timer(&view, timer);
                self.apply(node, acts, now)
            }
            Ev::Sample { node } => {
                if !self.medium.is_alive(node) {
                    return Ok(());
                }
                self.medium.battery_mut(node).sample(now)?;
                let dt = self.medium.battery(node).sample_interval_s();
                self.sched.schedule_in(dt, Ev::Sample { node })?;
                Ok(())
            }
            Ev::RcrTick { node } => {
                if !self.medium.is_alive(node) {
                    return Ok(());
                }
                let view = NodeView { now, battery: self.medium.battery(node) };
                let acts = self.routers[node].rcr_tick(&view);
                self.apply(node, acts, now)?;
                let dt = self.routers[node].config().rcr_period_s;
                self.sched.schedule_in(dt, Ev::RcrTick { node })?;
                Ok(())
            }
        }
    }

    fn index(&self, id: NodeId) -> Result<usize> {
        match self.medium.topo.index_of(id) {
            Some(i) => Ok(i),
            None => contract(format!("unknown node {id}")),
        }
    }

    fn record(&mut self, rec: TraceRecord) {
        if self.trace_level.wants(rec.kind) {
            self.trace.push(rec);
        }
    }

    fn packet_record(&self, now: SimTime, event: TraceEvent, node: usize, packet: &Packet, aux: Aux) -> TraceRecord {
        TraceRecord {
            time: now,
            event,
            node: self.medium.topo.id(node),
            kind: Some(packet.kind()),
            uid: Some(packet.uid()),
            flow: packet.flow(),
            size: Some(self.medium.sizes.size_of(packet)),
            aux,
        }
    }

    fn start_session(&mut self, s: usize, now: SimTime) -> Result<()> {
        let flow = self.sessions[s].flow();
        let src = self.index(flow.src)?;
        if !self.medium.is_alive(src) {
            return self.cease(flow, CeaseReason::SourceDead, now);
        }
        self.sessions[s].state = SessionState::Active;
        let end = self.sessions[s].declared_end(self.fixed_horizon).map(SimTime::from_secs).transpose()?;
        self.routers[src].session_started(flow, end);
        self.generate(s, now)
    }

    fn generate(&mut self, s: usize, now: SimTime) -> Result<()> {
        if self.sessions[s].state != SessionState::Active {
            return Ok(());
        }
        let flow = self.sessions[s].flow();
        let src = self.index(flow.src)?;
        let pkt = DataPacket { uid: self.next_uid, flow, created_at: now, hops: 0 };
        self.next_uid += 1;
        self.sessions[s].generated += 1;
        self.ledger.injected(flow);
        let rec = self.packet_record(now, TraceEvent::Send, src, &Packet::Data(pkt.clone()), Aux::None);
        self.record(rec);
        let view = NodeView { now, battery: self.medium.battery(src) };
        let acts = self.routers[src].originate_data(&view, pkt);
        self.apply(src, acts, now)?;

        if self.sessions[s].remaining() == Some(0) {
            self.sessions[s].state = SessionState::Completed;
            self.routers[src].session_ended(flow);
            self.ledger.session_completed(flow);
            self.record(TraceRecord {
                time: now,
                event: TraceEvent::SessEnd,
                node: flow.src,
                kind: None,
                uid: None,
                flow: Some(flow),
                size: None,
                aux: Aux::Token("COMPLETED"),
            });
            self.check_completion(now);
        } else if self.sessions[s].state == SessionState::Active {
            let gap = self.sessions[s].next_arrival()?;
            self.sched.schedule_in(gap, Ev::Generate { session: s })?;
        }
        Ok(())
    }

    /// Ends a session early and records its connection expiry.
    fn cease(&mut self, flow: FlowKey, reason: CeaseReason, now: SimTime) -> Result<()> {
        let Some(s) = self.sessions.iter().position(|x| x.flow() == flow) else {
            return contract(format!("no session for flow {flow}"));
        };
        if !self.sessions[s].is_running() {
            return Ok(());
        }
        let horizon = self.fixed_horizon;
        let unsent = self.sessions[s].unsent(now.as_secs().max(self.sessions[s].start), horizon);
        self.sessions[s].state = SessionState::Ceased(reason);
        self.ledger.suppressed(flow, unsent);
        self.ledger.connection_ended(flow, now);
        let src = self.index(flow.src)?;
        self.routers[src].session_ended(flow);
        self.record(TraceRecord {
            time: now,
            event: TraceEvent::SessEnd,
            node: flow.src,
            kind: None,
            uid: None,
            flow: Some(flow),
            size: None,
            aux: Aux::Token(reason.as_str()),
        });
        self.check_completion(now);
        Ok(())
    }

    fn check_completion(&mut self, now: SimTime) {
        if self.completion && self.sessions.iter().all(|s| !s.is_running()) {
            let end = now.after(COMPLETION_GRACE_S);
            if end < self.horizon {
                self.horizon = end;
            }
        }
    }

    fn apply(&mut self, node: usize, acts: Vec<Action>, now: SimTime) -> Result<()> {
        for a in acts {
            match a {
                Action::Unicast { to, packet } => {
                    let packet = self.stamp(node, packet, now);
                    let frame = self.medium.frame(node, Addressee::Unicast(to), packet);
                    self.enqueue(node, frame, now)?;
                }
                Action::Broadcast { packet, jitter } => {
                    let packet = self.stamp(node, packet, now);
                    let frame = self.medium.frame(node, Addressee::Broadcast, packet);
                    if jitter && self.jitter_s > 0.0 {
                        let d = self.node_rngs[node].uniform(0.0, self.jitter_s)?;
                        self.sched.schedule_in(d, Ev::Jittered { node, frame })?;
                    } else {
                        self.enqueue(node, frame, now)?;
                    }
                }
                Action::SetTimer { delay, timer } => {
                    self.sched.schedule_in(delay, Ev::Timer { node, timer })?;
                }
                Action::Deliver(pkt) => self.ledger.delivered(&pkt, now),
                Action::Drop { packet, cause } => self.drop_data(node, packet, cause, now),
                Action::EnergyReject { uid } => {
                    self.ledger.energy_rejects += 1;
                    self.record(TraceRecord {
                        time: now,
                        event: TraceEvent::Drop,
                        node: self.medium.topo.id(node),
                        kind: Some(PacketKind::Rreq),
                        uid: Some(uid),
                        flow: None,
                        size: None,
                        aux: Aux::Token("ENERGY_REJECT"),
                    });
                }
                Action::StopSession(f) => self.cease(f, CeaseReason::Stopped, now)?,
                Action::SessionFailed(f) => self.cease(f, CeaseReason::RouteLost, now)?,
                Action::RouteFailed(f) => self.ledger.route_lost(f, now),
                Action::RouteUp(f) => self.ledger.route_restored(f),
            }
        }
        Ok(())
    }

    /// Gives new control packets a uid and traces the hand-off to the interface.
    fn stamp(&mut self, node: usize, mut packet: Packet, now: SimTime) -> Packet {
        let fresh = packet.uid() == 0;
        if fresh {
            let uid = self.next_uid;
            self.next_uid += 1;
            match &mut packet {
                Packet::Data(p) => p.uid = uid,
                Packet::Rreq(p) => p.uid = uid,
                Packet::Rrep(p) => p.uid = uid,
                Packet::Rerr(p) => p.uid = uid,
                Packet::StopTraffic(p) => p.uid = uid,
                Packet::Hello(p) => p.uid = uid,
            }
        }
        let ev = if fresh { TraceEvent::Send } else { TraceEvent::Fwd };
        if self.trace_level.wants(Some(packet.kind())) {
            let rec = self.packet_record(now, ev, node, &packet, Aux::None);
            self.trace.push(rec);
        }
        packet
    }

    fn drop_data(&mut self, node: usize, pkt: DataPacket, cause: DropCause, now: SimTime) {
        self.ledger.dropped(pkt.flow, cause);
        let rec = self.packet_record(now, TraceEvent::Drop, node, &Packet::Data(pkt), Aux::Token(cause.as_str()));
        self.record(rec);
    }

    fn drop_frame(&mut self, node: usize, frame: Frame, cause: DropCause, now: SimTime) {
        match frame.packet {
            Packet::Data(d) => self.drop_data(node, d, cause, now),
            p => {
                let rec = self.packet_record(now, TraceEvent::Drop, node, &p, Aux::Token(cause.as_str()));
                self.record(rec);
            }
        }
    }

    fn enqueue(&mut self, node: usize, frame: Frame, now: SimTime) -> Result<()> {
        match self.medium.enqueue(node, frame.clone()) {
            EnqueueOutcome::Accepted => self.try_start(node, now),
            EnqueueOutcome::DroppedQueueFull => {
                self.drop_frame(node, frame, DropCause::QueueFull, now);
                Ok(())
            }
            EnqueueOutcome::DroppedNodeDead => {
                self.drop_frame(node, frame, DropCause::NodeDead, now);
                Ok(())
            }
        }
    }

    fn try_start(&mut self, node: usize, now: SimTime) -> Result<()> {
        let Some((start, frame)) = self.medium.start_next(node, now)? else { return Ok(()) };
        if !start.sender_died {
            if frame.packet.is_routing() {
                self.ledger.routing_tx += 1;
            } else {
                self.ledger.data_tx += 1;
            }
            let h = self.sched.schedule_in(start.duration, Ev::TxDone { node, listeners: start.listeners })?;
            self.medium.set_on_air(node, frame, h);
        }
        for d in start.died {
            self.node_died(d, now)?;
        }
        Ok(())
    }

    fn node_died(&mut self, idx: usize, now: SimTime) -> Result<()> {
        self.ledger.node_died(idx, now);
        let id = self.medium.topo.id(idx);
        self.record(TraceRecord {
            time: now,
            event: TraceEvent::Die,
            node: id,
            kind: None,
            uid: None,
            flow: None,
            size: None,
            aux: Aux::Joules(self.medium.battery(idx).residual_j()),
        });
        let (frames, handle) = self.medium.kill(idx, now);
        if let Some(h) = handle {
            self.sched.cancel(h);
        }
        for f in frames {
            self.drop_frame(idx, f, DropCause::NodeDead, now);
        }
        for pkt in self.routers[idx].on_death() {
            self.drop_data(idx, pkt, DropCause::NodeDead, now);
        }
        let owned: Vec<FlowKey> =
            self.sessions.iter().filter(|s| s.flow().src == id && s.is_running()).map(|s| s.flow()).collect();
        for f in owned {
            self.cease(f, CeaseReason::SourceDead, now)?;
        }
        Ok(())
    }

    fn tx_done(&mut self, node: usize, listeners: Vec<usize>, now: SimTime) -> Result<()> {
        let Some(frame) = self.medium.finish(node) else {
            return contract(format!("completion for node {node} with nothing on the air"));
        };
        self.try_start(node, now)?;
        let sender = frame.sender;
        match frame.addressee {
            Addressee::Broadcast => {
                for j in listeners {
                    if self.medium.is_alive(j) {
                        self.receive(j, sender, frame.packet.clone(), now)?;
                    }
                }
            }
            Addressee::Unicast(to) => {
                let j = self.index(to)?;
                if listeners.contains(&j) && self.medium.is_alive(j) {
                    self.receive(j, sender, frame.packet, now)?;
                } else if self.medium.is_alive(node) {
                    let view = NodeView { now, battery: self.medium.battery(node) };
                    let acts = self.routers[node].link_failed(&view, Some(frame.packet), to);
                    self.apply(node, acts, now)?;
                    for f in self.medium.purge_unicast(node, to) {
                        self.drop_frame(node, f, DropCause::LinkBreak, now);
                    }
                } else if let Packet::Data(d) = frame.packet {
                    self.drop_data(node, d, DropCause::NodeDead, now);
                }
            }
        }
        Ok(())
    }

    fn receive(&mut self, j: usize, from: NodeId, packet: Packet, now: SimTime) -> Result<()> {
        if self.trace_level.wants(Some(packet.kind())) {
            let aux = match &packet {
                Packet::Data(d) => Aux::Hops(d.hops + 1),
                _ => Aux::None,
            };
            let rec = self.packet_record(now, TraceEvent::Recv, j, &packet, aux);
            self.trace.push(rec);
        }
        self.routers[j].heard_from(from, now);
        let view = NodeView { now, battery: self.medium.battery(j) };
        let acts = self.routers[j].receive(&view, from, packet);
        self.apply(j, acts, now)
    }

    /// Per-flow packet balance right now.
    pub fn flow_balances(&self) -> Vec<FlowBalance> {
        let mut in_flight: std::collections::BTreeMap<FlowKey, u64> = Default::default();
        for i in 0..self.medium.len() {
            for p in self.medium.held_packets(i) {
                if let Packet::Data(d) = p {
                    *in_flight.entry(d.flow).or_default() += 1;
                }
            }
            for d in self.routers[i].buffered_packets() {
                *in_flight.entry(d.flow).or_default() += 1;
            }
        }
        self.ledger
            .flows
            .iter()
            .map(|(f, s)| FlowBalance {
                flow: *f,
                injected: s.injected,
                delivered: s.delivered,
                dropped: s.dropped_total(),
                in_flight: in_flight.get(f).copied().unwrap_or(0),
            })
            .collect()
    }

    /// Largest relative mismatch between each node's energy drop and its recorded debits.
    pub fn energy_imbalance(&self) -> f64 {
        (0..self.medium.len())
            .map(|i| {
                let b = self.medium.battery(i);
                ((b.initial_j() - b.residual_j()) - self.medium.debited(i)).abs() / b.initial_j()
            })
            .fold(0.0, f64::max)
    }
}

/// Runs one scenario to its end and returns the report and trace.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    protocol: Option<Protocol>,
    seed: u64,
    trace_level: TraceLevel,
) -> Result<(RunReport, Vec<TraceRecord>)> {
    let Some(p) = protocol.or(cfg.protocol) else {
        return Err(config_error("no protocol given in the scenario or on the command line"));
    };
    let mut sim = Simulator::new(cfg, p, seed, trace_level)?;
    sim.run()?;
    Ok(sim.into_parts())
}
