//! Simplified shared medium: unit-disk connectivity over a static topology,
//! one serialized transmitter per node with a bounded FIFO, transmission
//! time from frame size and bit rate, and tx/rx energy debits.
//!
//! There are no collisions or carrier sensing. Every alive neighbor of a
//! transmitter pays receive energy, whether or not it is the addressee.

use std::collections::{BTreeMap, VecDeque};

use crate::des::{EventHandle, SimTime};
use crate::energy::Battery;
use crate::error::{contract, Result};
use crate::packet::{DurationField, NodeId, Packet, PacketKind};

pub const DATA_PAYLOAD_BYTES: u32 = 512;
pub const DATA_HEADER_BYTES: u32 = 20;
pub const DEFAULT_RATE_BPS: f64 = 1e6;
pub const DEFAULT_QUEUE_CAPACITY: usize = 50;
pub const DEFAULT_TX_POWER_W: f64 = 0.2818;
pub const DEFAULT_RX_POWER_W: f64 = 0.2818;
pub const DEFAULT_COMM_RANGE_M: f64 = 250.0;

/// Octets charged on the air for each frame type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSizes {
    pub data: u32,
    pub rreq_base: u32,
    pub rreq_bottleneck: u32,
    pub rreq_session: u32,
    pub rrep: u32,
    pub rerr: u32,
    pub rcr: u32,
    pub stop: u32,
    pub hello: u32,
}

impl Default for FrameSizes {
    fn default() -> Self {
        FrameSizes {
            data: DATA_PAYLOAD_BYTES + DATA_HEADER_BYTES,
            rreq_base: 24,
            rreq_bottleneck: 28,
            rreq_session: 32,
            rrep: 24,
            rerr: 24,
            rcr: 24,
            stop: 16,
            hello: 12,
        }
    }
}

impl FrameSizes {
    pub fn size_of(&self, packet: &Packet) -> u32 {
        match packet {
            Packet::Data(_) => self.data,
            Packet::Rreq(r) => match r.flow.map(|f| f.session_duration) {
                None => self.rreq_base,
                Some(DurationField::NotCarried) => self.rreq_bottleneck,
                Some(_) => self.rreq_session,
            },
            Packet::Rrep(r) if r.is_rcr() => self.rcr,
            Packet::Rrep(_) => self.rrep,
            Packet::Rerr(_) => self.rerr,
            Packet::StopTraffic(_) => self.stop,
            Packet::Hello(_) => self.hello,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    pub rate_bps: f64,
    pub queue_capacity: usize,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
}

impl Default for MediumParams {
    fn default() -> Self {
        MediumParams {
            rate_bps: DEFAULT_RATE_BPS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            tx_power_w: DEFAULT_TX_POWER_W,
            rx_power_w: DEFAULT_RX_POWER_W,
        }
    }
}

/// Seconds needed to put `size_bytes` on the air at `rate_bps`.
pub fn tx_duration(size_bytes: u32, rate_bps: f64) -> Result<f64> {
    if size_bytes == 0 {
        return contract("zero-length frame");
    }
    Ok(8.0 * size_bytes as f64 / rate_bps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addressee {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: NodeId,
    pub addressee: Addressee,
    pub packet: Packet,
    pub size_bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    DroppedQueueFull,
    DroppedNodeDead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    ids: Vec<NodeId>,
    positions: Vec<(f64, f64)>,
    comm_range: f64,
    area: (f64, f64),
    index: BTreeMap<NodeId, usize>,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(nodes: &[(NodeId, f64, f64)], comm_range: f64, area: (f64, f64)) -> Result<Topology> {
        if !(comm_range > 0.0) {
            return contract(format!("communication range must be positive, got {comm_range}"));
        }
        let mut index = BTreeMap::new();
        for (i, &(id, x, y)) in nodes.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return contract(format!("duplicate node id {id}"));
            }
            if !(0.0..=area.0).contains(&x) || !(0.0..=area.1).contains(&y) {
                return contract(format!("node {id} at ({x}, {y}) lies outside the {}x{} area", area.0, area.1));
            }
        }
        let positions: Vec<(f64, f64)> = nodes.iter().map(|&(_, x, y)| (x, y)).collect();
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if dist(positions[i], positions[j]) <= comm_range {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Ok(Topology {
            ids: nodes.iter().map(|&(id, _, _)| id).collect(),
            positions,
            comm_range,
            area,
            index,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn comm_range(&self) -> f64 {
        self.comm_range
    }

    pub fn area(&self) -> (f64, f64) {
        self.area
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn position(&self, idx: usize) -> (f64, f64) {
        self.positions[idx]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn neighbor_indices(&self, idx: usize) -> &[usize] {
        &self.adjacency[idx]
    }

    pub fn neighbors(&self, id: NodeId) -> Result<Vec<NodeId>> {
        let Some(i) = self.index_of(id) else {
            return contract(format!("unknown node {id}"));
        };
        let mut out: Vec<NodeId> = self.adjacency[i].iter().map(|&j| self.ids[j]).collect();
        out.sort();
        Ok(out)
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        a != b && dist(self.positions[a], self.positions[b]) <= self.comm_range
    }

    /// Whether every node can reach every other one over the link graph.
    pub fn is_connected(&self) -> bool {
        if self.ids.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[derive(Debug, Default)]
pub struct Interface {
    pub queue: VecDeque<Frame>,
    /// Frame on the air and the completion event for it.
    pub current: Option<(Frame, EventHandle)>,
    pub busy_until: SimTime,
    pub alive: bool,
}

/// Per-node frame accounting. `offered = completed + dropped + queued + on_air`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FrameCounters {
    pub offered: u64,
    pub completed: u64,
    pub dropped_queue_full: u64,
    pub dropped_node_dead: u64,
}

/// What happened when a node started putting a frame on the air.
#[derive(Debug)]
pub struct TxStart {
    pub duration: f64,
    /// Alive neighbors that paid receive energy and will hear the frame.
    pub listeners: Vec<usize>,
    /// Nodes whose battery ran out because of this transmission (sender first if it died).
    pub died: Vec<usize>,
    pub sender_died: bool,
}

/// Physical state of all nodes: radios and batteries.
#[derive(Debug)]
pub struct Medium {
    pub topo: Topology,
    pub params: MediumParams,
    pub sizes: FrameSizes,
    ifaces: Vec<Interface>,
    batteries: Vec<Battery>,
    debited: Vec<f64>,
    counters: Vec<FrameCounters>,
    death_times: Vec<Option<SimTime>>,
}

impl Medium {
    pub fn new(topo: Topology, params: MediumParams, sizes: FrameSizes, batteries: Vec<Battery>) -> Result<Medium> {
        if batteries.len() != topo.len() {
            return contract("one battery per node required");
        }
        if params.queue_capacity == 0 || !(params.rate_bps > 0.0) {
            return contract("queue capacity and bit rate must be positive");
        }
        let n = topo.len();
        let ifaces = (0..n).map(|_| Interface { alive: true, ..Default::default() }).collect();
        Ok(Medium {
            topo,
            params,
            sizes,
            ifaces,
            batteries,
            debited: vec![0.0; n],
            counters: vec![FrameCounters::default(); n],
            death_times: vec![None; n],
        })
    }

    pub fn len(&self) -> usize {
        self.topo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topo.is_empty()
    }

    pub fn is_alive(&self, idx: usize) -> bool {
        self.ifaces[idx].alive
    }

    pub fn battery(&self, idx: usize) -> &Battery {
        &self.batteries[idx]
    }

    pub fn battery_mut(&mut self, idx: usize) -> &mut Battery {
        &mut self.batteries[idx]
    }

    pub fn debited(&self, idx: usize) -> f64 {
        self.debited[idx]
    }

    pub fn counters(&self, idx: usize) -> FrameCounters {
        self.counters[idx]
    }

    pub fn death_time(&self, idx: usize) -> Option<SimTime> {
        self.death_times[idx]
    }

    pub fn interface(&self, idx: usize) -> &Interface {
        &self.ifaces[idx]
    }

    pub fn is_idle(&self, idx: usize) -> bool {
        self.ifaces[idx].current.is_none()
    }

    pub fn queue_len(&self, idx: usize) -> usize {
        self.ifaces[idx].queue.len()
    }

    pub fn frame(&self, sender: usize, addressee: Addressee, packet: Packet) -> Frame {
        let size_bytes = self.sizes.size_of(&packet);
        Frame { sender: self.topo.id(sender), addressee, packet, size_bytes }
    }

    pub fn enqueue(&mut self, idx: usize, frame: Frame) -> EnqueueOutcome {
        let cap = self.params.queue_capacity;
        let c = &mut self.counters[idx];
        c.offered += 1;
        let iface = &mut self.ifaces[idx];
        if !iface.alive {
            c.dropped_node_dead += 1;
            return EnqueueOutcome::DroppedNodeDead;
        }
        if iface.queue.len() >= cap {
            c.dropped_queue_full += 1;
            return EnqueueOutcome::DroppedQueueFull;
        }
        iface.queue.push_back(frame);
        EnqueueOutcome::Accepted
    }

    fn charge(&mut self, idx: usize, joules: f64, now: SimTime) -> Result<bool> {
        let (applied, alive) = self.batteries[idx].debit(joules)?;
        self.debited[idx] += applied;
        if !alive && self.ifaces[idx].alive {
            self.ifaces[idx].alive = false;
            self.death_times[idx] = Some(now);
            return Ok(true);
        }
        Ok(false)
    }

    /// Pops the head of an idle node's queue and starts transmitting it.
    /// The caller must schedule completion after `duration` and hand the handle to [`Medium::set_on_air`].
    /// When the sender's own debit kills it, the frame is not sent; it goes back to the queue
    /// front for the caller to collect with [`Medium::kill`].
    pub fn start_next(&mut self, idx: usize, now: SimTime) -> Result<Option<(TxStart, Frame)>> {
        if !self.ifaces[idx].alive || self.ifaces[idx].current.is_some() {
            return Ok(None);
        }
        let Some(frame) = self.ifaces[idx].queue.pop_front() else {
            return Ok(None);
        };
        let duration = tx_duration(frame.size_bytes, self.params.rate_bps)?;
        let mut died = Vec::new();
        if self.charge(idx, self.params.tx_power_w * duration, now)? {
            died.push(idx);
            // put it back so that kill() accounts for it with the rest of the queue
            self.ifaces[idx].queue.push_front(frame.clone());
            return Ok(Some((TxStart { duration, listeners: vec![], died, sender_died: true }, frame)));
        }
        let rx_j = self.params.rx_power_w * duration;
        let mut listeners = Vec::new();
        for k in 0..self.topo.neighbor_indices(idx).len() {
            let j = self.topo.neighbor_indices(idx)[k];
            if !self.ifaces[j].alive {
                continue;
            }
            if self.charge(j, rx_j, now)? {
                died.push(j);
            } else {
                listeners.push(j);
            }
        }
        self.ifaces[idx].busy_until = now.after(duration);
        Ok(Some((TxStart { duration, listeners, died, sender_died: false }, frame)))
    }

    pub fn set_on_air(&mut self, idx: usize, frame: Frame, handle: EventHandle) {
        self.ifaces[idx].current = Some((frame, handle));
    }

    /// Completes the frame on the air.
    pub fn finish(&mut self, idx: usize) -> Option<Frame> {
        let (frame, _) = self.ifaces[idx].current.take()?;
        self.counters[idx].completed += 1;
        Some(frame)
    }

    /// Marks a node dead (if not already) and returns every frame it still held,
    /// plus the completion handle of an aborted transmission.
    pub fn kill(&mut self, idx: usize, now: SimTime) -> (Vec<Frame>, Option<EventHandle>) {
        let iface = &mut self.ifaces[idx];
        if iface.alive {
            iface.alive = false;
            self.death_times[idx] = Some(now);
        }
        let mut frames: Vec<Frame> = Vec::new();
        let mut handle = None;
        if let Some((f, h)) = iface.current.take() {
            frames.push(f);
            handle = Some(h);
        }
        frames.extend(iface.queue.drain(..));
        self.counters[idx].dropped_node_dead += frames.len() as u64;
        (frames, handle)
    }

    /// Removes queued frames unicast to `to`; the frame on the air is left alone.
    pub fn purge_unicast(&mut self, idx: usize, to: NodeId) -> Vec<Frame> {
        let q = &mut self.ifaces[idx].queue;
        let (gone, keep): (Vec<Frame>, Vec<Frame>) = q.drain(..).partition(|f| f.addressee == Addressee::Unicast(to));
        q.extend(keep);
        gone
    }

    /// Data packets currently held by a node's interface, by uid.
    pub fn held_packets(&self, idx: usize) -> impl Iterator<Item = &Packet> {
        let iface = &self.ifaces[idx];
        iface.current.iter().map(|(f, _)| &f.packet).chain(iface.queue.iter().map(|f| &f.packet))
    }

    pub fn packet_kind_counts(&self, idx: usize) -> BTreeMap<PacketKind, usize> {
        let mut m = BTreeMap::new();
        for p in self.held_packets(idx) {
            *m.entry(p.kind()).or_insert(0) += 1;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::DrainEstimator;
    use crate::packet::{Hello, StopTraffic, FlowKey};

    fn line(d: f64) -> Topology {
        Topology::new(&[(NodeId(0), 0.0, 0.0), (NodeId(1), d, 0.0)], 250.0, (1000.0, 1000.0)).unwrap()
    }

    #[test]
    fn range_boundary_is_inclusive() {
        assert_eq!(line(250.0).neighbors(NodeId(0)).unwrap(), vec![NodeId(1)]);
        assert_eq!(line(250.0).neighbors(NodeId(1)).unwrap(), vec![NodeId(0)]);
        assert!(line(250.01).neighbors(NodeId(0)).unwrap().is_empty());
        assert!(line(250.0).neighbors(NodeId(7)).is_err());
    }

    #[test]
    fn grid_corner_neighbor_count() {
        // brute force over the 7x7 lattice: offsets (dx, dy) in spacing units with
        // 90*sqrt(dx^2+dy^2) <= 250, dx, dy >= 0, not both zero
        let mut expected = 0;
        for dx in 0..7i32 {
            for dy in 0..7i32 {
                if (dx, dy) != (0, 0) && 90.0 * ((dx * dx + dy * dy) as f64).sqrt() <= 250.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 7);
        let nodes: Vec<_> = (0..49u32).map(|i| (NodeId(i), 90.0 * (i % 7) as f64, 90.0 * (i / 7) as f64)).collect();
        let t = Topology::new(&nodes, 250.0, (540.0, 540.0)).unwrap();
        assert_eq!(t.neighbors(NodeId(0)).unwrap().len(), expected);
    }

    #[test]
    fn durations() {
        assert!((tx_duration(532, 1e6).unwrap() - 4.256e-3).abs() < 1e-15);
        assert!((tx_duration(32, 1e6).unwrap() - 2.56e-4).abs() < 1e-15);
        assert!((tx_duration(1, 1e6).unwrap() - 8e-6).abs() < 1e-18);
        assert!(tx_duration(0, 1e6).is_err());
    }

    fn star(n_leaves: u32) -> Medium {
        let mut nodes = vec![(NodeId(0), 500.0, 500.0)];
        for k in 0..n_leaves {
            let a = k as f64;
            nodes.push((NodeId(k + 1), 500.0 + 100.0 * a.cos(), 500.0 + 100.0 * a.sin()));
        }
        let t = Topology::new(&nodes, 150.0, (1000.0, 1000.0)).unwrap();
        let bats = (0..t.len()).map(|_| Battery::new(10.0, DrainEstimator::SQAODV).unwrap()).collect();
        Medium::new(t, MediumParams::default(), FrameSizes::default(), bats).unwrap()
    }

    fn hello() -> Packet {
        Packet::Hello(Hello { uid: 1, src: NodeId(0), seq: 0 })
    }

    #[test]
    fn queue_bound() {
        let mut m = star(1);
        for _ in 0..49 {
            let f = m.frame(0, Addressee::Broadcast, hello());
            assert_eq!(m.enqueue(0, f), EnqueueOutcome::Accepted);
        }
        let f = m.frame(0, Addressee::Broadcast, hello());
        assert_eq!(m.enqueue(0, f), EnqueueOutcome::Accepted);
        let f = m.frame(0, Addressee::Broadcast, hello());
        assert_eq!(m.enqueue(0, f), EnqueueOutcome::DroppedQueueFull);
        m.kill(0, SimTime::ZERO);
        let f = m.frame(0, Addressee::Broadcast, hello());
        assert_eq!(m.enqueue(0, f), EnqueueOutcome::DroppedNodeDead);
    }

    #[test]
    fn broadcast_debits_sender_and_every_listener() {
        let mut m = star(3);
        let pkt = Packet::Rreq(crate::packet::Rreq {
            uid: 1,
            hop_count: 0,
            broadcast_id: 0,
            dst: NodeId(2),
            dst_seq: 0,
            src: NodeId(0),
            src_seq: 1,
            repair: false,
            flow: Some(crate::packet::RreqFlowExt {
                flow_id: 0,
                session_duration: DurationField::Known(10.0),
                bottleneck: 1e9,
            }),
        });
        let f = m.frame(0, Addressee::Broadcast, pkt);
        assert_eq!(f.size_bytes, 32);
        m.enqueue(0, f);
        let (start, _) = m.start_next(0, SimTime::ZERO).unwrap().unwrap();
        assert_eq!(start.listeners.len(), 3);
        assert!((start.duration - 2.56e-4).abs() < 1e-15);
        let per: f64 = 0.2818 * 2.56e-4;
        assert!((per - 7.214e-5).abs() < 1e-8);
        for i in 0..4 {
            assert!((m.debited(i) - per).abs() < 1e-15);
            assert!((m.battery(i).initial_j() - m.battery(i).residual_j() - m.debited(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn dead_listener_pays_nothing() {
        let mut m = star(2);
        m.kill(1, SimTime::ZERO);
        let stop = Packet::StopTraffic(StopTraffic { uid: 3, flow: FlowKey::new(0, 2, 0), drained: NodeId(2) });
        let f = m.frame(0, Addressee::Unicast(NodeId(2)), stop);
        assert_eq!(f.size_bytes, 16);
        m.enqueue(0, f);
        let (start, _) = m.start_next(0, SimTime::ZERO).unwrap().unwrap();
        assert_eq!(start.listeners, vec![2]);
        assert_eq!(m.debited(1), 0.0);
    }
}
