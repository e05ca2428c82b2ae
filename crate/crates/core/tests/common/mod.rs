//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use manet_sim::config::ScenarioConfig;
use manet_sim::des::SimTime;
use manet_sim::energy::Battery;
use manet_sim::packet::{DataPacket, FlowKey, NodeId, Packet};
use manet_sim::routing::{Action, NodeView, Protocol, Router, RoutingConfig, Timer};
use manet_sim::scenarios;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario(name: &str) -> ScenarioConfig {
    scenarios::bundled(name).expect("bundled").expect("parses")
}

pub const RANGE: f64 = 250.0;
const CAP: f64 = 1e9;

/// A connected unit-disk graph with frozen batteries.
pub struct Graph {
    pub pos: Vec<(f64, f64)>,
    pub residual: Vec<f64>,
    pub aedr: Vec<f64>,
}

impl Graph {
    pub fn n(&self) -> usize {
        self.pos.len()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (dx, dy) = (self.pos[a].0 - self.pos[b].0, self.pos[a].1 - self.pos[b].1);
        a != b && (dx * dx + dy * dy).sqrt() <= RANGE
    }

    fn connected(&self) -> bool {
        let mut seen = vec![false; self.n()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..self.n() {
                if !seen[v] && self.adjacent(u, v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Graph {
        loop {
            let n = rng.gen_range(4..=10);
            let side = rng.gen_range(300.0..700.0);
            let pos = (0..n).map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
            let residual = (0..n).map(|_| rng.gen_range(0.5..100.0)).collect();
            // a few nodes have never been sampled
            let aedr = (0..n).map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.001..0.5) }).collect();
            let g = Graph { pos, residual, aedr };
            if g.connected() {
                return g;
            }
        }
    }

    /// Predicted lifetime of node `i`, computed from scratch.
    pub fn lifetime(&self, i: usize) -> f64 {
        if self.aedr[i] <= 0.0 {
            CAP
        } else {
            (self.residual[i] / self.aedr[i]).min(CAP)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Copy {
    pub prev_hop: usize,
    pub path: Vec<usize>,
    pub arrival: f64,
}

#[derive(Debug)]
pub struct Discovery {
    /// Request copies the destination saw before it replied.
    pub retained: Vec<Copy>,
    /// Neighbour the destination replied through.
    pub reply_via: Option<usize>,
}

struct Ev {
    t: f64,
    seq: u64,
    node: usize,
    what: What,
}

enum What {
    Frame { from: usize, packet: Packet },
    Timer(Timer),
}

impl PartialEq for Ev {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ev {
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

/// Floods one route request from `src` to `dst` through real routers with
/// random per-hop delays and reports what the destination kept and chose.
pub fn discover(g: &Graph, protocol: Protocol, src: usize, dst: usize, duration: f64, rng: &mut ChaCha8Rng) -> Discovery {
    let cfg = RoutingConfig::default();
    let est = protocol.estimator();
    let batteries: Vec<Battery> = (0..g.n()).map(|i| Battery::with_state(g.residual[i], g.aedr[i], est)).collect();
    let mut routers: Vec<Router> = (0..g.n()).map(|i| Router::new(NodeId(i as u32), protocol, cfg)).collect();
    let flow = FlowKey::new(src as u32, dst as u32, 1);
    let end = SimTime::from_secs(duration).unwrap();
    routers[src].session_started(flow, Some(end));

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut sent_path: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut out = Discovery { retained: vec![], reply_via: None };

    let view = NodeView { now: SimTime::ZERO, battery: &batteries[src] };
    let pkt = DataPacket { uid: 1, flow, created_at: SimTime::ZERO, hops: 0 };
    let first = routers[src].originate_data(&view, pkt);
    let mut pending: Vec<(usize, f64, Vec<Action>, Option<usize>)> = vec![(src, 0.0, first, None)];

    while let Some((node, now, acts, trigger)) = pending.pop() {
        for a in acts {
            match a {
                Action::Broadcast { packet: Packet::Rreq(r), .. } => {
                    let path = match trigger {
                        Some(f) => {
                            let mut p = sent_path[&f].clone();
                            p.push(node);
                            p
                        }
                        None => vec![node],
                    };
                    sent_path.insert(node, path);
                    for v in 0..g.n() {
                        if g.adjacent(node, v) {
                            seq += 1;
                            let t = now + rng.gen_range(0.001..0.02);
                            heap.push(Ev { t, seq, node: v, what: What::Frame { from: node, packet: Packet::Rreq(r.clone()) } });
                        }
                    }
                }
                Action::Unicast { to, packet: Packet::Rrep(_) } if node == dst => {
                    out.reply_via = Some(to.0 as usize);
                    return out;
                }
                Action::SetTimer { delay, timer } => {
                    seq += 1;
                    heap.push(Ev { t: now + delay, seq, node, what: What::Timer(timer) });
                }
                _ => {}
            }
        }
        let Some(ev) = heap.pop() else { break };
        // stay inside the first request's timeout
        if ev.t >= cfg.rreq_timeout_s {
            break;
        }
        let view = NodeView { now: SimTime::from_secs(ev.t).unwrap(), battery: &batteries[ev.node] };
        match ev.what {
            What::Frame { from, packet } => {
                if ev.node == dst {
                    let mut path = sent_path[&from].clone();
                    path.push(dst);
                    out.retained.push(Copy { prev_hop: from, path, arrival: ev.t });
                }
                let acts = routers[ev.node].receive(&view, NodeId(from as u32), packet);
                pending.push((ev.node, ev.t, acts, Some(from)));
            }
            What::Timer(t) => {
                let acts = routers[ev.node].timer(&view, t);
                pending.push((ev.node, ev.t, acts, None));
            }
        }
    }
    out
}

/// Best copy by max-min lifetime over intermediates, then fewest hops, then arrival order.
pub fn oracle_choice(g: &Graph, copies: &[Copy]) -> Option<usize> {
    let score = |c: &Copy| {
        let inner = &c.path[1..c.path.len() - 1];
        inner.iter().map(|&i| g.lifetime(i)).fold(CAP, f64::min)
    };
    let mut best: Option<&Copy> = None;
    for c in copies {
        best = match best {
            None => Some(c),
            Some(b) => {
                let (sc, sb) = (score(c), score(b));
                if sc > sb || (sc == sb && (c.path.len() < b.path.len() || (c.path.len() == b.path.len() && c.arrival < b.arrival))) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        }
    }
    best.map(|c| c.prev_hop)
}

/// Every intermediate node on the path would have admitted the session.
pub fn admissible(g: &Graph, path: &[usize], duration: f64) -> bool {
    path[1..path.len() - 1].iter().all(|&i| g.residual[i] > duration * g.aedr[i])
}

/// One random trial. On agreement returns how many copies the destination weighed.
pub fn oracle_trial(protocol: Protocol, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Graph::random(&mut rng);
    let src = rng.gen_range(0..g.n());
    let dst = (src + rng.gen_range(1..g.n())) % g.n();
    let duration = rng.gen_range(10.0..400.0);
    let d = discover(&g, protocol, src, dst, duration, &mut rng);
    if protocol == Protocol::SqAodv {
        for c in &d.retained {
            if !admissible(&g, &c.path, duration) {
                return Err(format!("seed {seed}: inadmissible copy {:?} reached the destination", c.path));
            }
        }
    }
    let want = oracle_choice(&g, &d.retained);
    if want == d.reply_via {
        Ok(d.retained.len())
    } else {
        Err(format!("seed {seed}: destination replied via {:?}, oracle wants {:?} from {:?}", d.reply_via, want, d.retained))
    }
}
