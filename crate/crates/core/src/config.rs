//! Scenario files: a line-oriented format of `[section]` headers and
//! `key = value` pairs. `#` starts a comment. Each `[session]` header opens a
//! new traffic session.
//!
//! ```text
//! [scenario]
//! name = setA1
//! protocol = sqaodv            # optional, the CLI may override
//! seeds = 1..20                # or 1, 2, 5
//! sim_until = 800              # seconds, or `completion`
//! completion_cap = 100000      # hard stop for `completion` runs
//! pdr_counts_suppressed = no   # count never-sent packets in the pdr denominator
//! stagger = 0.25               # optional: session k starts at k * stagger * its expected length
//! load = 0.2 x 4               # optional: Poisson rate = 0.2 * 225 Kbps / 4 per session
//!
//! [topology]
//! area = 540 540
//! range = 250
//! grid = 49                    # k*k lattice, ids row-major from 0; or
//! node = 1 0 0 45              # id x y [energy]
//! energy = uniform 25 100      # for nodes without a fixed energy
//!
//! [medium]
//! rate_bps = 1000000
//! queue = 50
//! tx_power = 0.2818
//! rx_power = 0.2818
//!
//! [routing]
//! rreq_retries = 3
//! rreq_timeout = 2
//! active_route_timeout = 10
//! reverse_route_lifetime = 3
//! local_repair = yes
//! local_repair_max_hops = 2
//! rebroadcast_jitter = 0.01
//! dest_wait = 0.25
//! dest_max_candidates = 3
//! rcr_period = 0.1
//! mdr_refresh = 10
//! hello = no
//! hello_interval = 1
//! allowed_hello_loss = 2
//!
//! [session]
//! flow = 1:11:1                # src:dst:flow-id
//! kind = poisson               # or cbr
//! rate_kbps = 45               # poisson; cbr uses pkts_per_s
//! packets = 1000               # or `open`
//! start = 0                    # or `uniform 0 300`
//! declare_duration = yes
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{ConfigError, SimError};
use crate::medium::MediumParams;
use crate::packet::{FlowKey, NodeId};
use crate::routing::{Protocol, RoutingConfig};
use crate::traffic::{PacketCount, SessionSpec, StartSpec, TrafficKind, FULL_LOAD_KBPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimUntil {
    Seconds(f64),
    /// Until every session has ended, bounded by `completion_cap`.
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Grid(usize),
    Nodes(Vec<NodeSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub area: (f64, f64),
    pub range: f64,
    pub layout: Layout,
    pub energy: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub protocol: Option<Protocol>,
    pub seeds: Vec<u64>,
    pub sim_until: SimUntil,
    pub completion_cap: f64,
    pub pdr_counts_suppressed: bool,
    pub stagger: Option<f64>,
    pub load: Option<(f64, u32)>,
    pub topology: TopologyConfig,
    pub medium: MediumParams,
    pub routing: RoutingConfig,
    pub sessions: Vec<SessionSpec>,
}

impl ScenarioConfig {
    /// Positions of every node, generated or listed.
    pub fn node_positions(&self) -> Vec<(NodeId, f64, f64)> {
        match &self.topology.layout {
            Layout::Grid(n) => gen_grid(*n, self.topology.area).unwrap_or_default(),
            Layout::Nodes(v) => v.iter().map(|n| (NodeId(n.id), n.x, n.y)).collect(),
        }
    }

    pub fn fixed_energy(&self, id: NodeId) -> Option<f64> {
        match &self.topology.layout {
            Layout::Grid(_) => None,
            Layout::Nodes(v) => v.iter().find(|n| n.id == id.0).and_then(|n| n.energy),
        }
    }

    /// Per-session Poisson rate implied by `load`, if set.
    pub fn load_rate_kbps(&self) -> Option<f64> {
        self.load.map(|(frac, parallel)| frac * FULL_LOAD_KBPS / parallel as f64)
    }

    /// Replaces the rate of every Poisson session.
    pub fn set_poisson_rate(&mut self, rate_kbps: f64) {
        for s in &mut self.sessions {
            if let TrafficKind::Poisson { .. } = s.kind {
                s.kind = TrafficKind::Poisson { rate_kbps };
            }
        }
        self.load = None;
    }
}

/// `k*k` lattice spanning the area, ids row-major from 0.
pub fn gen_grid(n: usize, area: (f64, f64)) -> Result<Vec<(NodeId, f64, f64)>, String> {
    let k = (n as f64).sqrt().round() as usize;
    if k < 2 || k * k != n {
        return Err(format!("grid size {n} is not a square of an integer >= 2"));
    }
    if !(area.0 > 0.0 && area.1 > 0.0) {
        return Err(format!("grid area {}x{} must be positive", area.0, area.1));
    }
    let (sx, sy) = (area.0 / (k - 1) as f64, area.1 / (k - 1) as f64);
    let mut out = Vec::with_capacity(n);
    for row in 0..k {
        for col in 0..k {
            out.push((NodeId((row * k + col) as u32), col as f64 * sx, row as f64 * sy));
        }
    }
    Ok(out)
}

struct Errors(Vec<ConfigError>);

impl Errors {
    fn at(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(ConfigError { line, message: message.into() });
    }
}

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn positive(v: &str) -> Result<f64, String> {
    let x = num(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must be positive"))
    }
}

fn non_negative(v: &str) -> Result<f64, String> {
    let x = num(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must not be negative"))
    }
}

fn int<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn yes_no(v: &str) -> Result<bool, String> {
    match v.trim() {
        "yes" | "true" => Ok(true),
        "no" | "false" => Ok(false),
        _ => Err(format!("`{v}` must be yes or no")),
    }
}

fn pair(v: &str) -> Result<(f64, f64), String> {
    let p: Vec<&str> = v.split_whitespace().collect();
    if p.len() != 2 {
        return Err(format!("expected two numbers, got `{v}`"));
    }
    Ok((num(p[0])?, num(p[1])?))
}

fn uniform(v: &str) -> Result<(f64, f64), String> {
    let rest = v.trim().strip_prefix("uniform").ok_or_else(|| format!("expected `uniform LO HI`, got `{v}`"))?;
    let (lo, hi) = pair(rest)?;
    if lo > hi {
        return Err(format!("uniform bounds out of order: {lo} > {hi}"));
    }
    Ok((lo, hi))
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (int(a)?, int(b)?);
        if a > b {
            return Err(format!("empty seed range {v}"));
        }
        return Ok((a..=b).collect());
    }
    v.split(',').map(int::<u64>).collect()
}

#[derive(Default)]
struct SessionDraft {
    line: usize,
    flow: Option<(FlowKey, usize)>,
    kind: Option<String>,
    rate_kbps: Option<f64>,
    pkts_per_s: Option<f64>,
    packets: Option<PacketCount>,
    start: Option<StartSpec>,
    declare: Option<bool>,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, SimError> {
    let mut errs = Errors(Vec::new());
    let mut cfg = ScenarioConfig {
        name: String::from("unnamed"),
        protocol: None,
        seeds: vec![1],
        sim_until: SimUntil::Seconds(800.0),
        completion_cap: 100_000.0,
        pdr_counts_suppressed: false,
        stagger: None,
        load: None,
        topology: TopologyConfig { area: (0.0, 0.0), range: 250.0, layout: Layout::Nodes(vec![]), energy: None },
        medium: MediumParams::default(),
        routing: RoutingConfig::default(),
        sessions: vec![],
    };
    let mut section = String::new();
    let mut seen_keys: BTreeSet<(usize, String, String)> = BTreeSet::new();
    let mut section_no = 0;
    let mut grid: Option<(usize, usize)> = None;
    let mut nodes: Vec<(NodeSpec, usize)> = Vec::new();
    let mut area_line = None;
    let mut drafts: Vec<SessionDraft> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            section_no += 1;
            match section.as_str() {
                "scenario" | "topology" | "medium" | "routing" => {}
                "session" => drafts.push(SessionDraft { line: n, ..Default::default() }),
                other => errs.at(n, format!("unknown section [{other}]")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errs.at(n, format!("expected `key = value`, got `{line}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if section.is_empty() {
            errs.at(n, format!("key `{key}` outside any section"));
            continue;
        }
        if key != "node" && !seen_keys.insert((section_no, section.clone(), key.to_string())) {
            errs.at(n, format!("duplicate key `{key}` in [{section}]"));
            continue;
        }
        let res: Result<(), String> = (|| {
            match (section.as_str(), key) {
                ("scenario", "name") => cfg.name = value.to_string(),
                ("scenario", "protocol") => cfg.protocol = Some(value.parse()?),
                ("scenario", "seeds") => {
                    let s = parse_seeds(value)?;
                    let uniq: BTreeSet<_> = s.iter().collect();
                    if uniq.len() != s.len() {
                        return Err("duplicate seeds".into());
                    }
                    cfg.seeds = s;
                }
                ("scenario", "sim_until") => {
                    cfg.sim_until = if value == "completion" { SimUntil::Completion } else { SimUntil::Seconds(positive(value)?) }
                }
                ("scenario", "completion_cap") => cfg.completion_cap = positive(value)?,
                ("scenario", "pdr_counts_suppressed") => cfg.pdr_counts_suppressed = yes_no(value)?,
                ("scenario", "stagger") => cfg.stagger = Some(non_negative(value)?),
                ("scenario", "load") => {
                    let (f, k) = value.split_once('x').ok_or_else(|| format!("expected `FRACTION x SESSIONS`, got `{value}`"))?;
                    let k: u32 = int(k)?;
                    if k == 0 {
                        return Err("parallel session count must be positive".into());
                    }
                    cfg.load = Some((positive(f)?, k));
                }
                ("topology", "area") => {
                    let (w, h) = pair(value)?;
                    if !(w > 0.0 && h > 0.0) {
                        return Err(format!("area {w}x{h} must be positive"));
                    }
                    cfg.topology.area = (w, h);
                    area_line = Some(n);
                }
                ("topology", "range") => cfg.topology.range = positive(value)?,
                ("topology", "grid") => grid = Some((int(value)?, n)),
                ("topology", "energy") => {
                    let (lo, hi) = uniform(value)?;
                    if lo <= 0.0 {
                        return Err("energies must be positive".into());
                    }
                    cfg.topology.energy = Some((lo, hi));
                }
                ("topology", "node") => {
                    let p: Vec<&str> = value.split_whitespace().collect();
                    if p.len() != 3 && p.len() != 4 {
                        return Err(format!("expected `id x y [energy]`, got `{value}`"));
                    }
                    let energy = match p.get(3) {
                        Some(e) => Some(positive(e).map_err(|e| format!("energy {e}"))?),
                        None => None,
                    };
                    nodes.push((NodeSpec { id: int(p[0])?, x: num(p[1])?, y: num(p[2])?, energy }, n));
                }
                ("medium", "rate_bps") => cfg.medium.rate_bps = positive(value)?,
                ("medium", "queue") => {
                    cfg.medium.queue_capacity = int(value)?;
                    if cfg.medium.queue_capacity == 0 {
                        return Err("queue capacity must be positive".into());
                    }
                }
                ("medium", "tx_power") => cfg.medium.tx_power_w = non_negative(value)?,
                ("medium", "rx_power") => cfg.medium.rx_power_w = non_negative(value)?,
                ("routing", k) => routing_key(&mut cfg.routing, k, value)?,
                ("session", k) => {
                    let d = drafts.last_mut().expect("session opened");
                    match k {
                        "flow" => d.flow = Some((value.parse()?, n)),
                        "kind" => match value {
                            "cbr" | "poisson" => d.kind = Some(value.to_string()),
                            _ => return Err(format!("kind must be cbr or poisson, got `{value}`")),
                        },
                        "rate_kbps" => d.rate_kbps = Some(positive(value)?),
                        "pkts_per_s" => d.pkts_per_s = Some(positive(value)?),
                        "packets" => {
                            d.packets = Some(if value == "open" {
                                PacketCount::Open
                            } else {
                                let c: u64 = int(value)?;
                                if c == 0 {
                                    return Err("packet count must be positive".into());
                                }
                                PacketCount::Finite(c)
                            })
                        }
                        "start" => {
                            d.start = Some(if value.starts_with("uniform") {
                                let (a, b) = uniform(value)?;
                                if a < 0.0 {
                                    return Err("start times must not be negative".into());
                                }
                                StartSpec::Uniform(a, b)
                            } else {
                                StartSpec::At(non_negative(value)?)
                            })
                        }
                        "declare_duration" => d.declare = Some(yes_no(value)?),
                        _ => return Err(format!("unknown key `{k}` in [session]")),
                    }
                }
                (s, k) => return Err(format!("unknown key `{k}` in [{s}]")),
            }
            Ok(())
        })();
        if let Err(e) = res {
            errs.at(n, e);
        }
    }

    // topology
    match (grid, nodes.is_empty()) {
        (Some(_), false) => errs.at(grid.unwrap().1, "use either `grid` or `node` lines, not both"),
        (Some((g, line)), true) => match gen_grid(g, cfg.topology.area) {
            Ok(_) => cfg.topology.layout = Layout::Grid(g),
            Err(e) => errs.at(line, e),
        },
        (None, true) => errs.at(0, "topology has no nodes"),
        (None, false) => {
            let mut ids = BTreeSet::new();
            for (nd, line) in &nodes {
                if !ids.insert(nd.id) {
                    errs.at(*line, format!("duplicate node id {}", nd.id));
                }
                let (w, h) = cfg.topology.area;
                if nd.x < 0.0 || nd.y < 0.0 || nd.x > w || nd.y > h {
                    errs.at(*line, format!("node {} at ({}, {}) lies outside the {w}x{h} area", nd.id, nd.x, nd.y));
                }
                if nd.energy.is_none() && cfg.topology.energy.is_none() {
                    errs.at(*line, format!("node {} has no energy and no `energy = uniform` default", nd.id));
                }
            }
            cfg.topology.layout = Layout::Nodes(nodes.iter().map(|(nd, _)| *nd).collect());
        }
    }
    if area_line.is_none() {
        errs.at(0, "[topology] needs `area = W H`");
    }
    if matches!(cfg.topology.layout, Layout::Grid(_)) && cfg.topology.energy.is_none() {
        errs.at(grid.map(|g| g.1).unwrap_or(0), "grid topology needs `energy = uniform LO HI`");
    }
    let ids: BTreeSet<u32> = cfg.node_positions().iter().map(|(id, _, _)| id.0).collect();

    // sessions
    let mut flows = BTreeMap::new();
    for d in drafts {
        let Some((flow, fline)) = d.flow else {
            errs.at(d.line, "[session] needs `flow = src:dst:fid`");
            continue;
        };
        for end in [flow.src, flow.dst] {
            if !ids.contains(&end.0) {
                errs.at(fline, format!("flow {flow} references node {end}, which is not in the topology"));
            }
        }
        if flow.src == flow.dst {
            errs.at(fline, format!("flow {flow} has the same source and destination"));
        }
        if flows.insert((flow.src, flow.dst, flow.fid), fline).is_some() {
            errs.at(fline, format!("duplicate flow id {} for {} -> {}", flow.fid, flow.src, flow.dst));
        }
        let kind = match d.kind.as_deref() {
            Some("cbr") => match d.pkts_per_s {
                Some(p) => TrafficKind::Cbr { pkts_per_s: p },
                None => {
                    errs.at(d.line, "cbr session needs `pkts_per_s`");
                    continue;
                }
            },
            Some(_) => match d.rate_kbps {
                Some(r) => TrafficKind::Poisson { rate_kbps: r },
                None => {
                    errs.at(d.line, "poisson session needs `rate_kbps`");
                    continue;
                }
            },
            None => {
                errs.at(d.line, "[session] needs `kind`");
                continue;
            }
        };
        let Some(packets) = d.packets else {
            errs.at(d.line, "[session] needs `packets`");
            continue;
        };
        cfg.sessions.push(SessionSpec {
            flow,
            kind,
            packets,
            start: d.start.unwrap_or(StartSpec::At(0.0)),
            declare_duration: d.declare.unwrap_or(true),
        });
    }
    if cfg.sim_until == SimUntil::Completion && cfg.sessions.iter().any(|s| s.packets == PacketCount::Open) {
        errs.at(0, "sim_until = completion needs every session to have a packet count");
    }

    if errs.0.is_empty() {
        Ok(cfg)
    } else {
        errs.0.sort_by_key(|e| e.line);
        Err(SimError::Config(errs.0))
    }
}

fn routing_key(r: &mut RoutingConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "rreq_retries" => r.rreq_retries = int(v)?,
        "rreq_timeout" => r.rreq_timeout_s = positive(v)?,
        "active_route_timeout" => r.active_route_timeout_s = positive(v)?,
        "reverse_route_lifetime" => r.reverse_route_lifetime_s = positive(v)?,
        "local_repair" => r.local_repair = yes_no(v)?,
        "local_repair_max_hops" => r.local_repair_max_hops = int(v)?,
        "rebroadcast_jitter" => r.rebroadcast_jitter_s = non_negative(v)?,
        "dest_wait" => r.dest_wait_s = positive(v)?,
        "dest_max_candidates" => {
            r.dest_max_candidates = int(v)?;
            if r.dest_max_candidates == 0 {
                return Err("dest_max_candidates must be positive".into());
            }
        }
        "rcr_period" => r.rcr_period_s = positive(v)?,
        "mdr_refresh" => r.mdr.refresh_s = positive(v)?,
        "hello" => r.hello_enabled = yes_no(v)?,
        "hello_interval" => r.hello_interval_s = positive(v)?,
        "allowed_hello_loss" => r.allowed_hello_loss = int(v)?,
        _ => return Err(format!("unknown key `{key}` in [routing]")),
    }
    Ok(())
}

fn yn(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Writes a config that [`parse_config`] reads back unchanged.
pub fn print_config(c: &ScenarioConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "[scenario]");
    let _ = writeln!(w, "name = {}", c.name);
    if let Some(p) = c.protocol {
        let _ = writeln!(w, "protocol = {p}");
    }
    let seeds: Vec<String> = c.seeds.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(w, "seeds = {}", seeds.join(", "));
    match c.sim_until {
        SimUntil::Seconds(t) => {
            let _ = writeln!(w, "sim_until = {t}");
        }
        SimUntil::Completion => {
            let _ = writeln!(w, "sim_until = completion");
        }
    }
    let _ = writeln!(w, "completion_cap = {}", c.completion_cap);
    let _ = writeln!(w, "pdr_counts_suppressed = {}", yn(c.pdr_counts_suppressed));
    if let Some(st) = c.stagger {
        let _ = writeln!(w, "stagger = {st}");
    }
    if let Some((f, k)) = c.load {
        let _ = writeln!(w, "load = {f} x {k}");
    }

    let t = &c.topology;
    let _ = writeln!(w, "\n[topology]");
    let _ = writeln!(w, "area = {} {}", t.area.0, t.area.1);
    let _ = writeln!(w, "range = {}", t.range);
    if let Some((lo, hi)) = t.energy {
        let _ = writeln!(w, "energy = uniform {lo} {hi}");
    }
    match &t.layout {
        Layout::Grid(n) => {
            let _ = writeln!(w, "grid = {n}");
        }
        Layout::Nodes(v) => {
            for n in v {
                match n.energy {
                    Some(e) => {
                        let _ = writeln!(w, "node = {} {} {} {e}", n.id, n.x, n.y);
                    }
                    None => {
                        let _ = writeln!(w, "node = {} {} {}", n.id, n.x, n.y);
                    }
                }
            }
        }
    }

    let m = &c.medium;
    let _ = writeln!(w, "\n[medium]");
    let _ = writeln!(w, "rate_bps = {}", m.rate_bps);
    let _ = writeln!(w, "queue = {}", m.queue_capacity);
    let _ = writeln!(w, "tx_power = {}", m.tx_power_w);
    let _ = writeln!(w, "rx_power = {}", m.rx_power_w);

    let r = &c.routing;
    let _ = writeln!(w, "\n[routing]");
    let _ = writeln!(w, "rreq_retries = {}", r.rreq_retries);
    let _ = writeln!(w, "rreq_timeout = {}", r.rreq_timeout_s);
    let _ = writeln!(w, "active_route_timeout = {}", r.active_route_timeout_s);
    let _ = writeln!(w, "reverse_route_lifetime = {}", r.reverse_route_lifetime_s);
    let _ = writeln!(w, "local_repair = {}", yn(r.local_repair));
    let _ = writeln!(w, "local_repair_max_hops = {}", r.local_repair_max_hops);
    let _ = writeln!(w, "rebroadcast_jitter = {}", r.rebroadcast_jitter_s);
    let _ = writeln!(w, "dest_wait = {}", r.dest_wait_s);
    let _ = writeln!(w, "dest_max_candidates = {}", r.dest_max_candidates);
    let _ = writeln!(w, "rcr_period = {}", r.rcr_period_s);
    let _ = writeln!(w, "mdr_refresh = {}", r.mdr.refresh_s);
    let _ = writeln!(w, "hello = {}", yn(r.hello_enabled));
    let _ = writeln!(w, "hello_interval = {}", r.hello_interval_s);
    let _ = writeln!(w, "allowed_hello_loss = {}", r.allowed_hello_loss);

    for sess in &c.sessions {
        let _ = writeln!(w, "\n[session]");
        let _ = writeln!(w, "flow = {}", sess.flow);
        match sess.kind {
            TrafficKind::Cbr { pkts_per_s } => {
                let _ = writeln!(w, "kind = cbr\npkts_per_s = {pkts_per_s}");
            }
            TrafficKind::Poisson { rate_kbps } => {
                let _ = writeln!(w, "kind = poisson\nrate_kbps = {rate_kbps}");
            }
        }
        let _ = writeln!(w, "packets = {}", sess.packets);
        match sess.start {
            StartSpec::At(t) => {
                let _ = writeln!(w, "start = {t}");
            }
            StartSpec::Uniform(a, b) => {
                let _ = writeln!(w, "start = uniform {a} {b}");
            }
        }
        let _ = writeln!(w, "declare_duration = {}", yn(sess.declare_duration));
    }
    s
}
