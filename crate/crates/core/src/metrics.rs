//! Run accounting and the derived figures: delivery ratio, control overhead,
//! delay, hop count, node-alive curve and connection expiry times.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::des::SimTime;
use crate::packet::{DataPacket, FlowKey};
use crate::routing::{DropCause, Protocol};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: BTreeMap<DropCause, u64>,
    /// Packets never generated because the session ended early.
    pub suppressed: u64,
    pub delay_sum: f64,
    pub hop_sum: u64,
}

impl FlowStats {
    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CetState {
    tentative: Option<f64>,
    fixed: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLedger {
    pub flows: BTreeMap<FlowKey, FlowStats>,
    pub routing_tx: u64,
    pub data_tx: u64,
    pub energy_rejects: u64,
    pub death_times: Vec<Option<f64>>,
    cet: BTreeMap<FlowKey, CetState>,
}

impl MetricsLedger {
    pub fn new(node_count: usize) -> MetricsLedger {
        MetricsLedger { death_times: vec![None; node_count], ..Default::default() }
    }

    pub fn register(&mut self, flow: FlowKey) {
        self.flows.entry(flow).or_default();
    }

    pub fn injected(&mut self, flow: FlowKey) {
        self.flows.entry(flow).or_default().injected += 1;
    }

    pub fn delivered(&mut self, pkt: &DataPacket, now: SimTime) {
        let s = self.flows.entry(pkt.flow).or_default();
        s.delivered += 1;
        s.delay_sum += now.as_secs() - pkt.created_at.as_secs();
        s.hop_sum += u64::from(pkt.hops);
    }

    pub fn dropped(&mut self, flow: FlowKey, cause: DropCause) {
        *self.flows.entry(flow).or_default().dropped.entry(cause).or_insert(0) += 1;
    }

    pub fn suppressed(&mut self, flow: FlowKey, n: u64) {
        self.flows.entry(flow).or_default().suppressed += n;
    }

    pub fn node_died(&mut self, idx: usize, now: SimTime) {
        if self.death_times[idx].is_none() {
            self.death_times[idx] = Some(now.as_secs());
        }
    }

    /// Discovery failed; the connection counts as expired here unless a route comes back.
    pub fn route_lost(&mut self, flow: FlowKey, now: SimTime) {
        let c = self.cet.entry(flow).or_default();
        if c.tentative.is_none() {
            c.tentative = Some(now.as_secs());
        }
    }

    pub fn route_restored(&mut self, flow: FlowKey) {
        if let Some(c) = self.cet.get_mut(&flow) {
            c.tentative = None;
        }
    }

    /// The session ended for good at `now`.
    pub fn connection_ended(&mut self, flow: FlowKey, now: SimTime) {
        let c = self.cet.entry(flow).or_default();
        if c.fixed.is_none() {
            c.fixed = Some(c.tentative.unwrap_or(now.as_secs()).min(now.as_secs()));
        }
    }

    /// Session completed normally: no expiry is recorded, even a tentative one.
    pub fn session_completed(&mut self, flow: FlowKey) {
        if let Some(c) = self.cet.get_mut(&flow) {
            if c.fixed.is_none() {
                c.tentative = None;
            }
        }
    }

    pub fn totals(&self) -> FlowStats {
        let mut t = FlowStats::default();
        for s in self.flows.values() {
            t.injected += s.injected;
            t.delivered += s.delivered;
            t.suppressed += s.suppressed;
            t.delay_sum += s.delay_sum;
            t.hop_sum += s.hop_sum;
            for (c, n) in &s.dropped {
                *t.dropped.entry(*c).or_insert(0) += n;
            }
        }
        t
    }

    pub fn pdr(&self) -> Option<f64> {
        let t = self.totals();
        pdr(t.delivered, t.injected)
    }

    /// Delivery ratio counting suppressed packets as injected.
    pub fn pdr_strict(&self) -> Option<f64> {
        let t = self.totals();
        pdr(t.delivered, t.injected + t.suppressed)
    }

    pub fn coh(&self) -> Option<f64> {
        coh(self.routing_tx, self.totals().delivered)
    }

    pub fn avg_delay(&self) -> Option<f64> {
        let t = self.totals();
        ratio(t.delay_sum, t.delivered)
    }

    pub fn avg_hops(&self) -> Option<f64> {
        let t = self.totals();
        ratio(t.hop_sum as f64, t.delivered)
    }

    pub fn net_curve(&self, horizon_s: f64) -> Vec<(u64, usize)> {
        let deaths: Vec<f64> = self.death_times.iter().flatten().copied().collect();
        net_curve(self.death_times.len(), &deaths, horizon_s)
    }

    /// Closed connection expiries plus any still-open route loss at the end of the run.
    pub fn cet_list(&self) -> Vec<(FlowKey, f64)> {
        let mut v: Vec<(FlowKey, f64)> =
            self.cet.iter().filter_map(|(f, c)| c.fixed.or(c.tentative).map(|t| (*f, t))).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }
}

pub fn pdr(delivered: u64, injected: u64) -> Option<f64> {
    (injected > 0).then(|| delivered as f64 / injected as f64)
}

pub fn coh(routing_tx: u64, delivered: u64) -> Option<f64> {
    (delivered > 0).then(|| routing_tx as f64 / delivered as f64)
}

fn ratio(sum: f64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Alive-node count sampled at every whole second from 0 to `horizon_s`.
/// A node dying at time t is already dead at t.
pub fn net_curve(n: usize, deaths: &[f64], horizon_s: f64) -> Vec<(u64, usize)> {
    let mut sorted = deaths.to_vec();
    sorted.sort_by(f64::total_cmp);
    let end = horizon_s.max(0.0).floor() as u64;
    let mut out = Vec::with_capacity(end as usize + 1);
    let mut k = 0;
    for t in 0..=end {
        while k < sorted.len() && sorted[k] <= t as f64 {
            k += 1;
        }
        out.push((t, n - k));
    }
    out
}

/// Alive count at time `t` from a sampled curve (the last sample not after `t`).
pub fn alive_at(curve: &[(u64, usize)], t: f64) -> Option<usize> {
    curve.iter().take_while(|(s, _)| *s as f64 <= t).last().map(|&(_, a)| a)
}

/// One run's results, in the form written to report files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub end_time: f64,
    pub nodes: usize,
    pub pdr: Option<f64>,
    pub pdr_strict: Option<f64>,
    pub coh: Option<f64>,
    pub pd: Option<f64>,
    pub hops: Option<f64>,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub suppressed: u64,
    pub routing_tx: u64,
    pub data_tx: u64,
    pub energy_rejects: u64,
    pub drops_by_cause: BTreeMap<DropCause, u64>,
    pub net_curve: Vec<(u64, usize)>,
    pub cet: Vec<(FlowKey, f64)>,
}

/// Scalar metrics in report order; the batch aggregator works over these.
pub const SCALAR_KEYS: [&str; 12] = [
    "pdr",
    "pdr_strict",
    "coh",
    "pd",
    "hops",
    "injected",
    "delivered",
    "dropped",
    "suppressed",
    "routing_tx",
    "data_tx",
    "alive_end",
];

impl RunReport {
    pub fn from_ledger(l: &MetricsLedger, protocol: Protocol, seed: u64, end_time: f64) -> RunReport {
        let t = l.totals();
        RunReport {
            protocol,
            seed,
            end_time,
            nodes: l.death_times.len(),
            pdr: l.pdr(),
            pdr_strict: l.pdr_strict(),
            coh: l.coh(),
            pd: l.avg_delay(),
            hops: l.avg_hops(),
            injected: t.injected,
            delivered: t.delivered,
            dropped: t.dropped_total(),
            suppressed: t.suppressed,
            routing_tx: l.routing_tx,
            data_tx: l.data_tx,
            energy_rejects: l.energy_rejects,
            drops_by_cause: t.dropped,
            net_curve: l.net_curve(end_time),
            cet: l.cet_list(),
        }
    }

    pub fn alive_end(&self) -> usize {
        self.net_curve.last().map(|&(_, a)| a).unwrap_or(self.nodes)
    }

    pub fn alive_at(&self, t: f64) -> Option<usize> {
        alive_at(&self.net_curve, t)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        match key {
            "pdr" => self.pdr,
            "pdr_strict" => self.pdr_strict,
            "coh" => self.coh,
            "pd" => self.pd,
            "hops" => self.hops,
            "injected" => Some(self.injected as f64),
            "delivered" => Some(self.delivered as f64),
            "dropped" => Some(self.dropped as f64),
            "suppressed" => Some(self.suppressed as f64),
            "routing_tx" => Some(self.routing_tx as f64),
            "data_tx" => Some(self.data_tx as f64),
            "alive_end" => Some(self.alive_end() as f64),
            _ => None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "protocol={}", self.protocol);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "end_time={:.6}", self.end_time);
        let _ = writeln!(s, "nodes={}", self.nodes);
        for key in SCALAR_KEYS {
            let _ = writeln!(s, "{key}={}", fmt_metric(self.scalar(key)));
        }
        let _ = writeln!(s, "energy_rejects={}", self.energy_rejects);
        for c in DropCause::ALL {
            let _ = writeln!(s, "drop.{}={}", c.as_str(), self.drops_by_cause.get(&c).copied().unwrap_or(0));
        }
        s.push_str("[net_curve]\ntime,alive\n");
        for (t, a) in &self.net_curve {
            let _ = writeln!(s, "{t},{a}");
        }
        s.push_str("[cet]\nflow,time\n");
        for (f, t) in &self.cet {
            let _ = writeln!(s, "{f},{t:.6}");
        }
        s
    }
}

pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{x:.0}"),
        Some(x) => format!("{x:.6}"),
        None => "absent".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(flow: FlowKey, created: f64, hops: u32) -> DataPacket {
        DataPacket { uid: 1, flow, created_at: SimTime::secs(created), hops }
    }

    #[test]
    fn ratio_metrics() {
        assert_eq!(pdr(900, 1000), Some(0.9));
        assert_eq!(pdr(5, 5), Some(1.0));
        assert_eq!(pdr(0, 0), None);
        assert_eq!(coh(500, 1000), Some(0.5));
        assert_eq!(coh(0, 10), Some(0.0));
        assert_eq!(coh(10, 0), None);

        let f = FlowKey::new(1, 2, 1);
        let mut l = MetricsLedger::new(3);
        l.delivered(&pkt(f, 1.0, 1), SimTime::secs(1.1));
        l.delivered(&pkt(f, 2.0, 1), SimTime::secs(2.3));
        assert!((l.avg_delay().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(l.avg_hops(), Some(1.0));
        assert_eq!(MetricsLedger::new(1).avg_delay(), None);
    }

    #[test]
    fn net_curve_steps() {
        let c = net_curve(3, &[100.0, 200.0], 250.0);
        assert_eq!(c[99], (99, 3));
        assert_eq!(c[100], (100, 2));
        assert_eq!(c[200], (200, 1));
        assert!(net_curve(4, &[], 10.0).iter().all(|&(_, a)| a == 4));
        assert_eq!(alive_at(&c, 150.5), Some(2));
    }

    #[test]
    fn cet_rules() {
        let (a, b, c) = (FlowKey::new(1, 2, 1), FlowKey::new(3, 4, 1), FlowKey::new(5, 6, 1));
        let mut l = MetricsLedger::new(6);
        l.connection_ended(a, SimTime::secs(300.0));
        l.connection_ended(a, SimTime::secs(310.0));
        l.route_lost(b, SimTime::secs(50.0));
        l.route_restored(b);
        l.route_lost(b, SimTime::secs(80.0));
        l.connection_ended(b, SimTime::secs(90.0));
        l.route_lost(c, SimTime::secs(20.0));
        l.session_completed(c);
        assert_eq!(l.cet_list(), vec![(b, 80.0), (a, 300.0)]);
    }

    #[test]
    fn report_prints_absent_fields() {
        let l = MetricsLedger::new(2);
        let r = RunReport::from_ledger(&l, Protocol::Aodv, 7, 3.0);
        let text = r.to_text();
        assert!(text.contains("pdr=absent\n"));
        assert!(text.contains("coh=absent\n"));
        assert!(text.contains("[net_curve]\ntime,alive\n0,2\n1,2\n2,2\n3,2\n[cet]\nflow,time\n"));
    }
}
