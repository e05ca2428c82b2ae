mod common;

use std::collections::BTreeMap;

use manet_sim::config::parse_config;
use manet_sim::medium::tx_duration;
use manet_sim::packet::PacketKind;
use manet_sim::routing::Protocol;
use manet_sim::sim::Simulator;
use manet_sim::trace::{find_loop, validate, render, Aux, TraceEvent, TraceLevel, TraceRecord};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Net {
    nodes: Vec<(f64, f64, f64)>,
    sessions: Vec<(usize, usize, bool, f64, u32, f64)>,
    protocol: Protocol,
    seed: u64,
}

fn net() -> impl Strategy<Value = Net> {
    (3usize..10)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((0.0..600.0f64, 0.0..600.0f64, 0.3..15.0f64), n),
                prop::collection::vec((0..n, 0..n, any::<bool>(), 1.0..20.0f64, 5u32..200, 0.0..20.0f64), 1..4),
                prop::sample::select(Protocol::ALL.to_vec()),
                any::<u64>(),
            )
        })
        .prop_map(|(nodes, sessions, protocol, seed)| Net { nodes, sessions, protocol, seed })
}

fn config(net: &Net) -> String {
    let mut s = String::from("[scenario]\nname = prop\nsim_until = 60\n\n[topology]\narea = 600 600\n");
    for (i, (x, y, e)) in net.nodes.iter().enumerate() {
        s += &format!("node = {i} {x} {y} {e}\n");
    }
    let mut fid = BTreeMap::new();
    for &(a, b, cbr, rate, pkts, start) in &net.sessions {
        let b = if a == b { (b + 1) % net.nodes.len() } else { b };
        let f = fid.entry((a, b)).or_insert(0u32);
        *f += 1;
        s += &format!("\n[session]\nflow = {a}:{b}:{f}\n");
        if cbr {
            s += &format!("kind = cbr\npkts_per_s = {rate}\n");
        } else {
            s += &format!("kind = poisson\nrate_kbps = {}\n", rate * 4.0);
        }
        s += &format!("packets = {pkts}\nstart = {start}\n");
    }
    s
}

fn build(net: &Net) -> Simulator {
    let cfg = parse_config(&config(net)).expect("generated config parses");
    Simulator::new(&cfg, net.protocol, net.seed, TraceLevel::Full).expect("simulator builds")
}

/// Hop count recorded at delivery for every delivered uid.
fn delivered_hops(trace: &[TraceRecord]) -> BTreeMap<u64, (u32, f64)> {
    let mut out = BTreeMap::new();
    for r in trace {
        if r.event == TraceEvent::Recv && r.kind == Some(PacketKind::Data) && Some(r.node) == r.flow.map(|f| f.dst) {
            if let Aux::Hops(h) = r.aux {
                out.insert(r.uid.unwrap(), (h, r.time.as_secs()));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservation_holds_at_every_pause(net in net(), pauses in prop::collection::vec(0.0..60.0f64, 1..5)) {
        let mut sim = build(&net);
        let mut pauses = pauses;
        pauses.sort_by(f64::total_cmp);
        pauses.push(f64::INFINITY);
        for t in pauses {
            sim.run_until(t).unwrap();
            for b in sim.flow_balances() {
                prop_assert!(b.holds(), "{b:?} at {}", sim.now().as_secs());
            }
            prop_assert!(sim.energy_imbalance() <= 1e-9);
        }
    }

    #[test]
    fn trace_is_well_formed_and_loop_free(net in net()) {
        let mut sim = build(&net);
        sim.run().unwrap();
        let text = render(sim.trace());
        prop_assert!(validate(&text).is_ok(), "{:?}", validate(&text));
        prop_assert_eq!(find_loop(sim.trace()), None);
    }

    #[test]
    fn hops_and_delay_agree_with_trace(net in net()) {
        let mut sim = build(&net);
        sim.run().unwrap();
        let trace = sim.trace();
        let mut recvs: BTreeMap<u64, u32> = BTreeMap::new();
        let mut sent: BTreeMap<u64, f64> = BTreeMap::new();
        for r in trace.iter().filter(|r| r.kind == Some(PacketKind::Data)) {
            match r.event {
                TraceEvent::Recv => *recvs.entry(r.uid.unwrap()).or_default() += 1,
                TraceEvent::Send => { sent.insert(r.uid.unwrap(), r.time.as_secs()); }
                _ => {}
            }
        }
        let per_hop = tx_duration(532, 1_000_000.0).unwrap();
        for (uid, (hops, at)) in delivered_hops(trace) {
            prop_assert_eq!(recvs[&uid], hops);
            prop_assert!(at - sent[&uid] >= hops as f64 * per_hop - 1e-9);
        }
    }

    #[test]
    fn report_ranges(net in net()) {
        let mut sim = build(&net);
        sim.run().unwrap();
        let r = sim.report();
        if let Some(p) = r.pdr {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        if let Some(c) = r.coh {
            prop_assert!(c >= 0.0);
        }
        prop_assert!(r.net_curve.windows(2).all(|w| w[1].1 <= w[0].1));
        prop_assert!(r.delivered <= r.injected);
    }
}

#[test]
fn bundled_scenarios_conserve_packets_and_energy() {
    for name in manet_sim::scenarios::names() {
        let cfg = common::scenario(name);
        for p in Protocol::ALL {
            let mut sim = Simulator::new(&cfg, p, 7, TraceLevel::Off).unwrap();
            sim.run().unwrap();
            assert!(sim.flow_balances().iter().all(|b| b.holds()), "{name} {p:?}");
            assert!(sim.energy_imbalance() <= 1e-9, "{name} {p:?}");
        }
    }
}
