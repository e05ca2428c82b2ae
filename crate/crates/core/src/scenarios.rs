//! Scenario files shipped with the binary.

use crate::config::{parse_config, ScenarioConfig};
use crate::error::Result;

pub const BUNDLED: &[(&str, &str)] = &[
    ("expt1", include_str!("../scenarios/expt1.cfg")),
    ("expt2", include_str!("../scenarios/expt2.cfg")),
    ("expt3", include_str!("../scenarios/expt3.cfg")),
    ("expt4", include_str!("../scenarios/expt4.cfg")),
    ("expt5", include_str!("../scenarios/expt5.cfg")),
    ("setA1", include_str!("../scenarios/setA1.cfg")),
    ("setA2", include_str!("../scenarios/setA2.cfg")),
    ("setB", include_str!("../scenarios/setB.cfg")),
    ("diamond", include_str!("../scenarios/diamond.cfg")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parses a bundled scenario by name.
pub fn bundled(name: &str) -> Option<Result<ScenarioConfig>> {
    text(name).map(parse_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Layout, SimUntil};
    use crate::packet::{FlowKey, NodeId};
    use crate::traffic::{PacketCount, StartSpec, TrafficKind};

    #[test]
    fn every_bundled_scenario_parses() {
        for n in names() {
            let c = bundled(n).unwrap().unwrap_or_else(|e| panic!("{n}: {e}"));
            assert_eq!(c.name, n);
        }
    }

    #[test]
    fn twelve_node_tables() {
        let c = bundled("expt3").unwrap().unwrap();
        assert_eq!(c.fixed_energy(NodeId(1)), Some(94.0));
        assert_eq!(c.sessions.len(), 12);
        assert_eq!((c.sessions[6].flow.src, c.sessions[6].flow.dst), (NodeId(12), NodeId(3)));
        assert!(c.sessions.iter().all(|s| s.packets == PacketCount::Finite(1000)));
        let e1 = bundled("expt1").unwrap().unwrap();
        let energies: Vec<f64> = (1..=12).map(|i| e1.fixed_energy(NodeId(i)).unwrap()).collect();
        assert_eq!(energies, vec![45.0, 20.0, 24.0, 62.0, 59.0, 93.0, 85.0, 68.0, 24.0, 30.0, 55.0, 39.0]);
        assert_eq!(bundled("expt5").unwrap().unwrap().fixed_energy(NodeId(7)), Some(100.0));
        assert!((c.load_rate_kbps().unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn set_a_and_b_parameters() {
        let a1 = bundled("setA1").unwrap().unwrap();
        let a2 = bundled("setA2").unwrap().unwrap();
        let b = bundled("setB").unwrap().unwrap();
        assert_eq!(a1.topology.layout, Layout::Grid(49));
        assert_eq!(a1.sim_until, SimUntil::Seconds(800.0));
        assert_eq!(a1.topology.energy, Some((25.0, 100.0)));
        assert!(a1.sessions.iter().all(|s| s.kind == TrafficKind::Cbr { pkts_per_s: 3.0 } && s.start == StartSpec::At(0.0)));
        assert!(a2.sessions.iter().all(|s| s.start == StartSpec::Uniform(0.0, 300.0)));
        assert_eq!(b.topology.energy, Some((75.0, 300.0)));
        assert!(b.sessions.iter().all(|s| s.packets == PacketCount::Finite(3000)));
        assert_eq!(b.sim_until, SimUntil::Completion);
        assert_eq!(a1.sessions[0].flow, FlowKey::new(0, 48, 1));
    }
}
