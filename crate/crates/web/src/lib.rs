//! Browser bindings: run a scenario, preview its topology, and plot a battery's
//! drain estimate. Everything crosses the boundary as JSON strings.

use manet_sim::config::{parse_config, ScenarioConfig};
use manet_sim::des::SimTime;
use manet_sim::energy::Battery;
use manet_sim::routing::Protocol;
use manet_sim::scenarios;
use manet_sim::sim::Simulator;
use manet_sim::trace::TraceLevel;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse(text: &str) -> Result<ScenarioConfig, JsError> {
    parse_config(text).map_err(err)
}

fn protocol(cfg: &ScenarioConfig, name: &str) -> Result<Protocol, JsError> {
    if name.trim().is_empty() {
        return cfg.protocol.ok_or_else(|| err("scenario names no protocol"));
    }
    name.parse().map_err(err)
}

fn layout(cfg: &ScenarioConfig) -> Value {
    let range = cfg.topology.range;
    let pos = cfg.node_positions();
    let mut edges = Vec::new();
    for (i, a) in pos.iter().enumerate() {
        for b in &pos[i + 1..] {
            if (a.1 - b.1).hypot(a.2 - b.2) <= range {
                edges.push(json!([a.0 .0, b.0 .0]));
            }
        }
    }
    json!({
        "area": [cfg.topology.area.0, cfg.topology.area.1],
        "range": range,
        "nodes": pos.iter().map(|(id, x, y)| json!({"id": id.0, "x": x, "y": y})).collect::<Vec<_>>(),
        "edges": edges,
        "flows": cfg.sessions.iter().map(|s| json!([s.flow.src.0, s.flow.dst.0])).collect::<Vec<_>>(),
    })
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    json!(scenarios::names().collect::<Vec<_>>()).to_string()
}

#[wasm_bindgen]
pub fn scenario_text(name: &str) -> Option<String> {
    scenarios::text(name).map(str::to_string)
}

/// Node positions, unit-disk links and session endpoints.
#[wasm_bindgen]
pub fn topology(config: &str) -> Result<String, JsError> {
    Ok(layout(&parse(config)?).to_string())
}

/// Run one seed. An empty protocol uses the scenario's own.
#[wasm_bindgen]
pub fn simulate(config: &str, protocol_name: &str, seed: u64) -> Result<String, JsError> {
    let cfg = parse(config)?;
    let p = protocol(&cfg, protocol_name)?;
    let mut sim = Simulator::new(&cfg, p, seed, TraceLevel::Off).map_err(err)?;
    sim.run().map_err(err)?;
    let rep = sim.report();
    let deaths: Vec<Value> = sim.ledger().death_times.iter().map(|d| json!(d)).collect();
    let mut out = layout(&cfg);
    out["deaths"] = json!(deaths);
    out["report"] = json!({
        "protocol": rep.protocol.as_str(),
        "seed": rep.seed,
        "end_time": rep.end_time,
        "pdr": rep.pdr,
        "coh": rep.coh,
        "pd": rep.pd,
        "hops": rep.hops,
        "injected": rep.injected,
        "delivered": rep.delivered,
        "dropped": rep.dropped,
        "routing_tx": rep.routing_tx,
        "alive_end": rep.alive_end(),
    });
    out["net"] = json!(rep.net_curve);
    Ok(out.to_string())
}

/// Average drain rate and predicted lifetime of a battery drawing `power_w`
/// from `start_s` onward, sampled with the protocol's estimator.
#[wasm_bindgen]
pub fn drain_curve(initial_j: f64, power_w: f64, start_s: f64, protocol_name: &str, seconds: f64) -> Result<String, JsError> {
    if !(power_w >= 0.0 && start_s >= 0.0 && seconds > 0.0 && seconds <= 1e5) {
        return Err(err("need power >= 0, start >= 0 and 0 < seconds <= 100000"));
    }
    let p: Protocol = protocol_name.parse().map_err(err)?;
    let est = p.estimator();
    let mut b = Battery::new(initial_j, est).map_err(err)?;
    let mut pts = vec![json!([0.0, 0.0, b.lifetime(), b.residual_j()])];
    let mut t = 0.0;
    while t + est.sample_interval_s <= seconds && !b.is_depleted() {
        let lo = t.max(start_s);
        t += est.sample_interval_s;
        if t > lo {
            b.debit(power_w * (t - lo)).map_err(err)?;
        }
        b.sample(SimTime::from_secs(t).map_err(err)?).map_err(err)?;
        pts.push(json!([t, b.aedr_w(), b.lifetime(), b.residual_j()]));
    }
    Ok(json!(pts).to_string())
}
