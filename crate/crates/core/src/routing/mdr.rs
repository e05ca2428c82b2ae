//! Periodic route refresh for lifetime-driven routing. Routes are chosen by
//! the same destination rule as the energy-aware variant; what differs is that
//! no node ever refuses a request and each source re-floods on a fixed period.

use super::{Action, DiscoveryKind, NodeView, Protocol, Router, Timer};
use crate::packet::FlowKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdrConfig {
    pub refresh_s: f64,
}

impl Default for MdrConfig {
    fn default() -> Self {
        MdrConfig { refresh_s: 10.0 }
    }
}

impl Router {
    /// Arms the refresh cycle the first time a route for `flow` comes up.
    pub(crate) fn arm_refresh(&mut self, flow: FlowKey) -> Option<Action> {
        if self.protocol != Protocol::Mdr {
            return None;
        }
        let lf = self.local_flows.get_mut(&flow)?;
        if lf.refresh_armed {
            return None;
        }
        lf.refresh_armed = true;
        Some(Action::SetTimer { delay: self.cfg.mdr.refresh_s, timer: Timer::MdrRefresh { flow } })
    }

    pub(crate) fn periodic_refresh(&mut self, view: &NodeView, flow: FlowKey) -> Vec<Action> {
        if self.protocol != Protocol::Mdr || !self.flow_active(&flow) {
            return vec![];
        }
        let key = self.forward_key(flow);
        let mut acts = match self.pending.get(&key).map(|p| p.kind) {
            Some(DiscoveryKind::Refresh) => {
                self.pending.get_mut(&key).expect("present").retries_used = 0;
                self.emit_rreq(view, key)
            }
            Some(_) => vec![],
            None => self.start_discovery(view, key, DiscoveryKind::Refresh),
        };
        acts.push(Action::SetTimer { delay: self.cfg.mdr.refresh_s, timer: Timer::MdrRefresh { flow } });
        acts
    }
}
