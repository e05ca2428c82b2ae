//! Per-event trace records, their tab-separated line format, and a validator.
//!
//! Line grammar (tab-separated, 8 fields):
//!
//! ```text
//! time  event  node  kind  uid  flow  size  aux
//! ```
//!
//! * `time`: seconds with exactly 9 decimals, non-decreasing through the file
//! * `event`: `SEND` `RECV` `FWD` `DROP` `DIE` `SESS_END`
//! * `node`: node id
//! * `kind`: `DATA` `RREQ` `RREP` `RERR` `RCR` `STOP` `HELLO`, or `-` for `DIE`/`SESS_END`
//! * `uid`: packet uid or `-`
//! * `flow`: `src:dst:fid` or `-`
//! * `size`: frame octets or `-`
//! * `aux`: hop count for `RECV`/`FWD`/`SEND` (or `-`), a cause token for `DROP`,
//!   residual joules with 6 decimals for `DIE`, a reason token for `SESS_END`
//!
//! Every uid's first record is its `SEND`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::des::SimTime;
use crate::error::{Result, SimError};
use crate::packet::{FlowKey, NodeId, PacketKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceEvent {
    Send,
    Recv,
    Fwd,
    Drop,
    Die,
    SessEnd,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Send => "SEND",
            TraceEvent::Recv => "RECV",
            TraceEvent::Fwd => "FWD",
            TraceEvent::Drop => "DROP",
            TraceEvent::Die => "DIE",
            TraceEvent::SessEnd => "SESS_END",
        }
    }

    pub fn parse(s: &str) -> Option<TraceEvent> {
        Some(match s {
            "SEND" => TraceEvent::Send,
            "RECV" => TraceEvent::Recv,
            "FWD" => TraceEvent::Fwd,
            "DROP" => TraceEvent::Drop,
            "DIE" => TraceEvent::Die,
            "SESS_END" => TraceEvent::SessEnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aux {
    None,
    Hops(u32),
    Token(&'static str),
    Joules(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub event: TraceEvent,
    pub node: NodeId,
    pub kind: Option<PacketKind>,
    pub uid: Option<u64>,
    pub flow: Option<FlowKey>,
    pub size: Option<u32>,
    pub aux: Aux,
}

fn dash<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let aux = match &self.aux {
            Aux::None => "-".to_string(),
            Aux::Hops(h) => h.to_string(),
            Aux::Token(t) => (*t).to_string(),
            Aux::Joules(j) => format!("{j:.6}"),
        };
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            self.event.as_str(),
            self.node,
            self.kind.map_or("-", |k| k.as_str()),
            dash(&self.uid),
            dash(&self.flow),
            dash(&self.size),
            aux
        )
    }
}

/// How much of the run to record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    #[default]
    Off,
    /// Data packets, deaths and session ends.
    Data,
    Full,
}

impl TraceLevel {
    pub fn wants(self, kind: Option<PacketKind>) -> bool {
        match self {
            TraceLevel::Off => false,
            TraceLevel::Data => matches!(kind, None | Some(PacketKind::Data)),
            TraceLevel::Full => true,
        }
    }
}

pub fn render(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 64);
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

fn bad<T>(line: usize, reason: impl Into<String>) -> Result<T> {
    Err(SimError::Trace { line, reason: reason.into() })
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_uppercase() || c == '_')
}

fn fixed_decimals(s: &str, places: usize) -> bool {
    let (int, frac) = match s.split_once('.') {
        Some(p) => p,
        None => return false,
    };
    !int.is_empty()
        && int.chars().all(|c| c.is_ascii_digit())
        && frac.len() == places
        && frac.chars().all(|c| c.is_ascii_digit())
}

/// Checks every line against the grammar above. Returns the number of records.
pub fn validate(text: &str) -> Result<usize> {
    let mut last = f64::NEG_INFINITY;
    let mut seen_send: BTreeSet<u64> = BTreeSet::new();
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() {
            return bad(n, "empty line");
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return bad(n, format!("expected 8 tab-separated fields, found {}", f.len()));
        }
        if !fixed_decimals(f[0], 9) {
            return bad(n, format!("time `{}` is not a 9-decimal number", f[0]));
        }
        let t: f64 = f[0].parse().expect("digits");
        if t < last {
            return bad(n, format!("time {t} goes backwards"));
        }
        last = t;
        let Some(ev) = TraceEvent::parse(f[1]) else { return bad(n, format!("unknown event `{}`", f[1])) };
        if f[2].parse::<u32>().is_err() {
            return bad(n, format!("node `{}` is not an id", f[2]));
        }
        let kind = match f[3] {
            "-" => None,
            k => match PacketKind::parse(k) {
                Some(k) => Some(k),
                None => return bad(n, format!("unknown packet kind `{k}`")),
            },
        };
        let uid = match f[4] {
            "-" => None,
            u => match u.parse::<u64>() {
                Ok(u) => Some(u),
                Err(_) => return bad(n, format!("uid `{u}` is not an integer")),
            },
        };
        if f[5] != "-" && f[5].parse::<FlowKey>().is_err() {
            return bad(n, format!("flow `{}` is not src:dst:fid", f[5]));
        }
        if f[6] != "-" && f[6].parse::<u32>().map_or(true, |s| s == 0) {
            return bad(n, format!("size `{}` is not a positive integer", f[6]));
        }
        let aux = f[7];
        match ev {
            TraceEvent::Die | TraceEvent::SessEnd => {
                if kind.is_some() || uid.is_some() {
                    return bad(n, format!("{} carries no packet", ev.as_str()));
                }
                let ok = if ev == TraceEvent::Die { fixed_decimals(aux, 6) } else { is_token(aux) };
                if !ok {
                    return bad(n, format!("bad aux `{aux}` for {}", ev.as_str()));
                }
            }
            _ => {
                let (Some(_), Some(u)) = (kind, uid) else {
                    return bad(n, format!("{} without packet kind and uid", ev.as_str()));
                };
                if ev == TraceEvent::Drop {
                    if !is_token(aux) {
                        return bad(n, format!("drop cause `{aux}` is not a token"));
                    }
                } else if aux != "-" && aux.parse::<u32>().is_err() {
                    return bad(n, format!("aux `{aux}` is not a hop count"));
                }
                if ev == TraceEvent::Send {
                    if !seen_send.insert(u) {
                        return bad(n, format!("uid {u} sent twice"));
                    }
                } else if !seen_send.contains(&u) {
                    return bad(n, format!("uid {u} appears before its SEND"));
                }
            }
        }
        count += 1;
    }
    Ok(count)
}

/// Nodes visited by each data packet: its origin, then every node that received it.
pub fn data_paths(records: &[TraceRecord]) -> BTreeMap<u64, Vec<NodeId>> {
    let mut paths: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
    for r in records {
        if r.kind != Some(PacketKind::Data) {
            continue;
        }
        let Some(uid) = r.uid else { continue };
        if matches!(r.event, TraceEvent::Send | TraceEvent::Recv) {
            paths.entry(uid).or_default().push(r.node);
        }
    }
    paths
}

/// First data packet that visits some node twice, if any.
pub fn find_loop(records: &[TraceRecord]) -> Option<(u64, NodeId)> {
    for (uid, path) in data_paths(records) {
        let mut seen = BTreeSet::new();
        for n in path {
            if !seen.insert(n) {
                return Some((uid, n));
            }
        }
    }
    None
}
