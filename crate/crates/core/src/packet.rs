//! Packet types carried by the medium, and a byte codec for the routing frames.
//!
//! Control frames follow the AODV field order, with the per-flow additions
//! (flow id, session duration, bottleneck lifetime, route-change flag,
//! unreachable source/flow) placed where the base formats leave room.

use std::fmt;

use crate::des::SimTime;
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of one traffic session: `(source, destination, flow id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub fid: u8,
}

impl FlowKey {
    pub fn new(src: u32, dst: u32, fid: u8) -> FlowKey {
        FlowKey { src: NodeId(src), dst: NodeId(dst), fid }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.src, self.dst, self.fid)
    }
}

impl std::str::FromStr for FlowKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("flow must be src:dst:fid, got `{s}`"));
        }
        let src = parts[0].trim().parse::<u32>().map_err(|e| format!("flow source `{}`: {e}", parts[0]))?;
        let dst = parts[1].trim().parse::<u32>().map_err(|e| format!("flow destination `{}`: {e}", parts[1]))?;
        let fid = parts[2].trim().parse::<u8>().map_err(|e| format!("flow id `{}`: {e}", parts[2]))?;
        Ok(FlowKey::new(src, dst, fid))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub uid: u64,
    pub flow: FlowKey,
    pub created_at: SimTime,
    /// Hops traversed so far.
    pub hops: u32,
}

/// Session-duration field of a per-flow route request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationField {
    /// The layout has no such field (MDR).
    NotCarried,
    /// Field present, duration unknown to the application.
    Unknown,
    Known(f64),
}

impl DurationField {
    pub fn known(self) -> Option<f64> {
        match self {
            DurationField::Known(d) => Some(d),
            _ => None,
        }
    }
}

/// Route-request additions used by the per-flow protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RreqFlowExt {
    pub flow_id: u8,
    pub session_duration: DurationField,
    /// Minimum predicted lifetime over the intermediate nodes traversed so far.
    pub bottleneck: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub uid: u64,
    pub hop_count: u32,
    pub broadcast_id: u32,
    pub dst: NodeId,
    pub dst_seq: u32,
    pub src: NodeId,
    pub src_seq: u32,
    /// Sent by an intermediate node patching a broken route near the destination.
    pub repair: bool,
    pub flow: Option<RreqFlowExt>,
}

impl Rreq {
    pub fn flow_key(&self) -> Option<FlowKey> {
        self.flow.map(|f| FlowKey { src: self.src, dst: self.dst, fid: f.flow_id })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrepFlowExt {
    pub flow_id: u8,
    pub rcr: bool,
}

/// Route reply. With the route-change flag set it is a route change request,
/// and `dst_seq` holds the id of the draining node.
#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    pub uid: u64,
    pub hop_count: u32,
    pub dst: NodeId,
    pub dst_seq: u32,
    pub src: NodeId,
    pub lifetime_s: f64,
    pub timestamp: SimTime,
    pub flow: Option<RrepFlowExt>,
}

impl Rrep {
    pub fn is_rcr(&self) -> bool {
        self.flow.map(|f| f.rcr).unwrap_or(false)
    }

    pub fn drained_node(&self) -> Option<NodeId> {
        self.is_rcr().then_some(NodeId(self.dst_seq))
    }

    pub fn flow_key(&self) -> Option<FlowKey> {
        self.flow.map(|f| FlowKey { src: self.src, dst: self.dst, fid: f.flow_id })
    }

    /// Route change request announcing that `drained` is about to run out of energy.
    pub fn rcr(uid: u64, flow: FlowKey, drained: NodeId, now: SimTime) -> Rrep {
        Rrep {
            uid,
            hop_count: 0,
            dst: flow.dst,
            dst_seq: drained.0,
            src: flow.src,
            lifetime_s: 0.0,
            timestamp: now,
            flow: Some(RrepFlowExt { flow_id: flow.fid, rcr: true }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unreachable {
    pub dst: NodeId,
    pub dst_seq: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    pub uid: u64,
    pub unreachable: Vec<Unreachable>,
    /// `(unreachable source, unreachable flow id)` for per-flow routes.
    pub flow: Option<(NodeId, u8)>,
}

impl Rerr {
    pub fn dest_count(&self) -> usize {
        self.unreachable.len()
    }
}

/// Asks the source of `flow` to stop sending because its destination is draining.
#[derive(Debug, Clone, PartialEq)]
pub struct StopTraffic {
    pub uid: u64,
    pub flow: FlowKey,
    pub drained: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub uid: u64,
    pub src: NodeId,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Data(DataPacket),
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    StopTraffic(StopTraffic),
    Hello(Hello),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Data,
    Rreq,
    Rrep,
    Rerr,
    Rcr,
    Stop,
    Hello,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Data => "DATA",
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::Rerr => "RERR",
            PacketKind::Rcr => "RCR",
            PacketKind::Stop => "STOP",
            PacketKind::Hello => "HELLO",
        }
    }

    pub fn parse(s: &str) -> Option<PacketKind> {
        Some(match s {
            "DATA" => PacketKind::Data,
            "RREQ" => PacketKind::Rreq,
            "RREP" => PacketKind::Rrep,
            "RERR" => PacketKind::Rerr,
            "RCR" => PacketKind::Rcr,
            "STOP" => PacketKind::Stop,
            "HELLO" => PacketKind::Hello,
            _ => return None,
        })
    }
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Data(_) => PacketKind::Data,
            Packet::Rreq(_) => PacketKind::Rreq,
            Packet::Rrep(r) if r.is_rcr() => PacketKind::Rcr,
            Packet::Rrep(_) => PacketKind::Rrep,
            Packet::Rerr(_) => PacketKind::Rerr,
            Packet::StopTraffic(_) => PacketKind::Stop,
            Packet::Hello(_) => PacketKind::Hello,
        }
    }

    pub fn uid(&self) -> u64 {
        match self {
            Packet::Data(p) => p.uid,
            Packet::Rreq(p) => p.uid,
            Packet::Rrep(p) => p.uid,
            Packet::Rerr(p) => p.uid,
            Packet::StopTraffic(p) => p.uid,
            Packet::Hello(p) => p.uid,
        }
    }

    pub fn is_routing(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }

    /// Flow the packet belongs to, when it identifies one.
    pub fn flow(&self) -> Option<FlowKey> {
        match self {
            Packet::Data(p) => Some(p.flow),
            Packet::Rreq(r) => r.flow_key(),
            Packet::Rrep(r) if r.is_rcr() => r.flow_key().filter(|f| f.src != f.dst),
            Packet::Rrep(r) => r.flow_key(),
            Packet::Rerr(r) => match (r.flow, r.unreachable.first()) {
                (Some((src, fid)), Some(u)) => Some(FlowKey { src, dst: u.dst, fid }),
                _ => None,
            },
            Packet::StopTraffic(s) => Some(s.flow),
            Packet::Hello(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Codec

const T_RREQ: u8 = 1;
const T_RREP: u8 = 2;
const T_RERR: u8 = 3;
const T_STOP: u8 = 4;
const T_HELLO: u8 = 5;

const F_SESSION: u8 = 0b01;
const F_REPAIR: u8 = 0b10;
const F_RCR: u8 = 0b01;
const F_FLOW: u8 = 0b10;

fn secs_to_ms(v: f64) -> u32 {
    (v * 1000.0).round().clamp(0.0, u32::MAX as f64) as u32
}

fn small(v: u32, what: &str) -> Result<u8> {
    u8::try_from(v).or_else(|_| contract(format!("{what} {v} does not fit in one octet")))
}

/// Encodes a routing frame. Data packets are not encoded.
///
/// Requests take 24 octets without flow fields, 28 with a bottleneck field
/// only, and 32 when the session-duration field is carried as well.
pub fn encode(packet: &Packet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32);
    match packet {
        Packet::Rreq(r) => {
            let fid = r.flow.map(|f| f.flow_id).unwrap_or(0);
            let mut flags = match r.flow.map(|f| f.session_duration) {
                Some(DurationField::Known(_)) => F_SESSION,
                _ => 0,
            };
            if r.repair {
                flags |= F_REPAIR;
            }
            out.extend_from_slice(&[T_RREQ, flags, small(r.hop_count, "hop count")?, fid]);
            for w in [r.broadcast_id, r.dst.0, r.dst_seq, r.src.0, r.src_seq] {
                out.extend_from_slice(&w.to_be_bytes());
            }
            if let Some(ext) = r.flow {
                match ext.session_duration {
                    DurationField::NotCarried => {}
                    DurationField::Unknown => out.extend_from_slice(&0f32.to_be_bytes()),
                    DurationField::Known(d) => out.extend_from_slice(&(d as f32).to_be_bytes()),
                }
                out.extend_from_slice(&(ext.bottleneck as f32).to_be_bytes());
            }
        }
        Packet::Rrep(r) => {
            let (fid, flags) = match r.flow {
                Some(f) => (f.flow_id, if f.rcr { F_RCR | F_FLOW } else { F_FLOW }),
                None => (0, 0),
            };
            out.extend_from_slice(&[T_RREP, flags, small(r.hop_count, "hop count")?, fid]);
            for w in [
                r.dst.0,
                r.dst_seq,
                r.src.0,
                secs_to_ms(r.lifetime_s),
                secs_to_ms(r.timestamp.as_secs()),
            ] {
                out.extend_from_slice(&w.to_be_bytes());
            }
        }
        Packet::Rerr(r) => {
            if r.unreachable.is_empty() {
                return contract("error packet with no unreachable destinations");
            }
            let (src, fid, flags) = match r.flow {
                Some((s, f)) => (s.0, f, F_FLOW),
                None => (0, 0, 0),
            };
            let count = small(r.unreachable.len() as u32, "destination count")?;
            out.extend_from_slice(&[T_RERR, flags, count, fid]);
            out.extend_from_slice(&src.to_be_bytes());
            for u in &r.unreachable {
                out.extend_from_slice(&u.dst.0.to_be_bytes());
                out.extend_from_slice(&u.dst_seq.to_be_bytes());
            }
        }
        Packet::StopTraffic(s) => {
            out.extend_from_slice(&[T_STOP, 0, 0, s.flow.fid]);
            for w in [s.flow.src.0, s.flow.dst.0, s.drained.0] {
                out.extend_from_slice(&w.to_be_bytes());
            }
        }
        Packet::Hello(h) => {
            out.extend_from_slice(&[T_HELLO, 0, 0, 0]);
            out.extend_from_slice(&h.src.0.to_be_bytes());
            out.extend_from_slice(&h.seq.to_be_bytes());
        }
        Packet::Data(_) => return contract("data packets have no routing-frame encoding"),
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let Some(b) = self.buf.get(self.pos..self.pos + 4) else {
            return contract(format!("frame truncated at octet {}", self.pos));
        };
        self.pos += 4;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_bits(self.u32()?) as f64)
    }
}

/// Decodes a frame produced by [`encode`]. Packet uids are not on the wire and decode as 0.
pub fn decode(buf: &[u8]) -> Result<Packet> {
    if buf.len() < 4 {
        return contract("frame shorter than its 4-octet header");
    }
    let (ty, flags, a, b) = (buf[0], buf[1], buf[2], buf[3]);
    let mut rd = Reader { buf, pos: 4 };
    let pkt = match ty {
        T_RREQ => {
            let broadcast_id = rd.u32()?;
            let dst = NodeId(rd.u32()?);
            let dst_seq = rd.u32()?;
            let src = NodeId(rd.u32()?);
            let src_seq = rd.u32()?;
            let flow = match buf.len() {
                24 => None,
                28 => Some(RreqFlowExt {
                    flow_id: b,
                    session_duration: DurationField::NotCarried,
                    bottleneck: rd.f32()?,
                }),
                32 => {
                    let dur = rd.f32()?;
                    let bottleneck = rd.f32()?;
                    let session_duration =
                        if flags & F_SESSION != 0 { DurationField::Known(dur) } else { DurationField::Unknown };
                    Some(RreqFlowExt { flow_id: b, session_duration, bottleneck })
                }
                n => return contract(format!("request frame of {n} octets")),
            };
            Packet::Rreq(Rreq { uid: 0, hop_count: a as u32, broadcast_id, dst, dst_seq, src, src_seq, repair: flags & F_REPAIR != 0, flow })
        }
        T_RREP => {
            if buf.len() != 24 {
                return contract(format!("reply frame of {} octets", buf.len()));
            }
            let dst = NodeId(rd.u32()?);
            let dst_seq = rd.u32()?;
            let src = NodeId(rd.u32()?);
            let lifetime_s = rd.u32()? as f64 / 1000.0;
            let timestamp = SimTime::from_secs(rd.u32()? as f64 / 1000.0)?;
            let flow = (flags & F_FLOW != 0).then_some(RrepFlowExt { flow_id: b, rcr: flags & F_RCR != 0 });
            Packet::Rrep(Rrep { uid: 0, hop_count: a as u32, dst, dst_seq, src, lifetime_s, timestamp, flow })
        }
        T_RERR => {
            let count = a as usize;
            if count == 0 || buf.len() != 8 + 8 * count {
                return contract(format!("error frame of {} octets for {count} destinations", buf.len()));
            }
            let src = NodeId(rd.u32()?);
            let mut unreachable = Vec::with_capacity(count);
            for _ in 0..count {
                let dst = NodeId(rd.u32()?);
                let dst_seq = rd.u32()?;
                unreachable.push(Unreachable { dst, dst_seq });
            }
            let flow = (flags & F_FLOW != 0).then_some((src, b));
            Packet::Rerr(Rerr { uid: 0, unreachable, flow })
        }
        T_STOP => {
            if buf.len() != 16 {
                return contract(format!("stop frame of {} octets", buf.len()));
            }
            let src = NodeId(rd.u32()?);
            let dst = NodeId(rd.u32()?);
            let drained = NodeId(rd.u32()?);
            Packet::StopTraffic(StopTraffic { uid: 0, flow: FlowKey { src, dst, fid: b }, drained })
        }
        T_HELLO => {
            if buf.len() != 12 {
                return contract(format!("hello frame of {} octets", buf.len()));
            }
            let src = NodeId(rd.u32()?);
            let seq = rd.u32()?;
            Packet::Hello(Hello { uid: 0, src, seq })
        }
        t => return contract(format!("unknown frame type {t}")),
    };
    Ok(pkt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq_rreq(dur: DurationField, bottleneck: f32) -> Rreq {
        Rreq {
            uid: 0,
            hop_count: 3,
            broadcast_id: 17,
            dst: NodeId(11),
            dst_seq: 4,
            src: NodeId(1),
            src_seq: 9,
            repair: false,
            flow: Some(RreqFlowExt {
                flow_id: 2,
                session_duration: dur,
                bottleneck: bottleneck as f64,
            }),
        }
    }

    #[test]
    fn request_layout_sizes() {
        let base = Rreq { flow: None, ..sq_rreq(DurationField::Unknown, 0.0) };
        assert_eq!(encode(&Packet::Rreq(base)).unwrap().len(), 24);
        let mdr = Packet::Rreq(sq_rreq(DurationField::NotCarried, 60.0));
        assert_eq!(encode(&mdr).unwrap().len(), 28);
        assert_eq!(decode(&encode(&mdr).unwrap()).unwrap(), mdr);
        for d in [DurationField::Unknown, DurationField::Known(120.0)] {
            let sq = Packet::Rreq(sq_rreq(d, 60.0));
            let bytes = encode(&sq).unwrap();
            assert_eq!(bytes.len(), 32);
            assert_eq!(decode(&bytes).unwrap(), sq);
        }
    }

    #[test]
    fn rcr_carries_drained_node_in_sequence_slot() {
        let r = Rrep::rcr(0, FlowKey::new(1, 11, 1), NodeId(7), SimTime::secs(2.5));
        let bytes = encode(&Packet::Rrep(r.clone())).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[8..12], &7u32.to_be_bytes());
        let Packet::Rrep(back) = decode(&bytes).unwrap() else { panic!() };
        assert_eq!(back.drained_node(), Some(NodeId(7)));
        assert_eq!(back, r);
    }

    #[test]
    fn stop_frame_is_sixteen_octets() {
        let s = Packet::StopTraffic(StopTraffic { uid: 0, flow: FlowKey::new(3, 4, 1), drained: NodeId(4) });
        let bytes = encode(&s).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(decode(&bytes).unwrap(), s);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode(&[]).is_err());
        assert!(decode(&[9, 0, 0, 0]).is_err());
        assert!(decode(&[T_RREQ, 0, 0, 0, 1, 2]).is_err());
        assert!(decode(&[T_RERR, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn flow_key_parses() {
        assert_eq!("12:3:7".parse::<FlowKey>().unwrap(), FlowKey::new(12, 3, 7));
        assert!("12:3".parse::<FlowKey>().is_err());
        assert!("a:3:1".parse::<FlowKey>().is_err());
    }

    proptest! {
        #[test]
        fn request_round_trip(hops in 0u32..255, bid: u32, dst: u32, dseq: u32, src: u32, sseq: u32,
                              repair: bool, fid: u8, dur in proptest::option::of(0.0f32..1e6), bn in 0.0f32..1e9) {
            let r = Rreq { uid: 0, hop_count: hops, broadcast_id: bid, dst: NodeId(dst), dst_seq: dseq,
                src: NodeId(src), src_seq: sseq,
                repair,
                flow: Some(RreqFlowExt { flow_id: fid,
                    session_duration: dur.map_or(DurationField::Unknown, |d| DurationField::Known(d as f64)),
                    bottleneck: bn as f64 }) };
            let bytes = encode(&Packet::Rreq(r.clone())).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), Packet::Rreq(r));
        }

        #[test]
        fn error_round_trip(entries in proptest::collection::vec((any::<u32>(), any::<u32>()), 1..8),
                            flow in proptest::option::of((any::<u32>(), any::<u8>()))) {
            let r = Rerr {
                uid: 0,
                unreachable: entries.iter().map(|&(d, s)| Unreachable { dst: NodeId(d), dst_seq: s }).collect(),
                flow: flow.map(|(s, f)| (NodeId(s), f)),
            };
            let bytes = encode(&Packet::Rerr(r.clone())).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), Packet::Rerr(r));
        }
    }
}
