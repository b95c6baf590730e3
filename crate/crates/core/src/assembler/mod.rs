//! Session assembly from packet captures: groups packets into bidirectional
//! flows, tracks a simplified TCP state machine, and emits [`SessionRecord`]s
//! carrying the 16 basic features.

mod jsonl;
mod pcap;

pub use jsonl::{read_packets_jsonl, write_packets_jsonl};
pub use pcap::{read_pcap, PcapError, PcapReadResult, SkipCounts};

use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::model::{
    direction_of, service_of, ServiceTable, ConnState, FiveTuple, Protocol, SessionRecord,
};

/// TCP flag subset the assembler cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub fin: bool,
    pub rst: bool,
}

impl TcpFlags {
    pub fn from_byte(b: u8) -> Self {
        TcpFlags {
            fin: b & 0x01 != 0,
            syn: b & 0x02 != 0,
            rst: b & 0x04 != 0,
            ack: b & 0x10 != 0,
        }
    }

    pub fn to_letters(self) -> String {
        let mut s = String::new();
        if self.syn {
            s.push('S');
        }
        if self.ack {
            s.push('A');
        }
        if self.fin {
            s.push('F');
        }
        if self.rst {
            s.push('R');
        }
        s
    }

    pub fn from_letters(s: &str) -> Self {
        TcpFlags {
            syn: s.contains('S'),
            ack: s.contains('A'),
            fin: s.contains('F'),
            rst: s.contains('R'),
        }
    }
}

/// One parsed packet as observed on the wire (directional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketEvent {
    pub ts_us: i64,
    pub five_tuple: FiveTuple,
    /// Present iff protocol is TCP.
    pub tcp_flags: Option<TcpFlags>,
    pub payload_len: u64,
    /// Bytes including L3/L4 headers (IP total length).
    pub wire_len: u64,
    pub icmp_type_code: Option<(u8, u8)>,
}

/// Canonical flow key: both directions of a session map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    lo: (IpAddr, u16),
    hi: (IpAddr, u16),
    protocol: Protocol,
}

impl FlowKey {
    pub fn of(t: &FiveTuple) -> Self {
        let a = (t.src_addr, t.src_port);
        let b = (t.dst_addr, t.dst_port);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        FlowKey { lo, hi, protocol: t.protocol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationReason {
    Fin,
    Rst,
    Timeout,
    Eof,
}

#[derive(Debug, Clone, Copy, Default)]
struct TcpHistory {
    orig_syn: bool,
    resp_synack: bool,
    orig_fin: bool,
    resp_fin: bool,
    orig_rst: bool,
    resp_rst: bool,
}

impl TcpHistory {
    fn established(&self) -> bool {
        self.orig_syn && self.resp_synack
    }

    /// Zeek-style connection state summary over the observed flag history.
    fn conn_state(&self, resp_seen: bool) -> ConnState {
        if self.orig_rst || self.resp_rst {
            if self.established() {
                if self.orig_rst {
                    ConnState::RSTO
                } else {
                    ConnState::RSTR
                }
            } else if self.orig_syn && !self.resp_synack {
                if self.resp_rst {
                    ConnState::REJ
                } else {
                    ConnState::RSTOS0
                }
            } else if self.resp_synack && !self.orig_syn {
                ConnState::RSTRH
            } else {
                ConnState::OTH
            }
        } else if self.established() {
            match (self.orig_fin, self.resp_fin) {
                (true, true) => ConnState::SF,
                (true, false) => ConnState::S2,
                (false, true) => ConnState::S3,
                (false, false) => ConnState::S1,
            }
        } else if self.orig_syn {
            if self.orig_fin {
                ConnState::SH
            } else if resp_seen {
                ConnState::OTH
            } else {
                ConnState::S0
            }
        } else if self.resp_synack {
            if self.resp_fin {
                ConnState::SHR
            } else {
                ConnState::OTH
            }
        } else {
            ConnState::OTH
        }
    }
}

/// Live per-flow accumulator.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// Sender of the first packet of the flow.
    originator: FiveTuple,
    first_ts_us: i64,
    last_ts_us: i64,
    src_packets: u64,
    src_bytes: u64,
    src_ip_bytes: u64,
    dst_packets: u64,
    dst_bytes: u64,
    dst_ip_bytes: u64,
    tcp: TcpHistory,
}

impl FlowState {
    fn new(pkt: &PacketEvent) -> Self {
        FlowState {
            originator: pkt.five_tuple,
            first_ts_us: pkt.ts_us,
            last_ts_us: pkt.ts_us,
            src_packets: 0,
            src_bytes: 0,
            src_ip_bytes: 0,
            dst_packets: 0,
            dst_bytes: 0,
            dst_ip_bytes: 0,
            tcp: TcpHistory::default(),
        }
    }

    fn from_originator(&self, pkt: &PacketEvent) -> bool {
        pkt.five_tuple.src_addr == self.originator.src_addr
            && pkt.five_tuple.src_port == self.originator.src_port
    }

    /// Folds a packet in; returns true when the flow is now closed
    /// (FIN handshake complete or RST).
    fn absorb(&mut self, pkt: &PacketEvent) -> bool {
        let from_orig = self.from_originator(pkt);
        self.last_ts_us = pkt.ts_us;
        if from_orig {
            self.src_packets += 1;
            self.src_bytes += pkt.payload_len;
            self.src_ip_bytes += pkt.wire_len;
        } else {
            self.dst_packets += 1;
            self.dst_bytes += pkt.payload_len;
            self.dst_ip_bytes += pkt.wire_len;
        }
        if let Some(flags) = pkt.tcp_flags {
            let fins_before = self.tcp.orig_fin && self.tcp.resp_fin;
            if from_orig {
                if flags.syn && !flags.ack {
                    self.tcp.orig_syn = true;
                }
                if flags.fin {
                    self.tcp.orig_fin = true;
                }
                if flags.rst {
                    self.tcp.orig_rst = true;
                }
            } else {
                if flags.syn && flags.ack {
                    self.tcp.resp_synack = true;
                }
                if flags.fin {
                    self.tcp.resp_fin = true;
                }
                if flags.rst {
                    self.tcp.resp_rst = true;
                }
            }
            if flags.rst {
                return true;
            }
            // Close on the pure ACK that follows the second FIN, so the final
            // ACK of the teardown is counted inside the session.
            if fins_before && flags.ack && !flags.fin && !flags.syn {
                return true;
            }
        }
        false
    }
}

fn default_tcp_timeout() -> f64 {
    300.0
}

fn default_udp_timeout() -> f64 {
    60.0
}

fn default_icmp_timeout() -> f64 {
    60.0
}

fn default_reorder_tolerance() -> i64 {
    1_000_000
}

/// Assembler configuration; timeouts follow Zeek's defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblerConfig {
    #[serde(default = "default_tcp_timeout")]
    pub tcp_inactivity_timeout_s: f64,
    #[serde(default = "default_udp_timeout")]
    pub udp_inactivity_timeout_s: f64,
    #[serde(default = "default_icmp_timeout")]
    pub icmp_inactivity_timeout_s: f64,
    #[serde(default)]
    pub local_prefixes: Vec<crate::model::CidrPrefix>,
    #[serde(default)]
    pub services: ServiceTable,
    /// Packets older than this relative to the stream head are rejected.
    #[serde(default = "default_reorder_tolerance")]
    pub reorder_tolerance_us: i64,
}

impl Default for AssemblerConfig {
    fn default() -> Self {
        AssemblerConfig {
            tcp_inactivity_timeout_s: default_tcp_timeout(),
            udp_inactivity_timeout_s: default_udp_timeout(),
            icmp_inactivity_timeout_s: default_icmp_timeout(),
            local_prefixes: vec!["10.0.0.0/8".parse().unwrap(), "192.168.0.0/16".parse().unwrap()],
            services: ServiceTable::default(),
            reorder_tolerance_us: default_reorder_tolerance(),
        }
    }
}

impl AssemblerConfig {
    fn timeout_us(&self, protocol: Protocol) -> i64 {
        let s = match protocol {
            Protocol::Tcp => self.tcp_inactivity_timeout_s,
            Protocol::Udp => self.udp_inactivity_timeout_s,
            Protocol::Icmp => self.icmp_inactivity_timeout_s,
        };
        (s * 1e6) as i64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblerStats {
    pub packets_accepted: u64,
    pub out_of_order_rejected: u64,
    pub sessions_emitted: u64,
}

/// Single-writer session assembler.
pub struct FlowTable {
    config: AssemblerConfig,
    flows: HashMap<FlowKey, FlowState>,
    // Per-protocol FIFO of (key, last_ts at enqueue); entries with a stale
    // last_ts are skipped on pop.
    expiry: [VecDeque<(FlowKey, i64)>; 3],
    next_session_id: u64,
    max_ts_us: i64,
    stats: AssemblerStats,
}

fn proto_idx(p: Protocol) -> usize {
    match p {
        Protocol::Tcp => 0,
        Protocol::Udp => 1,
        Protocol::Icmp => 2,
    }
}

impl FlowTable {
    pub fn new(config: AssemblerConfig) -> Self {
        FlowTable {
            config,
            flows: HashMap::new(),
            expiry: [VecDeque::new(), VecDeque::new(), VecDeque::new()],
            next_session_id: 0,
            max_ts_us: i64::MIN,
            stats: AssemblerStats::default(),
        }
    }

    pub fn stats(&self) -> AssemblerStats {
        self.stats
    }

    pub fn open_flows(&self) -> usize {
        self.flows.len()
    }

    fn emit(&mut self, state: FlowState, _reason: TerminationReason) -> SessionRecord {
        let t = state.originator;
        let resp_seen = state.dst_packets > 0;
        let conn_state = match t.protocol {
            Protocol::Tcp => state.tcp.conn_state(resp_seen),
            _ => {
                if resp_seen {
                    ConnState::SF
                } else {
                    ConnState::S0
                }
            }
        };
        let id = self.next_session_id;
        self.next_session_id += 1;
        self.stats.sessions_emitted += 1;
        SessionRecord {
            session_id: id,
            timestamp_ms: state.first_ts_us / 1000,
            duration_s: (state.last_ts_us - state.first_ts_us) as f64 / 1e6,
            five_tuple: t,
            service: service_of(t.dst_port, t.protocol, &self.config.services),
            conn_state,
            direction: direction_of(&t.src_addr, &t.dst_addr, &self.config.local_prefixes),
            src_packets: state.src_packets,
            src_bytes: state.src_bytes,
            src_ip_bytes: state.src_ip_bytes,
            dst_packets: state.dst_packets,
            dst_bytes: state.dst_bytes,
            dst_ip_bytes: state.dst_ip_bytes,
        }
    }

    fn evict_expired(&mut self, now_us: i64, out: &mut Vec<SessionRecord>) {
        let mut expired: Vec<FlowState> = Vec::new();
        for (idx, proto) in [Protocol::Tcp, Protocol::Udp, Protocol::Icmp].into_iter().enumerate() {
            let timeout = self.config.timeout_us(proto);
            while let Some(&(key, enq_ts)) = self.expiry[idx].front() {
                if now_us - enq_ts < timeout {
                    break;
                }
                self.expiry[idx].pop_front();
                let stale = match self.flows.get(&key) {
                    Some(f) => f.last_ts_us != enq_ts,
                    None => true,
                };
                if !stale {
                    expired.push(self.flows.remove(&key).unwrap());
                }
            }
        }
        expired.sort_by_key(|f| f.first_ts_us);
        for f in expired {
            let rec = self.emit(f, TerminationReason::Timeout);
            out.push(rec);
        }
    }

    /// Feeds one packet; returns any sessions emitted by closes or timeouts.
    /// Packets more than the reorder tolerance behind the stream head are
    /// rejected and counted.
    pub fn advance(&mut self, pkt: &PacketEvent) -> Vec<SessionRecord> {
        if pkt.ts_us < self.max_ts_us.saturating_sub(self.config.reorder_tolerance_us) {
            self.stats.out_of_order_rejected += 1;
            return Vec::new();
        }
        self.max_ts_us = self.max_ts_us.max(pkt.ts_us);
        self.stats.packets_accepted += 1;

        let mut out = Vec::new();
        self.evict_expired(self.max_ts_us, &mut out);

        let key = FlowKey::of(&pkt.five_tuple);
        let state = self.flows.entry(key).or_insert_with(|| FlowState::new(pkt));
        let closed = state.absorb(pkt);
        let last_ts = state.last_ts_us;
        if closed {
            let state = self.flows.remove(&key).unwrap();
            let reason = if state.tcp.orig_rst || state.tcp.resp_rst {
                TerminationReason::Rst
            } else {
                TerminationReason::Fin
            };
            let rec = self.emit(state, reason);
            out.push(rec);
        } else {
            self.expiry[proto_idx(key.protocol)].push_back((key, last_ts));
        }
        out
    }

    /// Emits every open flow (reason eof) in first-timestamp order and
    /// empties the table.
    pub fn flush_all(&mut self) -> Vec<SessionRecord> {
        let mut open: Vec<FlowState> = self.flows.drain().map(|(_, v)| v).collect();
        for q in &mut self.expiry {
            q.clear();
        }
        open.sort_by_key(|f| f.first_ts_us);
        open.into_iter().map(|f| self.emit(f, TerminationReason::Eof)).collect()
    }
}

/// Runs a full packet sequence through the assembler and returns the session
/// log sorted by start time. Streaming emission order can place a
/// long-running flow after sessions that started later; sorting here gives
/// downstream stages a timestamp-ordered log.
pub fn assemble_all(
    events: impl IntoIterator<Item = PacketEvent>,
    config: AssemblerConfig,
) -> (Vec<SessionRecord>, AssemblerStats) {
    let mut table = FlowTable::new(config);
    let mut sessions = Vec::new();
    for pkt in events {
        sessions.extend(table.advance(&pkt));
    }
    sessions.extend(table.flush_all());
    sessions.sort_by_key(|s| (s.timestamp_ms, s.session_id));
    (sessions, table.stats())
}
