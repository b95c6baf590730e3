//! Shared domain vocabulary: sessions, categorical enumerations, labels.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Transport protocol of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "tcp")]
    Tcp,
    #[serde(rename = "udp")]
    Udp,
    #[serde(rename = "icmp")]
    Icmp,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Icmp => "icmp",
        }
    }
}

impl FromStr for Protocol {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            "icmp" => Ok(Protocol::Icmp),
            other => Err(ConfigError::new(format!("unknown protocol: {other}"))),
        }
    }
}

/// Application service guessed from the destination port.
///
/// Unknown ports always map to `Other`; `Custom` holds services added through
/// the configured port table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceType {
    Http,
    Https,
    Dns,
    Smtp,
    Ftp,
    Ssh,
    Other,
    #[serde(untagged)]
    Custom(String),
}

impl ServiceType {
    pub fn name(&self) -> &str {
        match self {
            ServiceType::Http => "http",
            ServiceType::Https => "https",
            ServiceType::Dns => "dns",
            ServiceType::Smtp => "smtp",
            ServiceType::Ftp => "ftp",
            ServiceType::Ssh => "ssh",
            ServiceType::Other => "other",
            ServiceType::Custom(s) => s,
        }
    }
}

impl FromStr for ServiceType {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "http" => ServiceType::Http,
            "https" => ServiceType::Https,
            "dns" => ServiceType::Dns,
            "smtp" => ServiceType::Smtp,
            "ftp" => ServiceType::Ftp,
            "ssh" => ServiceType::Ssh,
            "other" => ServiceType::Other,
            custom => ServiceType::Custom(custom.to_string()),
        })
    }
}

impl fmt::Display for ServiceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Zeek-style summary of how a TCP session began and ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum ConnState {
    S0,
    S1,
    S2,
    S3,
    SF,
    REJ,
    RSTO,
    RSTR,
    RSTOS0,
    RSTRH,
    SH,
    SHR,
    OTH,
}

impl ConnState {
    pub const ALL: [ConnState; 13] = [
        ConnState::S0,
        ConnState::S1,
        ConnState::S2,
        ConnState::S3,
        ConnState::SF,
        ConnState::REJ,
        ConnState::RSTO,
        ConnState::RSTR,
        ConnState::RSTOS0,
        ConnState::RSTRH,
        ConnState::SH,
        ConnState::SHR,
        ConnState::OTH,
    ];

    /// Failed or unanswered handshake (the "SYN error" set).
    pub fn is_syn_error(&self) -> bool {
        matches!(self, ConnState::S0 | ConnState::S1 | ConnState::S2 | ConnState::S3)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConnState::S0 => "S0",
            ConnState::S1 => "S1",
            ConnState::S2 => "S2",
            ConnState::S3 => "S3",
            ConnState::SF => "SF",
            ConnState::REJ => "REJ",
            ConnState::RSTO => "RSTO",
            ConnState::RSTR => "RSTR",
            ConnState::RSTOS0 => "RSTOS0",
            ConnState::RSTRH => "RSTRH",
            ConnState::SH => "SH",
            ConnState::SHR => "SHR",
            ConnState::OTH => "OTH",
        }
    }
}

impl FromStr for ConnState {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConnState::ALL
            .iter()
            .find(|c| c.as_str() == s)
            .copied()
            .ok_or_else(|| ConfigError::new(format!("unknown conn state: {s}")))
    }
}

/// Locality of the two endpoints relative to the configured local prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    L2L,
    L2R,
    R2L,
    R2R,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::L2L => "L2L",
            Direction::L2R => "L2R",
            Direction::R2L => "R2L",
            Direction::R2R => "R2R",
        }
    }
}

impl FromStr for Direction {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L2L" => Ok(Direction::L2L),
            "L2R" => Ok(Direction::L2R),
            "R2L" => Ok(Direction::R2L),
            "R2R" => Ok(Direction::R2R),
            other => Err(ConfigError::new(format!("unknown direction: {other}"))),
        }
    }
}

/// A CIDR prefix used to decide endpoint locality. Parsed once at config
/// load; malformed prefixes never surface as per-record errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CidrPrefix {
    addr: IpAddr,
    len: u8,
}

impl CidrPrefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, ConfigError> {
        let max = match addr {
            IpAddr::V4(_) => 32,
            IpAddr::V6(_) => 128,
        };
        if len > max {
            return Err(ConfigError::new(format!("prefix length {len} exceeds {max}")));
        }
        Ok(CidrPrefix { addr, len })
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        match (self.addr, ip) {
            (IpAddr::V4(net), IpAddr::V4(ip)) => {
                let mask = if self.len == 0 { 0 } else { u32::MAX << (32 - self.len) };
                (u32::from(net) & mask) == (u32::from(*ip) & mask)
            }
            (IpAddr::V6(net), IpAddr::V6(ip)) => {
                let mask = if self.len == 0 { 0 } else { u128::MAX << (128 - self.len) };
                (u128::from(net) & mask) == (u128::from(*ip) & mask)
            }
            _ => false,
        }
    }
}

impl FromStr for CidrPrefix {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| ConfigError::new(format!("prefix missing '/': {s}")))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|e| ConfigError::new(format!("bad prefix address {addr}: {e}")))?;
        let len: u8 = len
            .parse()
            .map_err(|e| ConfigError::new(format!("bad prefix length {len}: {e}")))?;
        CidrPrefix::new(addr, len)
    }
}

impl fmt::Display for CidrPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl Serialize for CidrPrefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CidrPrefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The session 5-tuple as oriented from the originator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiveTuple {
    #[serde(rename = "src_ip")]
    pub src_addr: IpAddr,
    pub src_port: u16,
    #[serde(rename = "dst_ip")]
    pub dst_addr: IpAddr,
    pub dst_port: u16,
    pub protocol: Protocol,
}

/// One bidirectional session with its 16 basic features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: u64,
    /// Session start time, epoch milliseconds.
    #[serde(rename = "timestamp")]
    pub timestamp_ms: i64,
    /// Session duration in seconds.
    #[serde(rename = "duration")]
    pub duration_s: f64,
    #[serde(flatten)]
    pub five_tuple: FiveTuple,
    pub service: ServiceType,
    pub conn_state: ConnState,
    pub direction: Direction,
    pub src_packets: u64,
    /// Payload bytes sent by the originator.
    pub src_bytes: u64,
    /// Originator bytes including L3/L4 headers.
    pub src_ip_bytes: u64,
    pub dst_packets: u64,
    pub dst_bytes: u64,
    pub dst_ip_bytes: u64,
}

/// Binary session label; ABNORMAL is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal,
    Abnormal,
}

impl ClassLabel {
    pub fn is_abnormal(&self) -> bool {
        matches!(self, ClassLabel::Abnormal)
    }
}

/// Classifies the locality of a session given the configured local prefixes.
pub fn direction_of(src: &IpAddr, dst: &IpAddr, local_prefixes: &[CidrPrefix]) -> Direction {
    let src_local = local_prefixes.iter().any(|p| p.contains(src));
    let dst_local = local_prefixes.iter().any(|p| p.contains(dst));
    match (src_local, dst_local) {
        (true, true) => Direction::L2L,
        (true, false) => Direction::L2R,
        (false, true) => Direction::R2L,
        (false, false) => Direction::R2R,
    }
}

/// Destination-port service lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceTable {
    entries: Vec<(u16, Protocol, ServiceType)>,
}

impl ServiceTable {
    pub fn empty() -> Self {
        ServiceTable { entries: Vec::new() }
    }

    /// IANA well-known subset used when the run config does not override it.
    pub fn default_table() -> Self {
        use Protocol::*;
        use ServiceType::*;
        ServiceTable {
            entries: vec![
                (80, Tcp, Http),
                (8080, Tcp, Http),
                (443, Tcp, Https),
                (53, Tcp, Dns),
                (53, Udp, Dns),
                (25, Tcp, Smtp),
                (587, Tcp, Smtp),
                (21, Tcp, Ftp),
                (22, Tcp, Ssh),
            ],
        }
    }

    pub fn insert(&mut self, port: u16, protocol: Protocol, service: ServiceType) {
        self.entries.retain(|(p, pr, _)| !(*p == port && *pr == protocol));
        self.entries.push((port, protocol, service));
    }

    pub fn lookup(&self, dst_port: u16, protocol: Protocol) -> ServiceType {
        if protocol == Protocol::Icmp {
            return ServiceType::Other;
        }
        self.entries
            .iter()
            .find(|(p, pr, _)| *p == dst_port && *pr == protocol)
            .map(|(_, _, s)| s.clone())
            .unwrap_or(ServiceType::Other)
    }
}

impl Default for ServiceTable {
    fn default() -> Self {
        ServiceTable::default_table()
    }
}

/// Maps a destination port to a service; unknown ports are `Other`, never an
/// error. ICMP has no ports and is always `Other`.
pub fn service_of(dst_port: u16, protocol: Protocol, table: &ServiceTable) -> ServiceType {
    table.lookup(dst_port, protocol)
}

pub fn ipv4(a: u8, b: u8, c: u8, d: u8) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(a, b, c, d))
}

pub fn ipv6_loopback() -> IpAddr {
    IpAddr::V6(Ipv6Addr::LOCALHOST)
}
