//! Classic pcap reader: both endiannesses, microsecond and nanosecond
//! timestamp variants, Ethernet link type only.

use std::io::Read;
use std::net::{IpAddr, Ipv4Addr};

use serde::Serialize;
use thiserror::Error;

use crate::model::{FiveTuple, Protocol};

use super::{PacketEvent, TcpFlags};

const MAGIC_USEC: u32 = 0xA1B2_C3D4;
const MAGIC_NSEC: u32 = 0xA1B2_3C4D;
const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("i/o error reading capture: {0}")]
    Io(#[from] std::io::Error),
    #[error("truncated or missing pcap global header")]
    TruncatedGlobalHeader,
    #[error("unrecognized pcap magic 0x{0:08X}")]
    BadMagic(u32),
    #[error("unsupported link type {0} (only Ethernet is handled)")]
    UnsupportedLinkType(u32),
}

/// Frames excluded from the event stream, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipCounts {
    pub non_ip: u64,
    pub unsupported_ip_proto: u64,
    pub fragments: u64,
    pub malformed: u64,
}

impl SkipCounts {
    pub fn total(&self) -> u64 {
        self.non_ip + self.unsupported_ip_proto + self.fragments + self.malformed
    }
}

#[derive(Debug)]
pub struct PcapReadResult {
    pub events: Vec<PacketEvent>,
    pub skipped: SkipCounts,
    /// Set when the capture ended mid-record; events up to that point are kept.
    pub truncated: bool,
}

struct ByteOrder {
    swapped: bool,
    nanos: bool,
}

impl ByteOrder {
    fn u32(&self, b: &[u8]) -> u32 {
        let arr: [u8; 4] = b[..4].try_into().unwrap();
        if self.swapped {
            u32::from_le_bytes(arr)
        } else {
            u32::from_be_bytes(arr)
        }
    }
}

/// Parses a classic pcap byte stream into packet events, in file order.
/// Non-IP and unsupported frames are counted and skipped; a truncated packet
/// record stops the read and flags the result as truncated.
pub fn read_pcap(mut input: impl Read) -> Result<PcapReadResult, PcapError> {
    let mut header = [0u8; 24];
    let mut filled = 0;
    while filled < 24 {
        let n = input.read(&mut header[filled..])?;
        if n == 0 {
            return Err(PcapError::TruncatedGlobalHeader);
        }
        filled += n;
    }
    let raw_magic = u32::from_be_bytes(header[..4].try_into().unwrap());
    let order = match raw_magic {
        MAGIC_USEC => ByteOrder { swapped: false, nanos: false },
        MAGIC_NSEC => ByteOrder { swapped: false, nanos: true },
        m if m.swap_bytes() == MAGIC_USEC => ByteOrder { swapped: true, nanos: false },
        m if m.swap_bytes() == MAGIC_NSEC => ByteOrder { swapped: true, nanos: true },
        m => return Err(PcapError::BadMagic(m)),
    };
    let linktype = order.u32(&header[20..24]);
    if linktype != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(linktype));
    }

    let mut body = Vec::new();
    input.read_to_end(&mut body)?;

    let mut events = Vec::new();
    let mut skipped = SkipCounts::default();
    let mut truncated = false;
    let mut pos = 0usize;
    while pos < body.len() {
        if pos + 16 > body.len() {
            truncated = true;
            break;
        }
        let ts_sec = order.u32(&body[pos..]) as i64;
        let ts_frac = order.u32(&body[pos + 4..]) as i64;
        let incl_len = order.u32(&body[pos + 8..]) as usize;
        pos += 16;
        if pos + incl_len > body.len() {
            truncated = true;
            break;
        }
        let data = &body[pos..pos + incl_len];
        pos += incl_len;
        let ts_us = ts_sec * 1_000_000 + if order.nanos { ts_frac / 1000 } else { ts_frac };
        match parse_ethernet(data, ts_us) {
            Parsed::Event(ev) => events.push(ev),
            Parsed::NonIp => skipped.non_ip += 1,
            Parsed::UnsupportedProto => skipped.unsupported_ip_proto += 1,
            Parsed::Fragment => skipped.fragments += 1,
            Parsed::Malformed => skipped.malformed += 1,
        }
    }
    Ok(PcapReadResult { events, skipped, truncated })
}

enum Parsed {
    Event(PacketEvent),
    NonIp,
    UnsupportedProto,
    Fragment,
    Malformed,
}

fn parse_ethernet(frame: &[u8], ts_us: i64) -> Parsed {
    if frame.len() < 14 {
        return Parsed::Malformed;
    }
    let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let mut offset = 14;
    // One level of 802.1Q unwrapping.
    if ethertype == 0x8100 {
        if frame.len() < 18 {
            return Parsed::Malformed;
        }
        ethertype = u16::from_be_bytes([frame[16], frame[17]]);
        offset = 18;
    }
    if ethertype != 0x0800 {
        return Parsed::NonIp;
    }
    parse_ipv4(&frame[offset..], ts_us)
}

fn parse_ipv4(packet: &[u8], ts_us: i64) -> Parsed {
    if packet.len() < 20 || packet[0] >> 4 != 4 {
        return Parsed::Malformed;
    }
    let ihl = ((packet[0] & 0x0F) as usize) * 4;
    if ihl < 20 || packet.len() < ihl {
        return Parsed::Malformed;
    }
    let total_len = u16::from_be_bytes([packet[2], packet[3]]) as u64;
    let frag = u16::from_be_bytes([packet[6], packet[7]]);
    if frag & 0x1FFF != 0 {
        // Non-first fragment: no L4 header to read.
        return Parsed::Fragment;
    }
    let protocol = match packet[9] {
        6 => Protocol::Tcp,
        17 => Protocol::Udp,
        1 => Protocol::Icmp,
        _ => return Parsed::UnsupportedProto,
    };
    let src = IpAddr::V4(Ipv4Addr::new(packet[12], packet[13], packet[14], packet[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(packet[16], packet[17], packet[18], packet[19]));
    let l4 = &packet[ihl..];
    let (src_port, dst_port, l4_header_len, tcp_flags, icmp_type_code) = match protocol {
        Protocol::Tcp => {
            if l4.len() < 14 {
                return Parsed::Malformed;
            }
            let doff = ((l4[12] >> 4) as usize) * 4;
            if doff < 20 {
                return Parsed::Malformed;
            }
            (
                u16::from_be_bytes([l4[0], l4[1]]),
                u16::from_be_bytes([l4[2], l4[3]]),
                doff,
                Some(TcpFlags::from_byte(l4[13])),
                None,
            )
        }
        Protocol::Udp => {
            if l4.len() < 8 {
                return Parsed::Malformed;
            }
            (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]), 8, None, None)
        }
        Protocol::Icmp => {
            if l4.len() < 8 {
                return Parsed::Malformed;
            }
            (0, 0, 8, None, Some((l4[0], l4[1])))
        }
    };
    let payload_len = total_len.saturating_sub((ihl + l4_header_len) as u64);
    Parsed::Event(PacketEvent {
        ts_us,
        five_tuple: FiveTuple { src_addr: src, src_port, dst_addr: dst, dst_port, protocol },
        tcp_flags,
        payload_len,
        wire_len: total_len,
        icmp_type_code,
    })
}
