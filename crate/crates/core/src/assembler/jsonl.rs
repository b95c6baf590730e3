//! Packet-event JSONL: the capture-free input format for injecting packets
//! without crafting binary captures. One object per line with keys
//! ts_us, src, sport, dst, dport, proto, flags, payload_len, wire_len.

use std::io::{BufRead, Write};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FiveTuple, Protocol};

use super::{PacketEvent, TcpFlags};

#[derive(Debug, Error)]
pub enum PacketJsonlError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: tcp flags given for non-TCP packet")]
    FlagsOnNonTcp { line: usize },
}

#[derive(Serialize, Deserialize)]
struct PacketLine {
    ts_us: i64,
    src: IpAddr,
    sport: u16,
    dst: IpAddr,
    dport: u16,
    proto: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flags: Option<String>,
    payload_len: u64,
    wire_len: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    icmp_type_code: Option<(u8, u8)>,
}

pub fn read_packets_jsonl(input: impl BufRead) -> Result<Vec<PacketEvent>, PacketJsonlError> {
    let mut events = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PacketLine = serde_json::from_str(&line)
            .map_err(|source| PacketJsonlError::Parse { line: line_no, source })?;
        if p.flags.is_some() && p.proto != Protocol::Tcp {
            return Err(PacketJsonlError::FlagsOnNonTcp { line: line_no });
        }
        let tcp_flags = match p.proto {
            Protocol::Tcp => {
                Some(p.flags.as_deref().map(TcpFlags::from_letters).unwrap_or_default())
            }
            _ => None,
        };
        events.push(PacketEvent {
            ts_us: p.ts_us,
            five_tuple: FiveTuple {
                src_addr: p.src,
                src_port: p.sport,
                dst_addr: p.dst,
                dst_port: p.dport,
                protocol: p.proto,
            },
            tcp_flags,
            payload_len: p.payload_len,
            wire_len: p.wire_len,
            icmp_type_code: p.icmp_type_code,
        });
    }
    Ok(events)
}

pub fn write_packets_jsonl(
    mut out: impl Write,
    events: &[PacketEvent],
) -> Result<(), PacketJsonlError> {
    for ev in events {
        let line = PacketLine {
            ts_us: ev.ts_us,
            src: ev.five_tuple.src_addr,
            sport: ev.five_tuple.src_port,
            dst: ev.five_tuple.dst_addr,
            dport: ev.five_tuple.dst_port,
            proto: ev.five_tuple.protocol,
            flags: ev.tcp_flags.map(TcpFlags::to_letters),
            payload_len: ev.payload_len,
            wire_len: ev.wire_len,
            icmp_type_code: ev.icmp_type_code,
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
