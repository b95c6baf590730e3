//! Fixed binary record layout for the serialization boundary between the
//! feature stage and the classifier workers. Every encoded record starts
//! with the 8-byte schema fingerprint, followed by the fields in schema
//! order: unsigned integers as LEB128 varints, signed integers zigzag'd
//! first, strings as varint length + UTF-8 bytes, reals as 64-bit
//! little-endian IEEE 754.

use std::net::IpAddr;
use std::sync::LazyLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FullFeatureRecord, HostFeatures};
use crate::model::{FiveTuple, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Unsigned,
    Signed,
    Real,
    Text,
}

/// The ordered field list the codec commits to, plus its fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecSchema {
    pub fields: Vec<(&'static str, FieldType)>,
    pub fingerprint: [u8; 8],
}

impl CodecSchema {
    fn build() -> CodecSchema {
        use FieldType::*;
        let fields = vec![
            ("session_id", Unsigned),
            ("timestamp", Signed),
            ("duration", Real),
            ("src_ip", Text),
            ("src_port", Unsigned),
            ("dst_ip", Text),
            ("dst_port", Unsigned),
            ("protocol", Text),
            ("service", Text),
            ("conn_state", Text),
            ("direction", Text),
            ("src_packets", Unsigned),
            ("src_bytes", Unsigned),
            ("src_ip_bytes", Unsigned),
            ("dst_packets", Unsigned),
            ("dst_bytes", Unsigned),
            ("dst_ip_bytes", Unsigned),
            ("dst_host_count", Unsigned),
            ("dst_host_same_src_port_count", Unsigned),
            ("dst_host_serror_count", Unsigned),
            ("dst_host_srv_count", Unsigned),
            ("dst_host_srv_serror_count", Unsigned),
        ];
        let mut hasher = Sha256::new();
        for (name, ty) in &fields {
            hasher.update(name.as_bytes());
            hasher.update([match ty {
                Unsigned => 0u8,
                Signed => 1,
                Real => 2,
                Text => 3,
            }]);
        }
        let digest = hasher.finalize();
        CodecSchema { fields, fingerprint: digest[..8].try_into().unwrap() }
    }
}

/// The schema for the current 21-feature record layout.
pub fn record_schema() -> &'static CodecSchema {
    static SCHEMA: LazyLock<CodecSchema> = LazyLock::new(CodecSchema::build);
    &SCHEMA
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated record (needed {needed} more bytes at offset {offset})")]
    Truncated { offset: usize, needed: usize },
    #[error("schema fingerprint mismatch: record {got:02x?}, expected {want:02x?}")]
    FingerprintMismatch { got: [u8; 8], want: [u8; 8] },
    #[error("varint longer than 10 bytes at offset {0}")]
    VarintOverflow(usize),
    #[error("invalid UTF-8 in text field at offset {0}")]
    InvalidUtf8(usize),
    #[error("invalid enum value {value:?} for field {field}")]
    InvalidEnum { field: &'static str, value: String },
    #[error("trailing garbage: {0} bytes after the last field")]
    TrailingBytes(usize),
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_zigzag(out: &mut Vec<u8>, v: i64) {
    put_varint(out, ((v << 1) ^ (v >> 63)) as u64);
}

fn put_text(out: &mut Vec<u8>, s: &str) {
    put_varint(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn varint(&mut self) -> Result<u64, CodecError> {
        let start = self.pos;
        let mut v = 0u64;
        for i in 0..10 {
            let byte = self.take(1)?[0];
            v |= u64::from(byte & 0x7f) << (7 * i);
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(CodecError::VarintOverflow(start))
    }

    fn zigzag(&mut self) -> Result<i64, CodecError> {
        let v = self.varint()?;
        Ok((v >> 1) as i64 ^ -((v & 1) as i64))
    }

    fn real(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<&'a str, CodecError> {
        let start = self.pos;
        let len = self.varint()? as usize;
        std::str::from_utf8(self.take(len)?).map_err(|_| CodecError::InvalidUtf8(start))
    }
}

pub fn encode_record(record: &FullFeatureRecord, schema: &CodecSchema) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(&schema.fingerprint);
    let s = &record.session;
    let h = &record.host;
    put_varint(&mut out, s.session_id);
    put_zigzag(&mut out, s.timestamp_ms);
    out.extend_from_slice(&s.duration_s.to_le_bytes());
    put_text(&mut out, &s.five_tuple.src_addr.to_string());
    put_varint(&mut out, s.five_tuple.src_port.into());
    put_text(&mut out, &s.five_tuple.dst_addr.to_string());
    put_varint(&mut out, s.five_tuple.dst_port.into());
    put_text(&mut out, s.five_tuple.protocol.as_str());
    put_text(&mut out, s.service.name());
    put_text(&mut out, s.conn_state.as_str());
    put_text(&mut out, s.direction.as_str());
    for counter in
        [s.src_packets, s.src_bytes, s.src_ip_bytes, s.dst_packets, s.dst_bytes, s.dst_ip_bytes]
    {
        put_varint(&mut out, counter);
    }
    for counter in [
        h.dst_host_count,
        h.dst_host_same_src_port_count,
        h.dst_host_serror_count,
        h.dst_host_srv_count,
        h.dst_host_srv_serror_count,
    ] {
        put_varint(&mut out, counter.into());
    }
    out
}

pub fn decode_record(bytes: &[u8], schema: &CodecSchema) -> Result<FullFeatureRecord, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    let got: [u8; 8] = r.take(8)?.try_into().unwrap();
    if got != schema.fingerprint {
        return Err(CodecError::FingerprintMismatch { got, want: schema.fingerprint });
    }

    fn parse<T: std::str::FromStr>(field: &'static str, s: &str) -> Result<T, CodecError> {
        s.parse().map_err(|_| CodecError::InvalidEnum { field, value: s.to_string() })
    }

    let session_id = r.varint()?;
    let timestamp_ms = r.zigzag()?;
    let duration_s = r.real()?;
    let src_addr: IpAddr = parse("src_ip", r.text()?)?;
    let src_port = r.varint()? as u16;
    let dst_addr: IpAddr = parse("dst_ip", r.text()?)?;
    let dst_port = r.varint()? as u16;
    let protocol = parse("protocol", r.text()?)?;
    let service = parse("service", r.text()?)?;
    let conn_state = parse("conn_state", r.text()?)?;
    let direction = parse("direction", r.text()?)?;
    let mut counters = [0u64; 6];
    for c in &mut counters {
        *c = r.varint()?;
    }
    let mut host_counters = [0u32; 5];
    for c in &mut host_counters {
        *c = r.varint()? as u32;
    }
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - r.pos));
    }

    Ok(FullFeatureRecord {
        session: SessionRecord {
            session_id,
            timestamp_ms,
            duration_s,
            five_tuple: FiveTuple { src_addr, src_port, dst_addr, dst_port, protocol },
            service,
            conn_state,
            direction,
            src_packets: counters[0],
            src_bytes: counters[1],
            src_ip_bytes: counters[2],
            dst_packets: counters[3],
            dst_bytes: counters[4],
            dst_ip_bytes: counters[5],
        },
        host: HostFeatures {
            dst_host_count: host_counters[0],
            dst_host_same_src_port_count: host_counters[1],
            dst_host_serror_count: host_counters[2],
            dst_host_srv_count: host_counters[3],
            dst_host_srv_serror_count: host_counters[4],
        },
    })
}
