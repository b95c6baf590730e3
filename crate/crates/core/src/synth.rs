//! Deterministic synthetic traffic generator for desk-scale experiments and
//! test fixtures. Normal sessions imitate ordinary client/server traffic;
//! abnormal sessions imitate connect scans (failed handshakes hammering a
//! destination). `feature_noise` draws a fraction of sessions from the other
//! class's distribution without flipping the label, which blurs the class
//! boundary.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::{ipv4, ClassLabel, ConnState, FiveTuple, Protocol, ServiceType, SessionRecord};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub sessions: usize,
    pub abnormal_fraction: f64,
    /// Probability that a session's features come from the opposite class's
    /// generator while keeping its label.
    pub feature_noise: f64,
    pub destinations: u8,
    pub sources: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sessions: 10_000,
            abnormal_fraction: 0.3,
            feature_noise: 0.0,
            destinations: 20,
            sources: 30,
        }
    }
}

pub fn generate_sessions(cfg: &SynthConfig, seed: u64) -> Vec<(SessionRecord, ClassLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts_ms: i64 = 1_600_000_000_000;
    let mut out = Vec::with_capacity(cfg.sessions);
    for id in 0..cfg.sessions {
        ts_ms += rng.random_range(0..20);
        let abnormal = rng.random_bool(cfg.abnormal_fraction);
        let noisy = cfg.feature_noise > 0.0 && rng.random_bool(cfg.feature_noise);
        let shape_abnormal = abnormal != noisy;
        let session = if shape_abnormal {
            scan_session(&mut rng, id as u64, ts_ms, cfg)
        } else {
            benign_session(&mut rng, id as u64, ts_ms, cfg)
        };
        let label = if abnormal { ClassLabel::Abnormal } else { ClassLabel::Normal };
        out.push((session, label));
    }
    out
}

fn benign_session(rng: &mut ChaCha8Rng, id: u64, ts_ms: i64, cfg: &SynthConfig) -> SessionRecord {
    let src = ipv4(10, 0, 1, rng.random_range(1..=cfg.sources));
    let dst = ipv4(10, 0, 2, rng.random_range(1..=cfg.destinations));
    let (dst_port, service) = [
        (80u16, ServiceType::Http),
        (443, ServiceType::Https),
        (53, ServiceType::Dns),
    ]
    .choose(rng)
    .unwrap()
    .clone();
    let src_packets = rng.random_range(4..60);
    let dst_packets = rng.random_range(4..80);
    let src_bytes = src_packets * rng.random_range(100..900);
    let dst_bytes = dst_packets * rng.random_range(200..1400);
    SessionRecord {
        session_id: id,
        timestamp_ms: ts_ms,
        duration_s: rng.random_range(0.01..5.0),
        five_tuple: FiveTuple {
            src_addr: src,
            src_port: rng.random_range(32768..61000),
            dst_addr: dst,
            dst_port,
            protocol: Protocol::Tcp,
        },
        service,
        conn_state: if rng.random_bool(0.95) { ConnState::SF } else { ConnState::S1 },
        direction: crate::model::Direction::L2L,
        src_packets,
        src_bytes,
        src_ip_bytes: src_bytes + src_packets * 40,
        dst_packets,
        dst_bytes,
        dst_ip_bytes: dst_bytes + dst_packets * 40,
    }
}

fn scan_session(rng: &mut ChaCha8Rng, id: u64, ts_ms: i64, cfg: &SynthConfig) -> SessionRecord {
    // A handful of scanners sweeping low ports on a few targets.
    let src = ipv4(172, 16, 0, rng.random_range(1..=4));
    let dst = ipv4(10, 0, 2, rng.random_range(1..=cfg.destinations.min(4)));
    SessionRecord {
        session_id: id,
        timestamp_ms: ts_ms,
        duration_s: rng.random_range(0.0..0.02),
        five_tuple: FiveTuple {
            src_addr: src,
            src_port: rng.random_range(32768..61000),
            dst_addr: dst,
            dst_port: rng.random_range(1..1024),
            protocol: Protocol::Tcp,
        },
        service: ServiceType::Other,
        conn_state: if rng.random_bool(0.8) { ConnState::S0 } else { ConnState::REJ },
        direction: crate::model::Direction::R2L,
        src_packets: rng.random_range(1..3),
        src_bytes: 0,
        src_ip_bytes: rng.random_range(40..120),
        dst_packets: 0,
        dst_bytes: 0,
        dst_ip_bytes: 0,
    }
}

/// Arbitrary (not class-shaped) random session, for codec and window tests.
pub fn arbitrary_session(rng: &mut ChaCha8Rng, id: u64) -> SessionRecord {
    let protocol = *[Protocol::Tcp, Protocol::Udp, Protocol::Icmp].choose(rng).unwrap();
    let src_bytes = rng.random_range(0..1_000_000);
    let dst_bytes = rng.random_range(0..1_000_000);
    let service: ServiceType = ["http", "dns", "ssh", "other", "telnet"]
        .choose(rng)
        .unwrap()
        .parse()
        .unwrap();
    SessionRecord {
        session_id: id,
        timestamp_ms: rng.random_range(0..2_000_000_000_000),
        duration_s: rng.random_range(0.0..3600.0),
        five_tuple: FiveTuple {
            src_addr: ipv4(rng.random(), rng.random(), rng.random(), rng.random()),
            src_port: rng.random(),
            dst_addr: ipv4(rng.random(), rng.random(), rng.random(), rng.random()),
            dst_port: rng.random(),
            protocol,
        },
        service,
        conn_state: *ConnState::ALL.choose(rng).unwrap(),
        direction: *[
            crate::model::Direction::L2L,
            crate::model::Direction::L2R,
            crate::model::Direction::R2L,
            crate::model::Direction::R2R,
        ]
        .choose(rng)
        .unwrap(),
        src_packets: rng.random_range(0..10_000),
        src_bytes,
        src_ip_bytes: src_bytes + rng.random_range(0..40_000),
        dst_packets: rng.random_range(0..10_000),
        dst_bytes,
        dst_ip_bytes: dst_bytes + rng.random_range(0..40_000),
    }
}
