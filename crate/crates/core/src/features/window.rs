use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;

use crate::model::{ServiceType, SessionRecord};

use super::HostFeatures;

/// Per-destination window capacity.
pub const WINDOW_CAPACITY: usize = 100;

#[derive(Debug, Clone)]
struct SessionSummary {
    src_addr: IpAddr,
    src_port: u16,
    service: ServiceType,
    syn_error: bool,
}

/// Order-sensitive window state: one writer feeds sessions in stream order.
///
/// Keeps, per destination address, a bounded FIFO of the most recent
/// `WINDOW_CAPACITY` session summaries.
#[derive(Debug, Default)]
pub struct HostWindow {
    by_destination: HashMap<IpAddr, VecDeque<SessionSummary>>,
    total_sessions: u64,
    include_current: bool,
}

impl HostWindow {
    pub fn new() -> Self {
        HostWindow::default()
    }

    /// Counts the current session in its own window. Off by default: the
    /// window is read as history.
    pub fn with_include_current(include_current: bool) -> Self {
        HostWindow { include_current, ..HostWindow::default() }
    }

    pub fn total_sessions(&self) -> u64 {
        self.total_sessions
    }

    /// Computes the five host features for `session` over the window, then
    /// appends the session to its destination's window.
    pub fn update_and_extract(&mut self, session: &SessionRecord) -> HostFeatures {
        let dst = session.five_tuple.dst_addr;
        if self.include_current {
            self.append(session);
            let f = self.count(session);
            self.total_sessions += 1;
            return f;
        }
        let features = if self.by_destination.contains_key(&dst) {
            self.count(session)
        } else {
            HostFeatures::default()
        };
        self.append(session);
        self.total_sessions += 1;
        features
    }

    fn count(&self, session: &SessionRecord) -> HostFeatures {
        let mut f = HostFeatures::default();
        let Some(window) = self.by_destination.get(&session.five_tuple.dst_addr) else {
            return f;
        };
        for s in window {
            if s.src_addr == session.five_tuple.src_addr {
                f.dst_host_count += 1;
                if s.src_port == session.five_tuple.src_port {
                    f.dst_host_same_src_port_count += 1;
                }
                if s.syn_error {
                    f.dst_host_serror_count += 1;
                }
            }
            if s.service == session.service {
                f.dst_host_srv_count += 1;
                if s.syn_error {
                    f.dst_host_srv_serror_count += 1;
                }
            }
        }
        f
    }

    fn append(&mut self, session: &SessionRecord) {
        let window = self.by_destination.entry(session.five_tuple.dst_addr).or_default();
        if window.len() == WINDOW_CAPACITY {
            window.pop_front();
        }
        window.push_back(SessionSummary {
            src_addr: session.five_tuple.src_addr,
            src_port: session.five_tuple.src_port,
            service: session.service.clone(),
            syn_error: session.conn_state.is_syn_error(),
        });
    }
}
