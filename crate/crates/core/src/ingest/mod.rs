//! Header-only ingestion: pcap parsing, Δ-window partitioning and per-user
//! window summaries.

mod dns;
mod partition;
mod pcap;
mod summary;

use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Micros;
use crate::identity::LocalPrefixes;

pub use dns::query_name;
pub use partition::{
    partition, read_partition, write_partitions, PartitionSet, MAX_TIMESTAMP, MIN_TIMESTAMP,
};
pub use pcap::{parse_capture, CaptureParser, ParseStats};
pub use summary::{read_summaries, summarize_window, write_summaries, DnsEvent, WindowSummary};

/// Upstream TCP payloads below this size are treated as interactive
/// (keystroke-scale) messages.
pub const SMALL_PACKET_THRESHOLD: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Transport {
    Tcp,
    Udp,
    Other,
}

/// One header-level observation. Nothing beyond the DNS query name is kept
/// from packet payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub timestamp: Micros,
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    pub payload_bytes: u32,
    pub dns_qname: Option<String>,
    pub tcp_small_upstream: bool,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub local_prefixes: LocalPrefixes,
    pub small_packet_threshold: u32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            local_prefixes: LocalPrefixes::default(),
            small_packet_threshold: SMALL_PACKET_THRESHOLD,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("capture header not recognized as pcap or pcap-ng")]
    UnrecognizedHeader,
    #[error("capture is empty")]
    EmptyCapture,
    #[error("unsupported link type {0}")]
    UnsupportedLinktype(i32),
    #[error("capture read failed: {0}")]
    Read(String),
    #[error("malformed record in {file}: line {line}: {source}")]
    BadRecord {
        file: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
