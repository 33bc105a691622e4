use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, PacketRecord, Transport};
use crate::clock::{Clock, Micros, MICROS_PER_SEC};
use crate::features::etld::etld1;
use crate::identity::{classify_direction, Direction, LocalPrefixes, Registry, ALL_OTHER};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DnsEvent {
    pub timestamp: Micros,
    pub etld1: String,
}

/// Per-user aggregate of one Δ window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_start: Micros,
    pub user_id: String,
    pub packet_count: u64,
    pub byte_count_up: u64,
    pub byte_count_down: u64,
    pub share_tcp: f64,
    pub share_udp: f64,
    pub share_other: f64,
    pub dns_events: Vec<DnsEvent>,
    /// Seconds between consecutive small upstream TCP packets in this window.
    pub small_upstream_gaps: Vec<f64>,
}

#[derive(Default)]
struct Acc {
    packets: u64,
    up: u64,
    down: u64,
    tcp: u64,
    udp: u64,
    other: u64,
    dns: Vec<DnsEvent>,
    small_ts: Vec<Micros>,
}

/// The user a packet belongs to: the local source if there is one, else the
/// local destination, else the fallback group.
pub(crate) fn attribute<'a>(
    record: &PacketRecord,
    registry: &'a Registry,
    local: &LocalPrefixes,
) -> &'a str {
    if local.contains(&record.src_addr) {
        registry.resolve(&record.src_addr, record.timestamp)
    } else if local.contains(&record.dst_addr) {
        registry.resolve(&record.dst_addr, record.timestamp)
    } else {
        ALL_OTHER
    }
}

/// Aggregates one partition into one summary per (window, user) seen,
/// ordered by window then user id.
pub fn summarize_window(
    records: &[PacketRecord],
    clock: &Clock,
    registry: &Registry,
    local: &LocalPrefixes,
) -> Vec<WindowSummary> {
    let mut groups: BTreeMap<(Micros, String), Acc> = BTreeMap::new();
    for r in records {
        let user = attribute(r, registry, local).to_string();
        let acc = groups
            .entry((clock.window_start(r.timestamp), user))
            .or_default();
        acc.packets += 1;
        match r.transport {
            Transport::Tcp => acc.tcp += 1,
            Transport::Udp => acc.udp += 1,
            Transport::Other => acc.other += 1,
        }
        match classify_direction(&r.src_addr, &r.dst_addr, local) {
            Direction::Upstream => acc.up += r.payload_bytes as u64,
            Direction::Downstream => acc.down += r.payload_bytes as u64,
            Direction::Internal | Direction::External => {}
        }
        if let Some(domain) = r.dns_qname.as_deref().and_then(|q| etld1(q).ok()) {
            if domain.registrable {
                acc.dns.push(DnsEvent {
                    timestamp: r.timestamp,
                    etld1: domain.name,
                });
            }
        }
        if r.tcp_small_upstream {
            acc.small_ts.push(r.timestamp);
        }
    }

    groups
        .into_iter()
        .map(|((window_start, user_id), mut acc)| {
            let n = acc.packets as f64;
            acc.dns.sort();
            acc.small_ts.sort_unstable();
            let gaps = acc
                .small_ts
                .windows(2)
                .map(|w| (w[1] - w[0]) as f64 / MICROS_PER_SEC as f64)
                .collect();
            WindowSummary {
                window_start,
                user_id,
                packet_count: acc.packets,
                byte_count_up: acc.up,
                byte_count_down: acc.down,
                share_tcp: acc.tcp as f64 / n,
                share_udp: acc.udp as f64 / n,
                share_other: acc.other as f64 / n,
                dns_events: acc.dns,
                small_upstream_gaps: gaps,
            }
        })
        .collect()
}

pub fn write_summaries(path: &Path, summaries: &[WindowSummary]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::new();
    for s in summaries {
        serde_json::to_writer(&mut out, s).expect("summaries serialize");
        out.push(b'\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, out)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<Vec<WindowSummary>, IngestError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| IngestError::BadRecord {
                file: path.display().to_string(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
