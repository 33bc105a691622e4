use std::io::Read;
use std::net::IpAddr;

use etherparse::{NetSlice, SlicedPacket, TransportSlice};
use pcap_parser::pcapng::Block;
use pcap_parser::traits::PcapReaderIterator;
use pcap_parser::{create_reader, Linktype, PcapBlockOwned, PcapError};
use tracing::warn;

use super::dns::query_name;
use super::{IngestError, ParseOptions, PacketRecord, Transport};
use crate::clock::{Micros, MICROS_PER_SEC};
use crate::identity::{classify_direction, Direction};

const READ_BUFFER: usize = 1 << 20;
const DNS_PORT: u16 = 53;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub frames: u64,
    pub records: u64,
    pub non_ip: u64,
    pub malformed: u64,
    /// The capture ended in the middle of a packet.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy)]
struct Interface {
    linktype: Linktype,
    ts_offset: u64,
    ts_resolution: u64,
}

/// Streaming pcap / pcap-ng reader yielding one [`PacketRecord`] per IP packet.
pub struct CaptureParser<'r> {
    reader: Box<dyn PcapReaderIterator + 'r>,
    options: ParseOptions,
    legacy: Option<(Linktype, bool)>,
    interfaces: Vec<Interface>,
    stats: ParseStats,
    done: bool,
}

impl<'r> CaptureParser<'r> {
    pub fn new<R: Read + 'r>(source: R, options: ParseOptions) -> Result<Self, IngestError> {
        let reader = create_reader(READ_BUFFER, source).map_err(|e| match e {
            PcapError::Eof => IngestError::EmptyCapture,
            PcapError::ReadError => IngestError::Read("read error".into()),
            _ => IngestError::UnrecognizedHeader,
        })?;
        Ok(CaptureParser {
            reader,
            options,
            legacy: None,
            interfaces: Vec::new(),
            stats: ParseStats::default(),
            done: false,
        })
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    fn decode(
        &mut self,
        linktype: Linktype,
        timestamp: Micros,
        data: &[u8],
    ) -> Option<PacketRecord> {
        self.stats.frames += 1;
        let sliced = if linktype == Linktype::ETHERNET {
            SlicedPacket::from_ethernet(data)
        } else {
            SlicedPacket::from_ip(data)
        };
        let sliced = match sliced {
            Ok(s) => s,
            Err(_) => {
                if is_ip_ethertype(linktype, data) {
                    self.stats.malformed += 1;
                } else {
                    self.stats.non_ip += 1;
                }
                return None;
            }
        };
        let (src_addr, dst_addr, ip_payload) = match &sliced.net {
            Some(NetSlice::Ipv4(v4)) => (
                IpAddr::V4(v4.header().source_addr()),
                IpAddr::V4(v4.header().destination_addr()),
                v4.payload().payload.len(),
            ),
            Some(NetSlice::Ipv6(v6)) => (
                IpAddr::V6(v6.header().source_addr()),
                IpAddr::V6(v6.header().destination_addr()),
                v6.payload().payload.len(),
            ),
            _ => {
                self.stats.non_ip += 1;
                return None;
            }
        };
        let (transport, src_port, dst_port, payload): (Transport, u16, u16, &[u8]) =
            match &sliced.transport {
                Some(TransportSlice::Tcp(tcp)) => (
                    Transport::Tcp,
                    tcp.source_port(),
                    tcp.destination_port(),
                    tcp.payload(),
                ),
                Some(TransportSlice::Udp(udp)) => (
                    Transport::Udp,
                    udp.source_port(),
                    udp.destination_port(),
                    udp.payload(),
                ),
                _ => (Transport::Other, 0, 0, &[]),
            };
        let payload_bytes = match transport {
            Transport::Other => ip_payload,
            _ => payload.len(),
        } as u32;

        let dns_qname = match transport {
            Transport::Udp if dst_port == DNS_PORT => query_name(payload),
            // DNS over TCP carries a two-byte length prefix.
            Transport::Tcp if dst_port == DNS_PORT && payload.len() > 2 => {
                query_name(&payload[2..])
            }
            _ => None,
        };
        let direction = classify_direction(&src_addr, &dst_addr, &self.options.local_prefixes);
        let tcp_small_upstream = transport == Transport::Tcp
            && direction == Direction::Upstream
            && payload_bytes > 0
            && payload_bytes < self.options.small_packet_threshold;

        self.stats.records += 1;
        Some(PacketRecord {
            timestamp,
            src_addr,
            dst_addr,
            src_port,
            dst_port,
            transport,
            payload_bytes,
            dns_qname,
            tcp_small_upstream,
        })
    }
}

fn is_ip_ethertype(linktype: Linktype, data: &[u8]) -> bool {
    if linktype != Linktype::ETHERNET {
        return true;
    }
    matches!(data.get(12..14), Some([0x08, 0x00] | [0x86, 0xdd] | [0x81, 0x00]))
}

fn supported(linktype: Linktype) -> Result<(), IngestError> {
    let ok = [Linktype::ETHERNET, Linktype::RAW, Linktype::IPV4, Linktype::IPV6];
    if ok.contains(&linktype) {
        Ok(())
    } else {
        Err(IngestError::UnsupportedLinktype(linktype.0))
    }
}

impl<'r> CaptureParser<'r> {
    /// Next record, `Ok(None)` at end of stream. Only header-level failures are errors.
    pub fn next_record(&mut self) -> Result<Option<PacketRecord>, IngestError> {
        loop {
            if self.done {
                return Ok(None);
            }
            // The borrowed block is turned into an owned decision before consuming.
            enum Step {
                Packet(Linktype, Micros, Vec<u8>),
                Skip,
            }
            let (offset, step) = match self.reader.next() {
                Ok((offset, block)) => {
                    let step = match block {
                        PcapBlockOwned::LegacyHeader(hdr) => {
                            supported(hdr.network)?;
                            self.legacy = Some((hdr.network, hdr.is_nanosecond_precision()));
                            Step::Skip
                        }
                        PcapBlockOwned::Legacy(b) => {
                            let (linktype, nanos) = self.legacy.unwrap_or((Linktype::ETHERNET, false));
                            let frac = if nanos {
                                b.ts_usec as i64 / 1_000
                            } else {
                                b.ts_usec as i64
                            };
                            let ts = b.ts_sec as i64 * MICROS_PER_SEC + frac;
                            Step::Packet(linktype, ts, b.data.to_vec())
                        }
                        PcapBlockOwned::NG(Block::SectionHeader(_)) => {
                            self.interfaces.clear();
                            Step::Skip
                        }
                        PcapBlockOwned::NG(Block::InterfaceDescription(idb)) => {
                            supported(idb.linktype)?;
                            self.interfaces.push(Interface {
                                linktype: idb.linktype,
                                ts_offset: idb.ts_offset().max(0) as u64,
                                ts_resolution: idb.ts_resolution().unwrap_or(1_000_000),
                            });
                            Step::Skip
                        }
                        PcapBlockOwned::NG(Block::EnhancedPacket(epb)) => {
                            match self.interfaces.get(epb.if_id as usize).copied() {
                                Some(iface) => {
                                    let (sec, frac) =
                                        epb.decode_ts(iface.ts_offset, iface.ts_resolution);
                                    let micros = (frac as u128 * 1_000_000
                                        / iface.ts_resolution as u128)
                                        as i64;
                                    let ts = sec as i64 * MICROS_PER_SEC + micros;
                                    Step::Packet(iface.linktype, ts, epb.data.to_vec())
                                }
                                None => {
                                    self.stats.frames += 1;
                                    self.stats.malformed += 1;
                                    Step::Skip
                                }
                            }
                        }
                        PcapBlockOwned::NG(_) => Step::Skip,
                    };
                    (offset, step)
                }
                Err(PcapError::Eof) => {
                    self.done = true;
                    return Ok(None);
                }
                Err(PcapError::Incomplete(_)) => {
                    self.reader
                        .refill()
                        .map_err(|e| IngestError::Read(format!("{e:?}")))?;
                    continue;
                }
                Err(PcapError::UnexpectedEof) => {
                    warn!("capture ends with a truncated packet; stopping");
                    self.stats.truncated = true;
                    self.done = true;
                    return Ok(None);
                }
                Err(e) => {
                    // A corrupt block cannot be resynchronised; keep what was read.
                    warn!(error = ?e, "unreadable capture block; stopping");
                    self.stats.truncated = true;
                    self.done = true;
                    return Ok(None);
                }
            };
            self.reader.consume(offset);
            if let Step::Packet(linktype, ts, data) = step {
                if let Some(record) = self.decode(linktype, ts, &data) {
                    return Ok(Some(record));
                }
            }
        }
    }
}

impl Iterator for CaptureParser<'_> {
    type Item = Result<PacketRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Parses a whole capture into memory.
pub fn parse_capture<R: Read>(
    source: R,
    options: &ParseOptions,
) -> Result<(Vec<PacketRecord>, ParseStats), IngestError> {
    let mut parser = CaptureParser::new(source, options.clone())?;
    let mut records = Vec::new();
    while let Some(r) = parser.next_record()? {
        records.push(r);
    }
    let stats = parser.stats();
    if stats.malformed > 0 {
        warn!(malformed = stats.malformed, "skipped malformed packets");
    }
    Ok((records, stats))
}
