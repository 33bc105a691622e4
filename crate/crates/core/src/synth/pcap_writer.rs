use std::net::Ipv4Addr;

use etherparse::PacketBuilder;

use crate::clock::{Micros, MICROS_PER_SEC};

const LINKTYPE_ETHERNET: u32 = 1;
const SNAPLEN: u32 = 65_535;
const ROUTER_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x01];

/// Classic little-endian pcap with microsecond timestamps.
pub struct PcapWriter {
    buf: Vec<u8>,
    frames: u64,
}

impl Default for PcapWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl PcapWriter {
    pub fn new() -> Self {
        let mut buf = Vec::with_capacity(1 << 20);
        buf.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&4u16.to_le_bytes());
        buf.extend_from_slice(&0i32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&SNAPLEN.to_le_bytes());
        buf.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        PcapWriter { buf, frames: 0 }
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn write_frame(&mut self, ts: Micros, frame: &[u8]) {
        let secs = ts.div_euclid(MICROS_PER_SEC) as u32;
        let usecs = ts.rem_euclid(MICROS_PER_SEC) as u32;
        let len = frame.len() as u32;
        self.buf.extend_from_slice(&secs.to_le_bytes());
        self.buf.extend_from_slice(&usecs.to_le_bytes());
        self.buf.extend_from_slice(&len.to_le_bytes());
        self.buf.extend_from_slice(&len.to_le_bytes());
        self.buf.extend_from_slice(frame);
        self.frames += 1;
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

fn host_mac(addr: Ipv4Addr) -> [u8; 6] {
    let o = addr.octets();
    [0x02, 0x10, o[0], o[1], o[2], o[3]]
}

fn macs(src: Ipv4Addr, dst: Ipv4Addr, src_local: bool) -> ([u8; 6], [u8; 6]) {
    if src_local {
        (host_mac(src), ROUTER_MAC)
    } else {
        (ROUTER_MAC, host_mac(dst))
    }
}

pub fn udp_frame(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    src_local: bool,
    payload: &[u8],
) -> Vec<u8> {
    let (smac, dmac) = macs(src, dst, src_local);
    let builder = PacketBuilder::ethernet2(smac, dmac)
        .ipv4(src.octets(), dst.octets(), 64)
        .udp(sport, dport);
    let mut out = Vec::with_capacity(builder.size(payload.len()));
    builder.write(&mut out, payload).expect("in-memory write");
    out
}

#[allow(clippy::too_many_arguments)]
pub fn tcp_frame(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    sport: u16,
    dport: u16,
    seq: u32,
    ack: u32,
    src_local: bool,
    payload: &[u8],
) -> Vec<u8> {
    let (smac, dmac) = macs(src, dst, src_local);
    let builder = PacketBuilder::ethernet2(smac, dmac)
        .ipv4(src.octets(), dst.octets(), 64)
        .tcp(sport, dport, seq, 64_240)
        .ack(ack)
        .psh();
    let mut out = Vec::with_capacity(builder.size(payload.len()));
    builder.write(&mut out, payload).expect("in-memory write");
    out
}

/// Single-question recursive A query.
pub fn dns_query(id: u16, qname: &str) -> Vec<u8> {
    let mut m = Vec::with_capacity(18 + qname.len());
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&0x0100u16.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&[0, 0, 0, 0, 0, 0]);
    for label in qname.split('.') {
        m.push(label.len() as u8);
        m.extend_from_slice(label.as_bytes());
    }
    m.push(0);
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::query_name;

    #[test]
    fn dns_query_parses_back() {
        let q = dns_query(7, "www.example.com");
        assert_eq!(query_name(&q).as_deref(), Some("www.example.com"));
    }

    #[test]
    fn header_is_24_bytes() {
        assert_eq!(PcapWriter::new().finish().len(), 24);
    }
}
