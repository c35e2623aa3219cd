use std::net::{IpAddr, Ipv4Addr};

use serde::{Deserialize, Serialize};

use crate::packet::{make_frame, wire_bits_for, Frame, FrameSpec, IpHeader, L4Header, MacAddr, PacketError, MIN_ICMP_FRAME_BYTES, PROTO_ICMP, PROTO_TCP, PROTO_UDP};
use crate::time::{SimTime, PS_PER_SEC};
use crate::topology::NodeId;

pub const PAPER_FRAME_SIZES: [u32; 4] = [512, 1024, 1280, 1518];
pub const DEFAULT_BURST_PERIOD_SECS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Constant,
    /// `burst_count` frames every `period_secs`, paced at the generator's
    /// load within a burst.
    PeriodicBurst { period_secs: f64, burst_count: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub load_percent: f64,
    pub frame_size: u32,
    pub kind: GeneratorKind,
    pub protocol: u8,
    pub dscp: u8,
    /// Counted in the reported frame-loss figures.
    pub measured: bool,
}

impl GeneratorSpec {
    pub fn constant(src: u32, dst: u32, load_percent: f64, frame_size: u32) -> Self {
        GeneratorSpec {
            src: NodeId(src),
            dst: NodeId(dst),
            load_percent,
            frame_size,
            kind: GeneratorKind::Constant,
            protocol: PROTO_UDP,
            dscp: 0,
            measured: true,
        }
    }

    /// Unmeasured ICMP cross-traffic of minimum-size frames.
    pub fn burst(src: u32, dst: u32, load_percent: f64, period_secs: f64, burst_count: u32) -> Self {
        GeneratorSpec {
            src: NodeId(src),
            dst: NodeId(dst),
            load_percent,
            frame_size: MIN_ICMP_FRAME_BYTES,
            kind: GeneratorKind::PeriodicBurst { period_secs, burst_count },
            protocol: PROTO_ICMP,
            dscp: 0,
            measured: false,
        }
    }

    pub fn with_dscp(mut self, dscp: u8) -> Self {
        self.dscp = dscp;
        self
    }

    pub fn with_protocol(mut self, protocol: u8) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn measured(mut self, measured: bool) -> Self {
        self.measured = measured;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.load_percent > 0.0 && self.load_percent <= 100.0) {
            return Err(format!("load {} outside (0, 100]", self.load_percent));
        }
        if self.src == self.dst {
            return Err(format!("generator source and destination are both {}", self.src));
        }
        if ![PROTO_ICMP, PROTO_TCP, PROTO_UDP].contains(&self.protocol) {
            return Err(format!("protocol {} is not icmp, tcp or udp", self.protocol));
        }
        if let GeneratorKind::PeriodicBurst { period_secs, burst_count } = self.kind {
            if !(period_secs > 0.0) || burst_count == 0 {
                return Err("burst period and count must be positive".into());
            }
        }
        self.template(0).map(|_| ()).map_err(|e| e.to_string())
    }

    /// The frame every emission copies.
    pub fn template(&self, flow_id: u32) -> Result<Frame, PacketError> {
        let protocol = self.protocol;
        let l4 = match protocol {
            PROTO_ICMP => None,
            _ => Some(L4Header { src_port: 49152 + (flow_id % 16384) as u16, dst_port: 7, tcp_flags: 0 }),
        };
        let spec = FrameSpec {
            frame_id: 0,
            flow_id,
            ethertype: None,
            src_mac: node_mac(self.src),
            dst_mac: node_mac(self.dst),
            vlan: None,
            ip: Some(IpHeader { src: node_ip(self.src), dst: node_ip(self.dst), protocol, dscp: self.dscp }),
            l4,
        };
        make_frame(&spec, self.frame_size, SimTime::ZERO)
    }

    /// Gap between consecutive frame starts, in picoseconds.
    pub fn interval_ps(&self, rate_bps: u64) -> f64 {
        wire_bits_for(self.frame_size) as f64 * PS_PER_SEC as f64 / (rate_bps as f64 * self.load_percent / 100.0)
    }
}

pub fn node_ip(node: NodeId) -> IpAddr {
    let n = node.0;
    IpAddr::V4(Ipv4Addr::new(10, (n >> 16) as u8, (n >> 8) as u8, n as u8))
}

pub fn node_mac(node: NodeId) -> MacAddr {
    MacAddr::from_u64(0x0200_0000_0000 | node.0 as u64)
}

/// Smallest burst that overflows a queue of `queue_frames` frames of
/// `main_size` bytes when main traffic at `main_load` percent shares a link
/// with bursts paced at `burst_load` percent, times `margin`. Returns 0 when
/// the combined load fits the line.
pub fn overflow_burst_count(main_load: f64, main_size: u32, burst_load: f64, queue_frames: usize, margin: f64) -> u32 {
    let excess = (main_load + burst_load - 100.0) / 100.0;
    if excess <= 0.0 {
        return 0;
    }
    // Backlog grows by `excess` of the line rate while a burst lasts; each
    // burst frame slot lasts burst_bits / burst_load of line time.
    let burst_bits = wire_bits_for(MIN_ICMP_FRAME_BYTES) as f64;
    let growth_per_frame = excess * burst_bits / (burst_load / 100.0);
    let backlog_bits = queue_frames as f64 * wire_bits_for(main_size) as f64;
    (margin * backlog_bits / growth_per_frame).ceil() as u32
}
