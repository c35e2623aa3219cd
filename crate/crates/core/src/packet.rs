//! Simulated Ethernet frames.
//!
//! Headers are kept as typed fields rather than byte buffers: classification
//! and routing only ever look at field values.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
/// IEEE local experimental EtherType, used for raw frames without an IP header.
pub const ETHERTYPE_EXPERIMENTAL: u16 = 0x88B5;

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

pub const MIN_FRAME_BYTES: u32 = 64;
pub const MAX_FRAME_BYTES: u32 = 1518;
pub const MAX_TAGGED_FRAME_BYTES: u32 = 1522;
pub const MIN_ICMP_FRAME_BYTES: u32 = 74;

/// Preamble + start delimiter (8 bytes) and the inter-frame gap (12 bytes).
pub const WIRE_OVERHEAD_BYTES: u32 = 20;

const ETH_HEADER_BYTES: u32 = 14;
const VLAN_TAG_BYTES: u32 = 4;
const FCS_BYTES: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("frame size {size} bytes outside [{min}, {max}] for the present headers")]
    Size { size: u32, min: u32, max: u32 },
}

fn field_err(field: &'static str, reason: impl Into<String>) -> PacketError {
    PacketError::Field { field, reason: reason.into() }
}

/// 48-bit MAC address.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        MacAddr([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn to_u64(self) -> u64 {
        let mut b = [0u8; 8];
        b[2..].copy_from_slice(&self.0);
        u64::from_be_bytes(b)
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(format!("malformed MAC address `{s}`"));
        }
        let mut out = [0u8; 6];
        for (slot, part) in out.iter_mut().zip(parts) {
            *slot = u8::from_str_radix(part, 16).map_err(|_| format!("malformed MAC address `{s}`"))?;
        }
        Ok(MacAddr(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VlanTag {
    pub outer_id: u16,
    pub inner_id: Option<u16>,
    pub pcp: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IpHeader {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub protocol: u8,
    pub dscp: u8,
}

impl IpHeader {
    pub fn version(&self) -> u8 {
        if self.src.is_ipv4() {
            4
        } else {
            6
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct L4Header {
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_flags: u8,
}

/// Header values a frame is built from. Unset fields are absent headers;
/// `ethertype` defaults to the one implied by the IP header.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrameSpec {
    pub frame_id: u64,
    pub flow_id: u32,
    pub ethertype: Option<u16>,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub vlan: Option<VlanTag>,
    pub ip: Option<IpHeader>,
    pub l4: Option<L4Header>,
}

/// An immutable simulated frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    frame_id: u64,
    flow_id: u32,
    size_bytes: u32,
    ethertype: u16,
    src_mac: MacAddr,
    dst_mac: MacAddr,
    vlan: Option<VlanTag>,
    ip: Option<IpHeader>,
    l4: Option<L4Header>,
    priority: u8,
    created_at: SimTime,
    last_hop_arrival: SimTime,
}

/// Smallest legal frame for the given headers.
pub fn min_frame_bytes(vlan: Option<&VlanTag>, ip: Option<&IpHeader>, has_l4: bool) -> u32 {
    let mut hdr = ETH_HEADER_BYTES + FCS_BYTES;
    if let Some(tag) = vlan {
        hdr += VLAN_TAG_BYTES;
        if tag.inner_id.is_some() {
            hdr += VLAN_TAG_BYTES;
        }
    }
    let mut min = MIN_FRAME_BYTES;
    if let Some(ip) = ip {
        hdr += if ip.version() == 4 { 20 } else { 40 };
        if has_l4 {
            hdr += if ip.protocol == PROTO_TCP { 20 } else { 8 };
        }
        if ip.protocol == PROTO_ICMP {
            min = min.max(MIN_ICMP_FRAME_BYTES);
        }
    }
    min.max(hdr)
}

pub fn max_frame_bytes(vlan: Option<&VlanTag>) -> u32 {
    if vlan.is_some() {
        MAX_TAGGED_FRAME_BYTES
    } else {
        MAX_FRAME_BYTES
    }
}

/// Builds a validated frame. Priority comes from the VLAN PCP when tagged,
/// otherwise the top three DSCP bits, otherwise zero.
pub fn make_frame(spec: &FrameSpec, size_bytes: u32, created_at: SimTime) -> Result<Frame, PacketError> {
    if let Some(tag) = &spec.vlan {
        if tag.outer_id > 4095 {
            return Err(field_err("vlan.outer_id", format!("{} exceeds 4095", tag.outer_id)));
        }
        if let Some(inner) = tag.inner_id {
            if inner > 4095 {
                return Err(field_err("vlan.inner_id", format!("{inner} exceeds 4095")));
            }
        }
        if tag.pcp > 7 {
            return Err(field_err("vlan.pcp", format!("{} exceeds 7", tag.pcp)));
        }
    }
    if let Some(ip) = &spec.ip {
        if ip.src.is_ipv4() != ip.dst.is_ipv4() {
            return Err(field_err("ip.dst", "address family differs from ip.src"));
        }
        if ip.dscp > 63 {
            return Err(field_err("ip.dscp", format!("{} exceeds 63", ip.dscp)));
        }
    }
    if spec.l4.is_some() && spec.ip.is_none() {
        return Err(field_err("l4", "layer-4 header requires an IP header"));
    }
    let implied = spec.ip.as_ref().map(|ip| if ip.version() == 4 { ETHERTYPE_IPV4 } else { ETHERTYPE_IPV6 });
    let ethertype = match (spec.ethertype, implied) {
        (Some(given), Some(implied)) if given != implied => {
            return Err(field_err("ethertype", format!("{given:#06x} does not carry IPv{}", spec.ip.unwrap().version())))
        }
        (Some(given), _) => given,
        (None, Some(implied)) => implied,
        (None, None) => ETHERTYPE_EXPERIMENTAL,
    };

    let min = min_frame_bytes(spec.vlan.as_ref(), spec.ip.as_ref(), spec.l4.is_some());
    let max = max_frame_bytes(spec.vlan.as_ref());
    if size_bytes < min || size_bytes > max {
        return Err(PacketError::Size { size: size_bytes, min, max });
    }

    let priority = match (&spec.vlan, &spec.ip) {
        (Some(tag), _) => tag.pcp,
        (None, Some(ip)) => ip.dscp >> 3,
        (None, None) => 0,
    };

    Ok(Frame {
        frame_id: spec.frame_id,
        flow_id: spec.flow_id,
        size_bytes,
        ethertype,
        src_mac: spec.src_mac,
        dst_mac: spec.dst_mac,
        vlan: spec.vlan,
        ip: spec.ip,
        l4: spec.l4,
        priority,
        created_at,
        last_hop_arrival: created_at,
    })
}

/// Bits a frame occupies on the wire, preamble and inter-frame gap included.
pub fn wire_bits(frame: &Frame) -> u64 {
    wire_bits_for(frame.size_bytes)
}

pub fn wire_bits_for(size_bytes: u32) -> u64 {
    (size_bytes as u64 + WIRE_OVERHEAD_BYTES as u64) * 8
}

impl Frame {
    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn flow_id(&self) -> u32 {
        self.flow_id
    }
    pub fn size_bytes(&self) -> u32 {
        self.size_bytes
    }
    pub fn ethertype(&self) -> u16 {
        self.ethertype
    }
    pub fn src_mac(&self) -> MacAddr {
        self.src_mac
    }
    pub fn dst_mac(&self) -> MacAddr {
        self.dst_mac
    }
    pub fn vlan(&self) -> Option<&VlanTag> {
        self.vlan.as_ref()
    }
    pub fn ip(&self) -> Option<&IpHeader> {
        self.ip.as_ref()
    }
    pub fn l4(&self) -> Option<&L4Header> {
        self.l4.as_ref()
    }
    pub fn priority(&self) -> u8 {
        self.priority
    }
    pub fn created_at(&self) -> SimTime {
        self.created_at
    }
    pub fn last_hop_arrival(&self) -> SimTime {
        self.last_hop_arrival
    }

    /// The same frame, stamped as having reached its current hop at `at`.
    pub fn arrived_at(self, at: SimTime) -> Frame {
        Frame { last_hop_arrival: at, ..self }
    }

    /// A copy carrying a new identity; used by generators that stamp out
    /// frames from a validated template.
    pub fn renumbered(&self, frame_id: u64, created_at: SimTime) -> Frame {
        Frame { frame_id, created_at, last_hop_arrival: created_at, ..self.clone() }
    }
}
