//! Reference models shared by the integration suites. Each one is written
//! against plain data (byte arrays, rationals, explicit enumeration) rather
//! than the library's own matching and search code.

#![allow(dead_code)]

use std::net::IpAddr;

use aclsim_core::acl::{
    AclRule, AclStack, Action, IpMatch, Masked, MatchField, OnExceed, PoliceOutcome, PolicerConfig, Range, ThresholdGuard,
    Verdict,
};
use aclsim_core::packet::{
    make_frame, max_frame_bytes, min_frame_bytes, Frame, FrameSpec, IpHeader, L4Header, MacAddr, VlanTag, ETHERTYPE_IPV4,
    ETHERTYPE_IPV6, PROTO_ICMP, PROTO_TCP, PROTO_UDP,
};
use aclsim_core::time::SimTime;
use aclsim_core::topology::{load_topology, Dir, LinkDir, LinkId, NodeId, PortId, Topology};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------- frames

#[derive(Clone, Debug)]
pub struct OIp {
    pub src: Vec<u8>,
    pub dst: Vec<u8>,
    pub proto: u8,
    pub dscp: u8,
}

#[derive(Clone, Debug)]
pub struct OFrame {
    pub eth: u16,
    pub vlan: Option<(u16, Option<u16>, u8)>,
    pub smac: [u8; 6],
    pub dmac: [u8; 6],
    pub ip: Option<OIp>,
    pub l4: Option<(u16, u16, u8)>,
    pub size: u32,
    pub port: u16,
}

const V4_POOL: [[u8; 4]; 6] = [[10, 0, 0, 1], [10, 0, 0, 2], [10, 0, 1, 3], [10, 1, 2, 3], [192, 168, 1, 1], [192, 168, 1, 130]];
const V6_POOL: [[u8; 16]; 3] = [
    [0x20, 0x01, 0x0d, 0xb8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    [0x20, 0x01, 0x0d, 0xb8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2],
    [0xfe, 0x80, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
];
const MAC_POOL: [[u8; 6]; 3] = [[2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 2], [0xaa, 0xbb, 0xcc, 0, 0, 9]];
const PORT_POOL: [u16; 6] = [7, 80, 443, 49152, 49153, 50000];
const VLAN_POOL: [u16; 3] = [10, 20, 4095];
const DSCP_POOL: [u8; 3] = [0, 10, 46];
const PROTO_POOL: [u8; 3] = [PROTO_ICMP, PROTO_TCP, PROTO_UDP];

fn pick<T: Copy, R: Rng>(rng: &mut R, xs: &[T]) -> T {
    *xs.choose(rng).unwrap()
}

fn addr(rng: &mut impl Rng, v6: bool) -> Vec<u8> {
    if v6 {
        pick(rng, &V6_POOL).to_vec()
    } else {
        pick(rng, &V4_POOL).to_vec()
    }
}

pub fn random_frame(rng: &mut impl Rng) -> OFrame {
    let vlan = match rng.gen_range(0..4) {
        0 => Some((pick(rng, &VLAN_POOL), None, rng.gen_range(0..8))),
        1 => Some((pick(rng, &VLAN_POOL), Some(pick(rng, &VLAN_POOL)), rng.gen_range(0..8))),
        _ => None,
    };
    let ip = (rng.gen_range(0..6) != 0).then(|| {
        let v6 = rng.gen_range(0..4) == 0;
        OIp { src: addr(rng, v6), dst: addr(rng, v6), proto: pick(rng, &PROTO_POOL), dscp: pick(rng, &DSCP_POOL) }
    });
    let l4 = match &ip {
        Some(ip) if ip.proto != PROTO_ICMP && rng.gen_range(0..5) != 0 => {
            Some((pick(rng, &PORT_POOL), pick(rng, &PORT_POOL), rng.gen::<u8>()))
        }
        _ => None,
    };
    let eth = match &ip {
        Some(ip) if ip.src.len() == 4 => ETHERTYPE_IPV4,
        Some(_) => ETHERTYPE_IPV6,
        None => pick(rng, &[0x0806u16, 0x88b5]),
    };
    let mut f = OFrame {
        eth,
        vlan,
        smac: pick(rng, &MAC_POOL),
        dmac: pick(rng, &MAC_POOL),
        ip,
        l4,
        size: 0,
        port: rng.gen_range(0..4),
    };
    let spec = f.spec();
    let min = min_frame_bytes(spec.vlan.as_ref(), spec.ip.as_ref(), spec.l4.is_some());
    let max = max_frame_bytes(spec.vlan.as_ref());
    f.size = match rng.gen_range(0..3) {
        0 => min,
        1 => max,
        _ => rng.gen_range(min..=max),
    };
    f
}

fn ip_of(bytes: &[u8]) -> IpAddr {
    match bytes.len() {
        4 => IpAddr::from(<[u8; 4]>::try_from(bytes).unwrap()),
        _ => IpAddr::from(<[u8; 16]>::try_from(bytes).unwrap()),
    }
}

fn mac_u64(b: &[u8; 6]) -> u64 {
    b.iter().fold(0, |acc, &x| acc << 8 | x as u64)
}

impl OFrame {
    fn spec(&self) -> FrameSpec {
        FrameSpec {
            ethertype: Some(self.eth),
            src_mac: MacAddr(self.smac),
            dst_mac: MacAddr(self.dmac),
            vlan: self.vlan.map(|(outer_id, inner_id, pcp)| VlanTag { outer_id, inner_id, pcp }),
            ip: self.ip.as_ref().map(|ip| IpHeader { src: ip_of(&ip.src), dst: ip_of(&ip.dst), protocol: ip.proto, dscp: ip.dscp }),
            l4: self.l4.map(|(src_port, dst_port, tcp_flags)| L4Header { src_port, dst_port, tcp_flags }),
            ..FrameSpec::default()
        }
    }

    pub fn build(&self) -> Frame {
        make_frame(&self.spec(), self.size, SimTime::ZERO).unwrap()
    }
}

// ----------------------------------------------------------------- rules

#[derive(Clone, Debug)]
pub enum OField {
    Eth(u16),
    Proto(u8),
    Len(u32, u32),
    VOuter(u16),
    VInner(u16),
    SMac([u8; 6], [u8; 6]),
    DMac([u8; 6], [u8; 6]),
    SIp(Vec<u8>, Vec<u8>),
    DIp(Vec<u8>, Vec<u8>),
    Port(u16),
    SPort(u16, u16),
    DPort(u16, u16),
    Flags(u8, u8),
    Dscp(u8),
}

impl OField {
    fn tag(&self) -> usize {
        match self {
            OField::Eth(_) => 0,
            OField::Proto(_) => 1,
            OField::Len(..) => 2,
            OField::VOuter(_) => 3,
            OField::VInner(_) => 4,
            OField::SMac(..) => 5,
            OField::DMac(..) => 6,
            OField::SIp(..) => 7,
            OField::DIp(..) => 8,
            OField::Port(_) => 9,
            OField::SPort(..) => 10,
            OField::DPort(..) => 11,
            OField::Flags(..) => 12,
            OField::Dscp(_) => 13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OAction {
    Permit,
    Deny,
    Police(u64, u64, u64),
    Guard(f64, Option<u8>),
}

#[derive(Clone, Debug)]
pub struct ORule {
    pub seq: u32,
    pub fields: Vec<OField>,
    pub action: OAction,
}

fn mask_bytes<const N: usize>(rng: &mut impl Rng) -> [u8; N] {
    let mut m = [0u8; N];
    match rng.gen_range(0..4) {
        0 => m = [0xff; N],
        1 => {}
        2 => {
            let bits = rng.gen_range(0..=N * 8);
            for (i, b) in m.iter_mut().enumerate() {
                *b = match bits.saturating_sub(i * 8) {
                    0 => 0,
                    k if k >= 8 => 0xff,
                    k => 0xffu8 << (8 - k),
                };
            }
        }
        _ => rng.fill(&mut m[..]),
    }
    m
}

fn masked(value: &[u8], mask: &[u8]) -> Vec<u8> {
    value.iter().zip(mask).map(|(v, m)| v & m).collect()
}

fn range16(rng: &mut impl Rng) -> (u16, u16) {
    let a = pick(rng, &PORT_POOL);
    match rng.gen_range(0..3) {
        0 => (a, a),
        1 => (a.saturating_sub(rng.gen_range(0..100)), a),
        _ => (a, a.saturating_add(rng.gen_range(0..20000))),
    }
}

fn random_field(rng: &mut impl Rng, tag: usize) -> OField {
    match tag {
        0 => OField::Eth(pick(rng, &[ETHERTYPE_IPV4, ETHERTYPE_IPV6, 0x0806, 0x88b5])),
        1 => OField::Proto(pick(rng, &PROTO_POOL)),
        2 => {
            let a = rng.gen_range(64..1600);
            let b = rng.gen_range(64..1600);
            OField::Len(a.min(b), a.max(b))
        }
        3 => OField::VOuter(pick(rng, &VLAN_POOL)),
        4 => OField::VInner(pick(rng, &VLAN_POOL)),
        5 | 6 => {
            let m = mask_bytes::<6>(rng);
            let v: [u8; 6] = masked(&pick(rng, &MAC_POOL), &m).try_into().unwrap();
            if tag == 5 {
                OField::SMac(v, m)
            } else {
                OField::DMac(v, m)
            }
        }
        7 | 8 => {
            let v6 = rng.gen_range(0..4) == 0;
            let m: Vec<u8> = if v6 { mask_bytes::<16>(rng).to_vec() } else { mask_bytes::<4>(rng).to_vec() };
            let v = masked(&addr(rng, v6), &m);
            if tag == 7 {
                OField::SIp(v, m)
            } else {
                OField::DIp(v, m)
            }
        }
        9 => OField::Port(rng.gen_range(0..4)),
        10 => {
            let (a, b) = range16(rng);
            OField::SPort(a, b)
        }
        11 => {
            let (a, b) = range16(rng);
            OField::DPort(a, b)
        }
        12 => {
            let m: u8 = rng.gen();
            OField::Flags(rng.gen::<u8>() & m, m)
        }
        _ => OField::Dscp(pick(rng, &DSCP_POOL)),
    }
}

pub fn random_action(rng: &mut impl Rng) -> OAction {
    match rng.gen_range(0..20) {
        0..=6 => OAction::Permit,
        7..=13 => OAction::Deny,
        14..=15 => OAction::Police(rng.gen_range(1..1_000_000_000), 12_304, 24_608),
        _ => OAction::Guard(pick(rng, &[0.5, 0.8, 0.9]), if rng.gen() { Some(rng.gen_range(0..8)) } else { None }),
    }
}

pub fn random_rules(rng: &mut impl Rng, max_rules: usize) -> Vec<ORule> {
    let n = rng.gen_range(0..=max_rules);
    let mut seqs: Vec<u32> = (1..=4 * max_rules as u32 + 4).collect();
    seqs.shuffle(rng);
    seqs.truncate(n);
    seqs.into_iter()
        .map(|seq| {
            let k = if rng.gen_range(0..20) == 0 { 0 } else { rng.gen_range(1..=4) };
            let mut tags: Vec<usize> = (0..14).collect();
            tags.shuffle(rng);
            let fields = tags[..k].iter().map(|&t| random_field(rng, t)).collect();
            ORule { seq, fields, action: random_action(rng) }
        })
        .collect()
}

fn ip_match(v: &[u8], m: &[u8]) -> IpMatch {
    IpMatch::with_mask(ip_of(v), ip_of(m)).unwrap()
}

impl ORule {
    pub fn build(&self) -> AclRule {
        let fields = self
            .fields
            .iter()
            .map(|f| match f {
                OField::Eth(t) => MatchField::Ethertype(*t),
                OField::Proto(p) => MatchField::IpProtocol(*p),
                OField::Len(a, b) => MatchField::PacketLength(Range::new(*a, *b)),
                OField::VOuter(v) => MatchField::VlanOuter(*v),
                OField::VInner(v) => MatchField::VlanInner(*v),
                OField::SMac(v, m) => MatchField::SrcMac(Masked::new(mac_u64(v), mac_u64(m))),
                OField::DMac(v, m) => MatchField::DstMac(Masked::new(mac_u64(v), mac_u64(m))),
                OField::SIp(v, m) => MatchField::SrcIp(ip_match(v, m)),
                OField::DIp(v, m) => MatchField::DstIp(ip_match(v, m)),
                OField::Port(p) => MatchField::IngressPort(PortId(*p)),
                OField::SPort(a, b) => MatchField::L4SrcPort(Range::new(*a, *b)),
                OField::DPort(a, b) => MatchField::L4DstPort(Range::new(*a, *b)),
                OField::Flags(v, m) => MatchField::TcpControl(Masked::new(*v, *m)),
                OField::Dscp(d) => MatchField::Dscp(*d),
            })
            .collect();
        let action = match self.action {
            OAction::Permit => Action::Permit,
            OAction::Deny => Action::Deny,
            OAction::Police(cir, nb, eb) => {
                Action::PermitPoliced(PolicerConfig { cir_bps: cir, normal_burst_bits: nb, excess_burst_bits: eb })
            }
            OAction::Guard(t, p) => {
                let on = match p {
                    Some(p) => OnExceed::DropByPriority { min_protected_priority: p },
                    None => OnExceed::Reroute,
                };
                Action::Guard(ThresholdGuard::new(t, on).unwrap())
            }
        };
        AclRule::new(self.seq, fields, action).unwrap()
    }
}

pub fn build_stack(rules: &[ORule]) -> AclStack {
    AclStack::from_rules("oracle", rules.iter().map(ORule::build).collect()).unwrap()
}

/// Bitwise check, one bit at a time.
fn bits_match(value: &[u8], mask: &[u8], got: &[u8]) -> bool {
    value.len() == got.len()
        && (0..got.len() * 8).all(|i| {
            let bit = 0x80 >> (i % 8);
            mask[i / 8] & bit == 0 || (got[i / 8] & bit) == (value[i / 8] & bit)
        })
}

pub fn field_matches(f: &OField, fr: &OFrame) -> bool {
    let ip = fr.ip.as_ref();
    match f {
        OField::Eth(t) => fr.eth == *t,
        OField::Proto(p) => ip.is_some_and(|ip| ip.proto == *p),
        OField::Len(a, b) => *a <= fr.size && fr.size <= *b,
        OField::VOuter(v) => fr.vlan.is_some_and(|t| t.0 == *v),
        OField::VInner(v) => fr.vlan.is_some_and(|t| t.1 == Some(*v)),
        OField::SMac(v, m) => bits_match(v, m, &fr.smac),
        OField::DMac(v, m) => bits_match(v, m, &fr.dmac),
        OField::SIp(v, m) => ip.is_some_and(|ip| bits_match(v, m, &ip.src)),
        OField::DIp(v, m) => ip.is_some_and(|ip| bits_match(v, m, &ip.dst)),
        OField::Port(p) => fr.port == *p,
        OField::SPort(a, b) => fr.l4.is_some_and(|l| *a <= l.0 && l.0 <= *b),
        OField::DPort(a, b) => fr.l4.is_some_and(|l| *a <= l.1 && l.1 <= *b),
        OField::Flags(v, m) => ip.is_some_and(|ip| ip.proto == PROTO_TCP) && fr.l4.is_some_and(|l| bits_match(&[*v], &[*m], &[l.2])),
        OField::Dscp(d) => ip.is_some_and(|ip| ip.dscp == *d),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OVerdict {
    Permit,
    Deny,
    Police(u64),
    Guard(f64),
}

/// Walks the rules in sequence order; the first full match decides.
pub fn naive_classify(rules: &[ORule], fr: &OFrame, load: f64) -> (OVerdict, Option<u32>) {
    let mut sorted: Vec<&ORule> = rules.iter().collect();
    sorted.sort_by_key(|r| r.seq);
    for r in sorted {
        if r.fields.iter().all(|f| field_matches(f, fr)) {
            let v = match r.action {
                OAction::Permit => OVerdict::Permit,
                OAction::Deny => OVerdict::Deny,
                OAction::Police(cir, ..) => OVerdict::Police(cir),
                OAction::Guard(t, _) if load > t => OVerdict::Guard(t),
                OAction::Guard(..) => OVerdict::Permit,
            };
            return (v, Some(r.seq));
        }
    }
    (OVerdict::Deny, None)
}

pub fn verdict_of(v: &Verdict) -> OVerdict {
    match v {
        Verdict::Permit => OVerdict::Permit,
        Verdict::Deny => OVerdict::Deny,
        Verdict::Police(p) => OVerdict::Police(p.cir_bps),
        Verdict::Guard(g) => OVerdict::Guard(g.threshold),
    }
}

fn mask_covers(av: &[u8], am: &[u8], bv: &[u8], bm: &[u8]) -> bool {
    av.len() == bv.len()
        && (0..av.len() * 8).all(|i| {
            let bit = 0x80 >> (i % 8);
            am[i / 8] & bit == 0 || (bm[i / 8] & bit != 0 && (av[i / 8] & bit) == (bv[i / 8] & bit))
        })
}

pub fn field_covers(a: &OField, b: &OField) -> bool {
    use OField::*;
    match (a, b) {
        (Eth(x), Eth(y)) => x == y,
        (Proto(x), Proto(y)) | (Dscp(x), Dscp(y)) => x == y,
        (Len(a0, a1), Len(b0, b1)) => a0 <= b0 && b1 <= a1,
        (VOuter(x), VOuter(y)) | (VInner(x), VInner(y)) | (Port(x), Port(y)) => x == y,
        (SMac(av, am), SMac(bv, bm)) | (DMac(av, am), DMac(bv, bm)) => mask_covers(av, am, bv, bm),
        (SIp(av, am), SIp(bv, bm)) | (DIp(av, am), DIp(bv, bm)) => mask_covers(av, am, bv, bm),
        (SPort(a0, a1), SPort(b0, b1)) | (DPort(a0, a1), DPort(b0, b1)) => a0 <= b0 && b1 <= a1,
        (Flags(av, am), Flags(bv, bm)) => mask_covers(&[*av], &[*am], &[*bv], &[*bm]),
        _ => false,
    }
}

/// Every field of `a` has a same-kind field in `b` that it covers.
pub fn rule_covers(a: &ORule, b: &ORule) -> bool {
    a.fields.iter().all(|fa| b.fields.iter().any(|fb| fa.tag() == fb.tag() && field_covers(fa, fb)))
}

/// (shadowed, by) pairs in stack order.
pub fn naive_lint(rules: &[ORule]) -> Vec<(u32, u32)> {
    let mut sorted: Vec<&ORule> = rules.iter().collect();
    sorted.sort_by_key(|r| r.seq);
    let mut out = Vec::new();
    for (j, later) in sorted.iter().enumerate() {
        for earlier in &sorted[..j] {
            if rule_covers(earlier, later) {
                out.push((later.seq, earlier.seq));
            }
        }
    }
    out
}

// --------------------------------------------------------------- policer

pub type Q = Ratio<i128>;

/// Token bucket in exact rational bits and seconds.
pub fn policer_oracle(cfg: PolicerConfig, arrivals: &[(u64, u64)]) -> Vec<PoliceOutcome> {
    let nb = Q::from_integer(cfg.normal_burst_bits as i128);
    let eb = Q::from_integer(cfg.excess_burst_bits as i128);
    let cir = Q::from_integer(cfg.cir_bps as i128);
    let mut tokens = nb;
    let mut last = 0u64;
    let mut out = Vec::with_capacity(arrivals.len());
    for &(t_ps, bits) in arrivals {
        let elapsed = Q::new((t_ps - last) as i128, 1_000_000_000_000);
        last = t_ps;
        tokens = (tokens + cir * elapsed).min(eb);
        let need = Q::from_integer(bits as i128);
        let o = if need <= tokens.min(nb) {
            PoliceOutcome::Conform
        } else if need <= tokens {
            PoliceOutcome::Exceed
        } else {
            PoliceOutcome::Violate
        };
        if o != PoliceOutcome::Violate {
            tokens -= need;
        }
        out.push(o);
    }
    out
}

/// Equally sized frames arriving back to back at `factor` times the CIR.
pub fn paced_arrivals(cfg: &PolicerConfig, bits: u64, factor: Q, count: usize) -> Vec<(u64, u64)> {
    // gap = bits / (factor * cir) seconds, floored to whole picoseconds
    let gap = Q::from_integer(bits as i128 * 1_000_000_000_000) / (factor * Q::from_integer(cfg.cir_bps as i128));
    (0..count).map(|i| ((gap * Q::from_integer(i as i128)).floor().to_integer() as u64, bits)).collect()
}

// ----------------------------------------------------------------- paths

/// Random multigraph on nodes 1..=n with dyadic base weights, so path
/// costs add exactly in any order.
pub fn random_topology(rng: &mut impl Rng, max_nodes: u32) -> Topology {
    let n = rng.gen_range(2..=max_nodes);
    let mut doc = format!("node {}\n", (1..=n).map(|i| i.to_string()).collect::<Vec<_>>().join(" "));
    let mut next_port = vec![1u16; n as usize + 1];
    let links = rng.gen_range(0..=n * 2);
    for id in 1..=links {
        let a = rng.gen_range(1..=n);
        let mut b = rng.gen_range(1..=n);
        if a == b {
            b = a % n + 1;
        }
        let w = rng.gen_range(1..=16) as f64 / 4.0;
        let (pa, pb) = (next_port[a as usize], next_port[b as usize]);
        next_port[a as usize] += 1;
        next_port[b as usize] += 1;
        doc.push_str(&format!("link {id} {a}:{pa} {b}:{pb} weight {w}\n"));
    }
    load_topology(&doc).unwrap()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OPath {
    pub cost: f64,
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

/// Every simple path from `src` to `dst`, by depth-first enumeration.
pub fn all_simple_paths(topo: &Topology, src: NodeId, dst: NodeId, weight: &dyn Fn(LinkDir) -> Option<f64>) -> Vec<OPath> {
    fn dfs(
        topo: &Topology,
        at: NodeId,
        dst: NodeId,
        weight: &dyn Fn(LinkDir) -> Option<f64>,
        cur: &mut OPath,
        out: &mut Vec<OPath>,
    ) {
        if at == dst {
            out.push(cur.clone());
            return;
        }
        for l in topo.links() {
            let (dir, next) = if l.a.node == at {
                (Dir::Forward, l.b.node)
            } else if l.b.node == at {
                (Dir::Reverse, l.a.node)
            } else {
                continue;
            };
            if cur.nodes.contains(&next) {
                continue;
            }
            let Some(w) = weight(LinkDir { link: l.id, dir }) else { continue };
            cur.nodes.push(next);
            cur.links.push(l.id);
            cur.cost += w;
            dfs(topo, next, dst, weight, cur, out);
            cur.cost -= w;
            cur.nodes.pop();
            cur.links.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = OPath { cost: 0.0, nodes: vec![src], links: vec![] };
    dfs(topo, src, dst, weight, &mut cur, &mut out);
    out
}

/// Cheapest, then fewest hops, then smallest node and link sequences.
pub fn best_path(mut paths: Vec<OPath>) -> Option<OPath> {
    paths.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then(a.links.len().cmp(&b.links.len()))
            .then_with(|| a.nodes.cmp(&b.nodes))
            .then_with(|| a.links.cmp(&b.links))
    });
    paths.into_iter().next()
}
