//! Ordered first-match packet classification.
//!
//! A rule matches when every one of its fields matches (logical AND); OR
//! needs a separate rule. Stacks are evaluated in sequence order and a frame
//! that matches nothing is denied.

mod lint;
mod policer;
mod text;

use std::net::IpAddr;
use std::ops::{BitAnd, Not};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{Frame, MacAddr, PROTO_TCP};
use crate::topology::{Endpoint, PortId};

pub use lint::{lint_specific_before_general, ShadowWarning};
pub use policer::{PoliceOutcome, Policer, PolicerConfig, PolicerError};
pub use text::{format_acl, format_rule, parse_acl};

/// Rule stacks are expected to hold well over thirty rules; this is only a
/// sanity bound against runaway configs.
pub const MAX_RULES: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AclError {
    #[error("stack `{stack}` is bound to {bound:?}, not to ingress {ingress}")]
    Binding { stack: String, bound: Option<Endpoint>, ingress: Endpoint },
    #[error("duplicate rule sequence number {0}")]
    DuplicateSeq(u32),
    #[error("no rule with sequence number {0}")]
    MissingSeq(u32),
    #[error("new order is not a permutation of the stack's sequence numbers")]
    NotPermutation,
    #[error("a bound stack must keep at least one rule")]
    EmptyBoundStack,
    #[error("rule {seq}: more than one `{kind}` field")]
    DuplicateField { seq: u32, kind: FieldKind },
    #[error("rule {seq}: {reason}")]
    InvalidRule { seq: u32, reason: String },
    #[error("stack holds more than {MAX_RULES} rules")]
    TooManyRules,
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
}

/// A value/mask pair. Mask bits set to 0 are "don't care".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Masked<T> {
    pub value: T,
    pub mask: T,
}

impl<T> Masked<T>
where
    T: Copy + Default + PartialEq + BitAnd<Output = T> + Not<Output = T>,
{
    /// Builds a canonical pair, clearing value bits outside the mask.
    pub fn new(value: T, mask: T) -> Self {
        Masked { value: value & mask, mask }
    }

    pub fn is_canonical(&self) -> bool {
        self.value & !self.mask == T::default()
    }

    pub fn matches(&self, v: T) -> bool {
        v & self.mask == self.value
    }

    /// Every value matched by `other` is matched by `self`.
    pub fn covers(&self, other: &Self) -> bool {
        self.mask & !other.mask == T::default() && other.value & self.mask == self.value
    }
}

pub const MAC_MASK_ALL: u64 = 0xffff_ffff_ffff;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpMatch {
    V4(Masked<u32>),
    V6(Masked<u128>),
}

fn prefix_mask_u32(len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len as u32)
    }
}

fn prefix_mask_u128(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - len as u32)
    }
}

impl IpMatch {
    /// Prefix match; host bits of `addr` are cleared.
    pub fn prefix(addr: IpAddr, len: u8) -> Option<IpMatch> {
        match addr {
            IpAddr::V4(a) if len <= 32 => Some(IpMatch::V4(Masked::new(u32::from(a), prefix_mask_u32(len)))),
            IpAddr::V6(a) if len <= 128 => Some(IpMatch::V6(Masked::new(u128::from(a), prefix_mask_u128(len)))),
            _ => None,
        }
    }

    pub fn with_mask(addr: IpAddr, mask: IpAddr) -> Option<IpMatch> {
        match (addr, mask) {
            (IpAddr::V4(a), IpAddr::V4(m)) => Some(IpMatch::V4(Masked { value: u32::from(a), mask: u32::from(m) })),
            (IpAddr::V6(a), IpAddr::V6(m)) => Some(IpMatch::V6(Masked { value: u128::from(a), mask: u128::from(m) })),
            _ => None,
        }
    }

    pub fn is_canonical(&self) -> bool {
        match self {
            IpMatch::V4(m) => m.is_canonical(),
            IpMatch::V6(m) => m.is_canonical(),
        }
    }

    pub fn matches(&self, addr: &IpAddr) -> bool {
        match (self, addr) {
            (IpMatch::V4(m), IpAddr::V4(a)) => m.matches(u32::from(*a)),
            (IpMatch::V6(m), IpAddr::V6(a)) => m.matches(u128::from(*a)),
            _ => false,
        }
    }

    pub fn covers(&self, other: &IpMatch) -> bool {
        match (self, other) {
            (IpMatch::V4(a), IpMatch::V4(b)) => a.covers(b),
            (IpMatch::V6(a), IpMatch::V6(b)) => a.covers(b),
            _ => false,
        }
    }

    /// Prefix length when the mask is contiguous.
    pub fn prefix_len(&self) -> Option<u8> {
        match self {
            IpMatch::V4(m) => {
                let len = m.mask.leading_ones() as u8;
                (prefix_mask_u32(len) == m.mask).then_some(len)
            }
            IpMatch::V6(m) => {
                let len = m.mask.leading_ones() as u8;
                (prefix_mask_u128(len) == m.mask).then_some(len)
            }
        }
    }
}

/// Inclusive range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub fn new(min: T, max: T) -> Self {
        Range { min, max }
    }
    pub fn single(v: T) -> Self {
        Range { min: v, max: v }
    }
    pub fn contains(&self, v: T) -> bool {
        self.min <= v && v <= self.max
    }
    pub fn covers(&self, other: &Self) -> bool {
        self.min <= other.min && other.max <= self.max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    Ethertype,
    IpProtocol,
    PacketLength,
    VlanOuter,
    VlanInner,
    SrcMac,
    DstMac,
    SrcIp,
    DstIp,
    IngressPort,
    L4SrcPort,
    L4DstPort,
    TcpControl,
    Dscp,
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchField {
    Ethertype(u16),
    IpProtocol(u8),
    PacketLength(Range<u32>),
    VlanOuter(u16),
    VlanInner(u16),
    SrcMac(Masked<u64>),
    DstMac(Masked<u64>),
    SrcIp(IpMatch),
    DstIp(IpMatch),
    IngressPort(PortId),
    L4SrcPort(Range<u16>),
    L4DstPort(Range<u16>),
    /// TCP flag bits; only TCP segments can match.
    TcpControl(Masked<u8>),
    Dscp(u8),
}

impl MatchField {
    pub fn kind(&self) -> FieldKind {
        match self {
            MatchField::Ethertype(_) => FieldKind::Ethertype,
            MatchField::IpProtocol(_) => FieldKind::IpProtocol,
            MatchField::PacketLength(_) => FieldKind::PacketLength,
            MatchField::VlanOuter(_) => FieldKind::VlanOuter,
            MatchField::VlanInner(_) => FieldKind::VlanInner,
            MatchField::SrcMac(_) => FieldKind::SrcMac,
            MatchField::DstMac(_) => FieldKind::DstMac,
            MatchField::SrcIp(_) => FieldKind::SrcIp,
            MatchField::DstIp(_) => FieldKind::DstIp,
            MatchField::IngressPort(_) => FieldKind::IngressPort,
            MatchField::L4SrcPort(_) => FieldKind::L4SrcPort,
            MatchField::L4DstPort(_) => FieldKind::L4DstPort,
            MatchField::TcpControl(_) => FieldKind::TcpControl,
            MatchField::Dscp(_) => FieldKind::Dscp,
        }
    }

    pub fn mac(value: MacAddr, mask: u64) -> Masked<u64> {
        Masked::new(value.to_u64(), mask & MAC_MASK_ALL)
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            MatchField::PacketLength(r) if r.min > r.max => Err(format!("length range {}-{} is inverted", r.min, r.max)),
            MatchField::L4SrcPort(r) | MatchField::L4DstPort(r) if r.min > r.max => {
                Err(format!("port range {}-{} is inverted", r.min, r.max))
            }
            MatchField::VlanOuter(id) | MatchField::VlanInner(id) if *id > 4095 => Err(format!("VLAN id {id} exceeds 4095")),
            MatchField::Dscp(d) if *d > 63 => Err(format!("DSCP {d} exceeds 63")),
            MatchField::SrcMac(m) | MatchField::DstMac(m) if m.mask & !MAC_MASK_ALL != 0 || !m.is_canonical() => {
                Err("MAC value has bits outside its 48-bit mask".into())
            }
            MatchField::SrcIp(m) | MatchField::DstIp(m) if !m.is_canonical() => Err("IP value has bits outside its mask".into()),
            MatchField::TcpControl(m) if !m.is_canonical() => Err("TCP flag value has bits outside its mask".into()),
            _ => Ok(()),
        }
    }

    pub fn matches(&self, frame: &Frame, ingress: PortId) -> bool {
        match self {
            MatchField::Ethertype(t) => frame.ethertype() == *t,
            MatchField::IpProtocol(p) => frame.ip().is_some_and(|ip| ip.protocol == *p),
            MatchField::PacketLength(r) => r.contains(frame.size_bytes()),
            MatchField::VlanOuter(id) => frame.vlan().is_some_and(|v| v.outer_id == *id),
            MatchField::VlanInner(id) => frame.vlan().and_then(|v| v.inner_id).is_some_and(|i| i == *id),
            MatchField::SrcMac(m) => m.matches(frame.src_mac().to_u64()),
            MatchField::DstMac(m) => m.matches(frame.dst_mac().to_u64()),
            MatchField::SrcIp(m) => frame.ip().is_some_and(|ip| m.matches(&ip.src)),
            MatchField::DstIp(m) => frame.ip().is_some_and(|ip| m.matches(&ip.dst)),
            MatchField::IngressPort(p) => ingress == *p,
            MatchField::L4SrcPort(r) => frame.l4().is_some_and(|l4| r.contains(l4.src_port)),
            MatchField::L4DstPort(r) => frame.l4().is_some_and(|l4| r.contains(l4.dst_port)),
            MatchField::TcpControl(m) => {
                frame.ip().is_some_and(|ip| ip.protocol == PROTO_TCP) && frame.l4().is_some_and(|l4| m.matches(l4.tcp_flags))
            }
            MatchField::Dscp(d) => frame.ip().is_some_and(|ip| ip.dscp == *d),
        }
    }

    /// True when every frame matched by `other` is also matched by `self`.
    /// Fields of different kinds never cover each other.
    pub fn covers(&self, other: &MatchField) -> bool {
        use MatchField::*;
        match (self, other) {
            (Ethertype(a), Ethertype(b)) => a == b,
            (IpProtocol(a), IpProtocol(b)) => a == b,
            (PacketLength(a), PacketLength(b)) => a.covers(b),
            (VlanOuter(a), VlanOuter(b)) | (VlanInner(a), VlanInner(b)) => a == b,
            (SrcMac(a), SrcMac(b)) | (DstMac(a), DstMac(b)) => a.covers(b),
            (SrcIp(a), SrcIp(b)) | (DstIp(a), DstIp(b)) => a.covers(b),
            (IngressPort(a), IngressPort(b)) => a == b,
            (L4SrcPort(a), L4SrcPort(b)) | (L4DstPort(a), L4DstPort(b)) => a.covers(b),
            (TcpControl(a), TcpControl(b)) => a.covers(b),
            (Dscp(a), Dscp(b)) => a == b,
            _ => false,
        }
    }
}

/// What a guard does once its link is over threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OnExceed {
    AlertOnly,
    Reroute,
    /// Evict queued frames below `min_protected_priority` to make room.
    DropByPriority { min_protected_priority: u8 },
}

/// Link-load threshold attached to a rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGuard {
    pub link_load_threshold: f64,
    pub on_exceed: OnExceed,
}

impl ThresholdGuard {
    pub fn new(link_load_threshold: f64, on_exceed: OnExceed) -> Result<Self, String> {
        if !(link_load_threshold > 0.0 && link_load_threshold <= 1.0) {
            return Err(format!("guard threshold {link_load_threshold} outside (0, 1]"));
        }
        if let OnExceed::DropByPriority { min_protected_priority } = on_exceed {
            if min_protected_priority > 7 {
                return Err(format!("protected priority {min_protected_priority} exceeds 7"));
            }
        }
        Ok(ThresholdGuard { link_load_threshold, on_exceed })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Permit,
    Deny,
    PermitPoliced(PolicerConfig),
    Guard(ThresholdGuard),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AclRule {
    seq: u32,
    fields: Vec<MatchField>,
    action: Action,
}

impl AclRule {
    /// Validates fields and action. Fields are kept sorted by kind.
    pub fn new(seq: u32, mut fields: Vec<MatchField>, action: Action) -> Result<AclRule, AclError> {
        fields.sort_by_key(|f| f.kind());
        for pair in fields.windows(2) {
            if pair[0].kind() == pair[1].kind() {
                return Err(AclError::DuplicateField { seq, kind: pair[0].kind() });
            }
        }
        for f in &fields {
            f.validate().map_err(|reason| AclError::InvalidRule { seq, reason })?;
        }
        match &action {
            Action::Guard(g) => {
                ThresholdGuard::new(g.link_load_threshold, g.on_exceed).map_err(|reason| AclError::InvalidRule { seq, reason })?;
            }
            Action::PermitPoliced(p) => p.validate().map_err(|reason| AclError::InvalidRule { seq, reason })?,
            _ => {}
        }
        Ok(AclRule { seq, fields, action })
    }

    pub fn seq(&self) -> u32 {
        self.seq
    }
    pub fn fields(&self) -> &[MatchField] {
        &self.fields
    }
    pub fn action(&self) -> &Action {
        &self.action
    }

    pub fn field(&self, kind: FieldKind) -> Option<&MatchField> {
        self.fields.iter().find(|f| f.kind() == kind)
    }

    pub fn matches(&self, frame: &Frame, ingress: PortId) -> bool {
        self.fields.iter().all(|f| f.matches(frame, ingress))
    }

    /// Every frame `other` matches is also matched by `self`.
    pub fn covers(&self, other: &AclRule) -> bool {
        self.fields.iter().all(|mine| other.field(mine.kind()).is_some_and(|theirs| mine.covers(theirs)))
    }

    fn with_seq(mut self, seq: u32) -> AclRule {
        self.seq = seq;
        self
    }
}

/// Guard outcome carried by a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardDecision {
    pub on_exceed: OnExceed,
    pub threshold: f64,
    pub link_load: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Permit,
    Deny,
    /// Permitted subject to the rule's policer.
    Police(PolicerConfig),
    Guard(GuardDecision),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub matched_seq: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AclStack {
    id: String,
    rules: Vec<AclRule>,
    binding: Option<Endpoint>,
}

impl AclStack {
    pub fn new(id: impl Into<String>) -> Self {
        AclStack { id: id.into(), rules: Vec::new(), binding: None }
    }

    /// Builds an unbound stack from rules in any order.
    pub fn from_rules(id: impl Into<String>, rules: Vec<AclRule>) -> Result<Self, AclError> {
        let mut stack = AclStack::new(id);
        for r in rules {
            stack.insert_rule(r)?;
        }
        Ok(stack)
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn rules(&self) -> &[AclRule] {
        &self.rules
    }
    pub fn binding(&self) -> Option<Endpoint> {
        self.binding
    }
    pub fn seqs(&self) -> Vec<u32> {
        self.rules.iter().map(|r| r.seq).collect()
    }

    pub fn bind(&mut self, ingress: Endpoint) -> Result<(), AclError> {
        if self.rules.is_empty() {
            return Err(AclError::EmptyBoundStack);
        }
        self.binding = Some(ingress);
        Ok(())
    }

    pub fn unbind(&mut self) {
        self.binding = None;
    }

    pub fn insert_rule(&mut self, rule: AclRule) -> Result<(), AclError> {
        match self.rules.binary_search_by_key(&rule.seq, |r| r.seq) {
            Ok(_) => Err(AclError::DuplicateSeq(rule.seq)),
            Err(_) if self.rules.len() >= MAX_RULES => Err(AclError::TooManyRules),
            Err(pos) => {
                self.rules.insert(pos, rule);
                Ok(())
            }
        }
    }

    pub fn delete_rule(&mut self, seq: u32) -> Result<AclRule, AclError> {
        let pos = self.rules.binary_search_by_key(&seq, |r| r.seq).map_err(|_| AclError::MissingSeq(seq))?;
        if self.binding.is_some() && self.rules.len() == 1 {
            return Err(AclError::EmptyBoundStack);
        }
        Ok(self.rules.remove(pos))
    }

    /// Rearranges rules into the order given by `new_order` (a permutation
    /// of the current sequence numbers). The existing sequence numbers are
    /// then reassigned in ascending order so stack order and seq order agree.
    pub fn reorder(&mut self, new_order: &[u32]) -> Result<(), AclError> {
        let mut sorted = new_order.to_vec();
        sorted.sort_unstable();
        if sorted != self.seqs() {
            return Err(AclError::NotPermutation);
        }
        let mut old: Vec<Option<AclRule>> = self.rules.drain(..).map(Some).collect();
        let lookup = |seq: u32| sorted.binary_search(&seq).unwrap();
        self.rules = new_order
            .iter()
            .zip(&sorted)
            .map(|(&from, &slot)| old[lookup(from)].take().unwrap().with_seq(slot))
            .collect();
        Ok(())
    }

    /// First-match evaluation without a binding check.
    pub fn evaluate(&self, frame: &Frame, ingress: PortId, link_load: f64) -> Classification {
        for rule in &self.rules {
            if rule.matches(frame, ingress) {
                let verdict = match rule.action {
                    Action::Permit => Verdict::Permit,
                    Action::Deny => Verdict::Deny,
                    Action::PermitPoliced(p) => Verdict::Police(p),
                    Action::Guard(g) if link_load > g.link_load_threshold => Verdict::Guard(GuardDecision {
                        on_exceed: g.on_exceed,
                        threshold: g.link_load_threshold,
                        link_load,
                    }),
                    Action::Guard(_) => Verdict::Permit,
                };
                return Classification { verdict, matched_seq: Some(rule.seq) };
            }
        }
        Classification { verdict: Verdict::Deny, matched_seq: None }
    }
}

/// Classifies a frame arriving on `ingress` against the stack bound there.
/// `link_load` is the measured utilization of the port's link.
pub fn classify(frame: &Frame, ingress: Endpoint, stack: &AclStack, link_load: f64) -> Result<Classification, AclError> {
    if stack.binding != Some(ingress) {
        return Err(AclError::Binding { stack: stack.id.clone(), bound: stack.binding, ingress });
    }
    Ok(stack.evaluate(frame, ingress.port, link_load))
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use super::*;
    use crate::packet::{make_frame, FrameSpec, IpHeader, L4Header, PROTO_ICMP};
    use crate::time::SimTime;

    fn icmp74() -> Frame {
        let spec = FrameSpec {
            ip: Some(IpHeader {
                src: IpAddr::V4(Ipv4Addr::new(10, 1, 2, 3)),
                dst: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 9)),
                protocol: PROTO_ICMP,
                dscp: 0,
            }),
            ..Default::default()
        };
        make_frame(&spec, 74, SimTime::ZERO).unwrap()
    }

    fn ep() -> Endpoint {
        Endpoint::new(1, 1)
    }

    fn bound(rules: Vec<AclRule>) -> AclStack {
        let mut s = AclStack::from_rules("t", rules).unwrap();
        s.bind(ep()).unwrap();
        s
    }

    #[test]
    fn no_match_is_implicit_deny() {
        let s = bound(vec![AclRule::new(10, vec![MatchField::IpProtocol(6)], Action::Permit).unwrap()]);
        let c = classify(&icmp74(), ep(), &s, 0.0).unwrap();
        assert_eq!(c, Classification { verdict: Verdict::Deny, matched_seq: None });
    }

    #[test]
    fn icmp_rule_permits() {
        let s = bound(vec![AclRule::new(10, vec![MatchField::IpProtocol(1)], Action::Permit).unwrap()]);
        let c = classify(&icmp74(), ep(), &s, 0.0).unwrap();
        assert_eq!(c, Classification { verdict: Verdict::Permit, matched_seq: Some(10) });
    }

    #[test]
    fn guard_fires_only_above_threshold() {
        let g = ThresholdGuard::new(0.9, OnExceed::Reroute).unwrap();
        let s = bound(vec![AclRule::new(10, vec![], Action::Guard(g)).unwrap()]);
        let hot = classify(&icmp74(), ep(), &s, 0.95).unwrap();
        assert!(matches!(hot.verdict, Verdict::Guard(GuardDecision { on_exceed: OnExceed::Reroute, .. })));
        assert_eq!(classify(&icmp74(), ep(), &s, 0.85).unwrap().verdict, Verdict::Permit);
        assert_eq!(classify(&icmp74(), ep(), &s, 0.9).unwrap().verdict, Verdict::Permit);
    }

    #[test]
    fn wrong_port_is_binding_error() {
        let s = bound(vec![AclRule::new(10, vec![], Action::Permit).unwrap()]);
        assert!(matches!(classify(&icmp74(), Endpoint::new(1, 2), &s, 0.0), Err(AclError::Binding { .. })));
    }

    #[test]
    fn insert_keeps_order() {
        let mut s = AclStack::new("t");
        for seq in [10, 30, 20] {
            s.insert_rule(AclRule::new(seq, vec![], Action::Permit).unwrap()).unwrap();
        }
        assert_eq!(s.seqs(), vec![10, 20, 30]);
        assert_eq!(s.insert_rule(AclRule::new(20, vec![], Action::Deny).unwrap()), Err(AclError::DuplicateSeq(20)));
    }

    #[test]
    fn delete_guards() {
        let mut s = bound(vec![AclRule::new(10, vec![], Action::Permit).unwrap()]);
        assert_eq!(s.delete_rule(10), Err(AclError::EmptyBoundStack));
        assert_eq!(s.delete_rule(11), Err(AclError::MissingSeq(11)));
        s.unbind();
        assert!(s.delete_rule(10).is_ok());
        assert_eq!(s.evaluate(&icmp74(), PortId(1), 0.0).verdict, Verdict::Deny);
        assert_eq!(s.bind(ep()), Err(AclError::EmptyBoundStack));
    }

    #[test]
    fn reorder_renumbers() {
        let mut s = AclStack::from_rules(
            "t",
            vec![
                AclRule::new(10, vec![MatchField::IpProtocol(1)], Action::Permit).unwrap(),
                AclRule::new(20, vec![], Action::Deny).unwrap(),
            ],
        )
        .unwrap();
        s.reorder(&[20, 10]).unwrap();
        assert_eq!(s.seqs(), vec![10, 20]);
        assert_eq!(s.rules()[0].action(), &Action::Deny);
        assert_eq!(s.evaluate(&icmp74(), PortId(1), 0.0).verdict, Verdict::Deny);
        assert_eq!(s.reorder(&[10]), Err(AclError::NotPermutation));
        assert_eq!(s.reorder(&[10, 10]), Err(AclError::NotPermutation));
    }

    #[test]
    fn rule_invariants() {
        assert!(matches!(
            AclRule::new(1, vec![MatchField::IpProtocol(1), MatchField::IpProtocol(6)], Action::Permit),
            Err(AclError::DuplicateField { kind: FieldKind::IpProtocol, .. })
        ));
        assert!(AclRule::new(1, vec![MatchField::L4DstPort(Range::new(9, 3))], Action::Permit).is_err());
        let raw = IpMatch::V4(Masked { value: 0x0a01_0000, mask: 0xff00_0000 });
        assert!(AclRule::new(1, vec![MatchField::SrcIp(raw)], Action::Permit).is_err());
        assert!(AclRule::new(1, vec![], Action::Guard(ThresholdGuard { link_load_threshold: 1.5, on_exceed: OnExceed::AlertOnly }))
            .is_err());
    }

    #[test]
    fn tcp_control_needs_tcp() {
        let mut spec = FrameSpec {
            ip: Some(IpHeader {
                src: IpAddr::V4(Ipv4Addr::LOCALHOST),
                dst: IpAddr::V4(Ipv4Addr::LOCALHOST),
                protocol: 17,
                dscp: 0,
            }),
            l4: Some(L4Header { src_port: 1, dst_port: 2, tcp_flags: 0x12 }),
            ..Default::default()
        };
        let field = MatchField::TcpControl(Masked::new(0x12, 0x12));
        assert!(!field.matches(&make_frame(&spec, 128, SimTime::ZERO).unwrap(), PortId(1)));
        spec.ip.as_mut().unwrap().protocol = 6;
        assert!(field.matches(&make_frame(&spec, 128, SimTime::ZERO).unwrap(), PortId(1)));
    }

    #[test]
    fn prefix_helpers() {
        let m = IpMatch::prefix(IpAddr::V4(Ipv4Addr::new(10, 1, 2, 3)), 16).unwrap();
        assert_eq!(m, IpMatch::V4(Masked { value: 0x0a01_0000, mask: 0xffff_0000 }));
        assert_eq!(m.prefix_len(), Some(16));
        let odd = IpMatch::V4(Masked { value: 0, mask: 0xff00_ff00 });
        assert_eq!(odd.prefix_len(), None);
        assert!(IpMatch::prefix(IpAddr::V4(Ipv4Addr::LOCALHOST), 33).is_none());
    }
}
