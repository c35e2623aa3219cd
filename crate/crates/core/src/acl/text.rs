//! ACL text format, one rule per line:
//!
//! ```text
//! <seq> <permit|deny|guard> [ethertype <hex>] [proto <n>] [len <min>-<max>]
//!     [vlan <id>] [ivlan <id>] [srcip <addr>/<prefix|mask>] [dstip <addr>/<prefix|mask>]
//!     [srcmac <mac>/<mask>] [dstmac <mac>/<mask>] [inport <id>] [sport <min>-<max>]
//!     [dport <min>-<max>] [tcpflags <val>/<mask>] [dscp <n>]
//!     [threshold <0.xx> action <alert|reroute|prio-drop <p>>]
//!     [police cir <bps> nb <bits> eb <bits>]
//! ```
//!
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::net::IpAddr;
use std::str::FromStr;

use super::{AclError, AclRule, Action, IpMatch, Masked, MatchField, OnExceed, PolicerConfig, Range, ThresholdGuard, MAC_MASK_ALL};
use crate::packet::MacAddr;
use crate::topology::PortId;

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: s + 1 });
    }
    out
}

struct Cursor<'a> {
    toks: Vec<Tok<'a>>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> AclError {
        AclError::Syntax { line: self.line, col, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<&Tok<'a>, AclError> {
        if self.pos >= self.toks.len() {
            return Err(self.err(self.end_col, format!("expected {what}")));
        }
        self.pos += 1;
        Ok(&self.toks[self.pos - 1])
    }

    fn value<T>(&mut self, what: &str, parse: impl FnOnce(&str) -> Option<T>) -> Result<T, AclError> {
        let (text, col) = {
            let t = self.next(what)?;
            (t.text, t.col)
        };
        parse(text).ok_or_else(|| self.err(col, format!("invalid {what} `{text}`")))
    }

    fn expect(&mut self, word: &str) -> Result<(), AclError> {
        let (text, col) = {
            let t = self.next(&format!("`{word}`"))?;
            (t.text, t.col)
        };
        if text != word {
            return Err(self.err(col, format!("expected `{word}`, found `{text}`")));
        }
        Ok(())
    }
}

fn parse_uint(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn parse_range<T: TryFrom<u64> + PartialOrd + Copy>(s: &str) -> Option<Range<T>> {
    let conv = |p: &str| parse_uint(p).and_then(|v| T::try_from(v).ok());
    let r = match s.split_once('-') {
        Some((a, b)) => Range::new(conv(a)?, conv(b)?),
        None => Range::single(conv(s)?),
    };
    (r.min <= r.max).then_some(r)
}

fn parse_ip(s: &str) -> Option<IpMatch> {
    let m = match s.split_once('/') {
        None => {
            let addr = IpAddr::from_str(s).ok()?;
            IpMatch::prefix(addr, if addr.is_ipv4() { 32 } else { 128 })?
        }
        Some((a, m)) => {
            let addr = IpAddr::from_str(a).ok()?;
            match m.parse::<u8>() {
                Ok(len) => {
                    let full = IpMatch::prefix(addr, len)?;
                    IpMatch::with_mask(addr, match full {
                        IpMatch::V4(x) => IpAddr::V4(x.mask.into()),
                        IpMatch::V6(x) => IpAddr::V6(x.mask.into()),
                    })?
                }
                Err(_) => IpMatch::with_mask(addr, IpAddr::from_str(m).ok()?)?,
            }
        }
    };
    m.is_canonical().then_some(m)
}

fn parse_mac(s: &str) -> Option<Masked<u64>> {
    let (v, m) = match s.split_once('/') {
        Some((v, m)) => (MacAddr::from_str(v).ok()?.to_u64(), MacAddr::from_str(m).ok()?.to_u64()),
        None => (MacAddr::from_str(s).ok()?.to_u64(), MAC_MASK_ALL),
    };
    let masked = Masked { value: v, mask: m };
    masked.is_canonical().then_some(masked)
}

fn parse_flags(s: &str) -> Option<Masked<u8>> {
    let (v, m) = s.split_once('/')?;
    let v = u8::try_from(parse_uint(v)?).ok()?;
    let m = u8::try_from(parse_uint(m)?).ok()?;
    let masked = Masked { value: v, mask: m };
    masked.is_canonical().then_some(masked)
}

fn parse_line(line_no: usize, line: &str) -> Result<Option<AclRule>, AclError> {
    let content = line.split('#').next().unwrap_or("");
    let toks = tokenize(content);
    if toks.is_empty() {
        return Ok(None);
    }
    let mut cur = Cursor { end_col: content.trim_end().len() + 1, toks, pos: 0, line: line_no };

    let seq: u32 = cur.value("sequence number", |s| s.parse().ok())?;
    let (kind, kind_col) = {
        let t = cur.next("action")?;
        (t.text, t.col)
    };
    if !matches!(kind, "permit" | "deny" | "guard") {
        return Err(cur.err(kind_col, format!("unknown action `{kind}` (expected permit, deny or guard)")));
    }

    let mut fields = Vec::new();
    let mut guard = None;
    let mut police = None;
    while cur.pos < cur.toks.len() {
        let (key, col) = {
            let t = cur.next("field")?;
            (t.text, t.col)
        };
        let field = match key {
            "ethertype" => MatchField::Ethertype(cur.value("ethertype", |s| {
                let hex = s.strip_prefix("0x").unwrap_or(s);
                u16::from_str_radix(hex, 16).ok()
            })?),
            "proto" => MatchField::IpProtocol(cur.value("protocol", |s| s.parse().ok())?),
            "len" => MatchField::PacketLength(cur.value("length range", parse_range)?),
            "vlan" => MatchField::VlanOuter(cur.value("VLAN id", |s| s.parse().ok().filter(|&v: &u16| v <= 4095))?),
            "ivlan" => MatchField::VlanInner(cur.value("VLAN id", |s| s.parse().ok().filter(|&v: &u16| v <= 4095))?),
            "srcip" => MatchField::SrcIp(cur.value("address/prefix", parse_ip)?),
            "dstip" => MatchField::DstIp(cur.value("address/prefix", parse_ip)?),
            "srcmac" => MatchField::SrcMac(cur.value("MAC/mask", parse_mac)?),
            "dstmac" => MatchField::DstMac(cur.value("MAC/mask", parse_mac)?),
            "inport" => MatchField::IngressPort(PortId(cur.value("port id", |s| s.parse().ok())?)),
            "sport" => MatchField::L4SrcPort(cur.value("port range", parse_range)?),
            "dport" => MatchField::L4DstPort(cur.value("port range", parse_range)?),
            "tcpflags" => MatchField::TcpControl(cur.value("flags/mask", parse_flags)?),
            "dscp" => MatchField::Dscp(cur.value("DSCP", |s| s.parse().ok().filter(|&v: &u8| v <= 63))?),
            "threshold" => {
                if kind != "guard" {
                    return Err(cur.err(col, "`threshold` is only valid on guard rules"));
                }
                let threshold: f64 = cur.value("threshold", |s| s.parse().ok().filter(|v: &f64| *v > 0.0 && *v <= 1.0))?;
                cur.expect("action")?;
                let (act, act_col) = {
                    let t = cur.next("guard action")?;
                    (t.text, t.col)
                };
                let on_exceed = match act {
                    "alert" => OnExceed::AlertOnly,
                    "reroute" => OnExceed::Reroute,
                    "prio-drop" => OnExceed::DropByPriority {
                        min_protected_priority: cur.value("priority", |s| s.parse().ok().filter(|&p: &u8| p <= 7))?,
                    },
                    other => return Err(cur.err(act_col, format!("unknown guard action `{other}`"))),
                };
                guard = Some(ThresholdGuard { link_load_threshold: threshold, on_exceed });
                continue;
            }
            "police" => {
                if kind != "permit" {
                    return Err(cur.err(col, "`police` is only valid on permit rules"));
                }
                cur.expect("cir")?;
                let cir_bps = cur.value("rate", parse_uint)?;
                cur.expect("nb")?;
                let normal_burst_bits = cur.value("burst", parse_uint)?;
                cur.expect("eb")?;
                let excess_burst_bits = cur.value("burst", parse_uint)?;
                let cfg = PolicerConfig { cir_bps, normal_burst_bits, excess_burst_bits };
                cfg.validate().map_err(|m| cur.err(col, m))?;
                police = Some(cfg);
                continue;
            }
            other => return Err(cur.err(col, format!("unknown field `{other}`"))),
        };
        if fields.iter().any(|f: &MatchField| f.kind() == field.kind()) {
            return Err(cur.err(col, format!("field `{key}` given twice; use a separate rule for OR")));
        }
        fields.push(field);
    }

    let action = match (kind, guard, police) {
        ("guard", Some(g), _) => Action::Guard(g),
        ("guard", None, _) => return Err(cur.err(kind_col, "guard rule needs `threshold <t> action <...>`")),
        ("permit", _, Some(p)) => Action::PermitPoliced(p),
        ("permit", _, None) => Action::Permit,
        _ => Action::Deny,
    };
    AclRule::new(seq, fields, action).map(Some).map_err(|e| cur.err(1, e.to_string()))
}

/// Parses an ACL file into rules, in file order.
pub fn parse_acl(text: &str) -> Result<Vec<AclRule>, AclError> {
    let mut rules: Vec<AclRule> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rule) = parse_line(i + 1, line)? {
            if rules.iter().any(|r| r.seq() == rule.seq()) {
                return Err(AclError::Syntax { line: i + 1, col: 1, message: format!("duplicate sequence number {}", rule.seq()) });
            }
            rules.push(rule);
        }
    }
    Ok(rules)
}

fn write_range<T: std::fmt::Display + PartialEq>(out: &mut String, key: &str, r: &Range<T>) {
    if r.min == r.max {
        let _ = write!(out, " {key} {}", r.min);
    } else {
        let _ = write!(out, " {key} {}-{}", r.min, r.max);
    }
}

fn write_ip(out: &mut String, key: &str, m: &IpMatch) {
    let (addr, mask) = match m {
        IpMatch::V4(x) => (IpAddr::V4(x.value.into()), IpAddr::V4(x.mask.into())),
        IpMatch::V6(x) => (IpAddr::V6(x.value.into()), IpAddr::V6(x.mask.into())),
    };
    match m.prefix_len() {
        Some(len) => {
            let _ = write!(out, " {key} {addr}/{len}");
        }
        None => {
            let _ = write!(out, " {key} {addr}/{mask}");
        }
    }
}

/// Canonical single-line form of a rule.
pub fn format_rule(rule: &AclRule) -> String {
    let mut out = format!("{}", rule.seq());
    out.push_str(match rule.action() {
        Action::Permit | Action::PermitPoliced(_) => " permit",
        Action::Deny => " deny",
        Action::Guard(_) => " guard",
    });
    for f in rule.fields() {
        match f {
            MatchField::Ethertype(t) => {
                let _ = write!(out, " ethertype 0x{t:04x}");
            }
            MatchField::IpProtocol(p) => {
                let _ = write!(out, " proto {p}");
            }
            MatchField::PacketLength(r) => write_range(&mut out, "len", r),
            MatchField::VlanOuter(v) => {
                let _ = write!(out, " vlan {v}");
            }
            MatchField::VlanInner(v) => {
                let _ = write!(out, " ivlan {v}");
            }
            MatchField::SrcIp(m) => write_ip(&mut out, "srcip", m),
            MatchField::DstIp(m) => write_ip(&mut out, "dstip", m),
            MatchField::SrcMac(m) | MatchField::DstMac(m) => {
                let key = if matches!(f, MatchField::SrcMac(_)) { "srcmac" } else { "dstmac" };
                let _ = write!(out, " {key} {}/{}", MacAddr::from_u64(m.value), MacAddr::from_u64(m.mask));
            }
            MatchField::IngressPort(p) => {
                let _ = write!(out, " inport {p}");
            }
            MatchField::L4SrcPort(r) => write_range(&mut out, "sport", r),
            MatchField::L4DstPort(r) => write_range(&mut out, "dport", r),
            MatchField::TcpControl(m) => {
                let _ = write!(out, " tcpflags 0x{:02x}/0x{:02x}", m.value, m.mask);
            }
            MatchField::Dscp(d) => {
                let _ = write!(out, " dscp {d}");
            }
        }
    }
    match rule.action() {
        Action::Guard(g) => {
            let _ = write!(out, " threshold {} action ", g.link_load_threshold);
            match g.on_exceed {
                OnExceed::AlertOnly => out.push_str("alert"),
                OnExceed::Reroute => out.push_str("reroute"),
                OnExceed::DropByPriority { min_protected_priority } => {
                    let _ = write!(out, "prio-drop {min_protected_priority}");
                }
            }
        }
        Action::PermitPoliced(p) => {
            let _ = write!(out, " police cir {} nb {} eb {}", p.cir_bps, p.normal_burst_bits, p.excess_burst_bits);
        }
        _ => {}
    }
    out
}

pub fn format_acl(rules: &[AclRule]) -> String {
    rules.iter().map(|r| format_rule(r) + "\n").collect()
}
