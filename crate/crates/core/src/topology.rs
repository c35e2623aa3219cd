//! Node / port / link graph.
//!
//! Document format, one statement per line (`#` starts a comment):
//!
//! ```text
//! node <id> [<id> ...]
//! link <id> <node>:<port> <node>:<port> [rate <bps>] [weight <w>] [delay <secs>]
//! subnet <name> <link-id> [<link-id> ...]
//! ```
//!
//! Rates accept `K`/`M`/`G` suffixes. Port 0 on every node is reserved for
//! locally attached traffic generators and cannot carry a link.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub const DEFAULT_RATE_BPS: u64 = 1_000_000_000;
pub const HOST_PORT: PortId = PortId(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A port on a specific node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: PortId,
}

impl Endpoint {
    pub fn new(node: u32, port: u16) -> Self {
        Endpoint { node: NodeId(node), port: PortId(port) }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.port)
    }
}

/// Direction of travel on a full-duplex link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dir {
    /// From endpoint `a` to endpoint `b`.
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkDir {
    pub link: LinkId,
    pub dir: Dir,
}

impl fmt::Display for LinkDir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.dir {
            Dir::Forward => "fwd",
            Dir::Reverse => "rev",
        };
        write!(f, "{}:{}", self.link, d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: Endpoint,
    pub b: Endpoint,
    pub rate_bps: u64,
    pub base_weight: f64,
    pub delay: SimTime,
}

impl Link {
    pub fn dir_from(&self, node: NodeId) -> Option<Dir> {
        if self.a.node == node {
            Some(Dir::Forward)
        } else if self.b.node == node {
            Some(Dir::Reverse)
        } else {
            None
        }
    }

    pub fn peer(&self, node: NodeId) -> Option<NodeId> {
        match self.dir_from(node)? {
            Dir::Forward => Some(self.b.node),
            Dir::Reverse => Some(self.a.node),
        }
    }

    /// Transmitting and receiving endpoints for a direction.
    pub fn ends(&self, dir: Dir) -> (Endpoint, Endpoint) {
        match dir {
            Dir::Forward => (self.a, self.b),
            Dir::Reverse => (self.b, self.a),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("unknown topology preset `{0}`")]
    UnknownPreset(String),
}

fn schema(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Schema { line, message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Topology {
    nodes: Vec<NodeId>,
    links: Vec<Link>,
    link_index: BTreeMap<LinkId, usize>,
    port_link: BTreeMap<Endpoint, LinkId>,
    subnetworks: BTreeMap<String, Vec<LinkId>>,
}

impl Topology {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn subnetworks(&self) -> &BTreeMap<String, Vec<LinkId>> {
        &self.subnetworks
    }

    pub fn has_node(&self, node: NodeId) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn link(&self, id: LinkId) -> Result<&Link, TopologyError> {
        self.link_index.get(&id).map(|&i| &self.links[i]).ok_or(TopologyError::UnknownLink(id))
    }

    /// Dense position of a link, stable for a loaded topology.
    pub fn link_pos(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    /// Dense index over link directions: `2 * link_pos + dir`.
    pub fn dir_index(&self, ld: LinkDir) -> Option<usize> {
        let pos = self.link_pos(ld.link)?;
        Some(2 * pos + matches!(ld.dir, Dir::Reverse) as usize)
    }

    pub fn dir_count(&self) -> usize {
        2 * self.links.len()
    }

    pub fn link_dir_at(&self, index: usize) -> LinkDir {
        let link = self.links[index / 2].id;
        let dir = if index.is_multiple_of(2) { Dir::Forward } else { Dir::Reverse };
        LinkDir { link, dir }
    }

    /// Link attached to a port, if any.
    pub fn link_at(&self, ep: Endpoint) -> Option<LinkId> {
        self.port_link.get(&ep).copied()
    }

    /// Ports of a node that carry links, ascending.
    pub fn ports(&self, node: NodeId) -> Vec<PortId> {
        self.port_link.range(Endpoint { node, port: PortId(0) }..=Endpoint { node, port: PortId(u16::MAX) }).map(|(ep, _)| ep.port).collect()
    }

    /// Adjacent links and the node on the other side, by ascending link id.
    pub fn neighbors(&self, node: NodeId) -> Result<Vec<(LinkId, NodeId)>, TopologyError> {
        if !self.has_node(node) {
            return Err(TopologyError::UnknownNode(node));
        }
        Ok(self.links.iter().filter_map(|l| l.peer(node).map(|p| (l.id, p))).collect())
    }

    /// Direction of travel when leaving `from` over `link`.
    pub fn hop(&self, link: LinkId, from: NodeId) -> Option<LinkDir> {
        let dir = self.link(link).ok()?.dir_from(from)?;
        Some(LinkDir { link, dir })
    }

    /// Whether `dst` can be reached from `src`.
    pub fn connected(&self, src: NodeId, dst: NodeId) -> bool {
        if !self.has_node(src) || !self.has_node(dst) {
            return false;
        }
        let mut seen = BTreeSet::from([src]);
        let mut stack = vec![src];
        while let Some(n) = stack.pop() {
            if n == dst {
                return true;
            }
            for l in &self.links {
                if let Some(p) = l.peer(n) {
                    if seen.insert(p) {
                        stack.push(p);
                    }
                }
            }
        }
        false
    }

    /// Canonical document text; `load_topology` of the result reproduces `self`.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "node {n}");
        }
        for l in &self.links {
            let _ = write!(out, "link {} {} {} rate {} weight {}", l.id, l.a, l.b, l.rate_bps, l.base_weight);
            if l.delay > SimTime::ZERO {
                let _ = write!(out, " delay {}", l.delay.as_secs());
            }
            out.push('\n');
        }
        for (name, members) in &self.subnetworks {
            let _ = write!(out, "subnet {name}");
            for m in members {
                let _ = write!(out, " {m}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_rate(s: &str) -> Option<u64> {
    let (num, mult) = match s.chars().last()? {
        'k' | 'K' => (&s[..s.len() - 1], 1_000.0),
        'm' | 'M' => (&s[..s.len() - 1], 1_000_000.0),
        'g' | 'G' => (&s[..s.len() - 1], 1_000_000_000.0),
        _ => (s, 1.0),
    };
    let v: f64 = num.parse().ok()?;
    let bps = (v * mult).round();
    (bps.is_finite() && bps >= 1.0).then_some(bps as u64)
}

fn parse_endpoint(s: &str, line: usize) -> Result<Endpoint, TopologyError> {
    let (n, p) = s.split_once(':').ok_or_else(|| schema(line, format!("endpoint `{s}` is not <node>:<port>")))?;
    let node = n.parse().map_err(|_| schema(line, format!("bad node id in `{s}`")))?;
    let port = p.parse().map_err(|_| schema(line, format!("bad port id in `{s}`")))?;
    Ok(Endpoint::new(node, port))
}

/// Parses a topology document and checks every structural invariant.
pub fn load_topology(document: &str) -> Result<Topology, TopologyError> {
    let mut nodes = BTreeSet::new();
    let mut links: Vec<(usize, Link)> = Vec::new();
    let mut subnets: Vec<(usize, String, Vec<LinkId>)> = Vec::new();

    for (i, raw) in document.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks[0] {
            "node" => {
                if toks.len() < 2 {
                    return Err(schema(line, "`node` needs at least one id"));
                }
                for t in &toks[1..] {
                    let id: u32 = t.parse().map_err(|_| schema(line, format!("bad node id `{t}`")))?;
                    if !nodes.insert(NodeId(id)) {
                        return Err(schema(line, format!("node {id} declared twice")));
                    }
                }
            }
            "link" => {
                if toks.len() < 4 {
                    return Err(schema(line, "`link` needs <id> <node>:<port> <node>:<port>"));
                }
                let id: u32 = toks[1].parse().map_err(|_| schema(line, format!("bad link id `{}`", toks[1])))?;
                let a = parse_endpoint(toks[2], line)?;
                let b = parse_endpoint(toks[3], line)?;
                let mut link = Link { id: LinkId(id), a, b, rate_bps: DEFAULT_RATE_BPS, base_weight: 1.0, delay: SimTime::ZERO };
                let mut rest = toks[4..].iter();
                while let Some(&key) = rest.next() {
                    let val = rest.next().ok_or_else(|| schema(line, format!("`{key}` needs a value")))?;
                    match key {
                        "rate" => link.rate_bps = parse_rate(val).ok_or_else(|| schema(line, format!("bad rate `{val}`")))?,
                        "weight" => {
                            link.base_weight = val.parse().map_err(|_| schema(line, format!("bad weight `{val}`")))?;
                            if !(link.base_weight > 0.0 && link.base_weight.is_finite()) {
                                return Err(schema(line, "weight must be positive"));
                            }
                        }
                        "delay" => {
                            let secs: f64 = val.parse().map_err(|_| schema(line, format!("bad delay `{val}`")))?;
                            if !(secs >= 0.0) {
                                return Err(schema(line, "delay must be non-negative"));
                            }
                            link.delay = SimTime::from_secs(secs);
                        }
                        other => return Err(schema(line, format!("unknown link attribute `{other}`"))),
                    }
                }
                links.push((line, link));
            }
            "subnet" => {
                if toks.len() < 3 {
                    return Err(schema(line, "`subnet` needs a name and at least one link"));
                }
                let members = toks[2..]
                    .iter()
                    .map(|t| t.parse().map(LinkId).map_err(|_| schema(line, format!("bad link id `{t}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                subnets.push((line, toks[1].to_string(), members));
            }
            other => return Err(schema(line, format!("unknown statement `{other}`"))),
        }
    }

    let mut topo = Topology { nodes: nodes.iter().copied().collect(), ..Default::default() };
    links.sort_by_key(|(_, l)| l.id);
    for (line, link) in links {
        if topo.link_index.contains_key(&link.id) {
            return Err(schema(line, format!("link {} declared twice", link.id)));
        }
        for ep in [link.a, link.b] {
            if !nodes.contains(&ep.node) {
                return Err(schema(line, format!("link {} endpoint {ep} references undeclared node", link.id)));
            }
            if ep.port == HOST_PORT {
                return Err(schema(line, format!("link {} uses reserved port 0 at node {}", link.id, ep.node)));
            }
            if let Some(other) = topo.port_link.get(&ep) {
                return Err(schema(line, format!("port {ep} already used by link {other}")));
            }
        }
        if link.a.node == link.b.node {
            return Err(schema(line, format!("link {} joins node {} to itself", link.id, link.a.node)));
        }
        topo.port_link.insert(link.a, link.id);
        topo.port_link.insert(link.b, link.id);
        topo.link_index.insert(link.id, topo.links.len());
        topo.links.push(link);
    }
    for (line, name, members) in subnets {
        for m in &members {
            if !topo.link_index.contains_key(m) {
                return Err(schema(line, format!("subnet `{name}` references unknown link {m}")));
            }
        }
        if topo.subnetworks.insert(name.clone(), members).is_some() {
            return Err(schema(line, format!("subnet `{name}` declared twice")));
        }
    }
    Ok(topo)
}

/// Ten routers and eighteen links. Nodes 1 and 10 host the main traffic
/// generators/receivers; nodes 3 and 5 inject cross-traffic.
///
/// Primary route 1-2-4-7-10 (links 1..4). Disjoint alternates exist via
/// 1-3-5-9-10 and 1-6-8-9-10. Cross flows 3->4 and 5->7 ride links 2 and 3.
pub const PAPER10: &str = "\
node 1 2 3 4 5 6 7 8 9 10
link 1 1:1 2:1
link 2 2:2 4:1
link 3 4:2 7:1
link 4 7:2 10:1
link 5 1:2 6:1
link 6 6:2 8:1
link 7 8:2 9:1
link 8 9:2 10:2
link 9 2:3 3:1
link 10 4:3 5:1
link 11 3:2 5:2
link 12 3:3 6:3
link 13 5:3 8:3
link 14 2:4 6:4
link 15 4:4 8:4
link 16 7:3 9:3
link 17 1:3 3:4
link 18 5:4 9:4
subnet core 1 2 3 4
subnet edge 5 6 7 8
";

/// Generator at node 1, receiver at node 4, primary via node 2 and an idle
/// alternate via node 3. Node 5 feeds cross-traffic onto link 2.
pub const TWOPATH: &str = "\
node 1 2 3 4 5
link 1 1:1 2:1
link 2 2:2 4:1
link 3 1:2 3:1
link 4 3:2 4:2
link 5 5:1 2:3
subnet primary 1 2
subnet alternate 3 4
";

/// `twopath` plus node 6 loading the alternate path as well.
pub const TWOPATH_BUSY: &str = "\
node 1 2 3 4 5 6
link 1 1:1 2:1
link 2 2:2 4:1
link 3 1:2 3:1
link 4 3:2 4:2
link 5 5:1 2:3
link 6 6:1 3:3
subnet primary 1 2
subnet alternate 3 4
";

/// Three nodes in a line.
pub const LINE3: &str = "\
node 1 2 3
link 1 1:1 2:1
link 2 2:2 3:1
";

/// Two nodes, one link.
pub const SINGLE: &str = "\
node 1 2
link 1 1:1 2:1
";

pub fn preset_document(name: &str) -> Result<&'static str, TopologyError> {
    match name {
        "paper10" => Ok(PAPER10),
        "twopath" => Ok(TWOPATH),
        "twopath-busy" => Ok(TWOPATH_BUSY),
        "line3" => Ok(LINE3),
        "single" => Ok(SINGLE),
        other => Err(TopologyError::UnknownPreset(other.to_string())),
    }
}

pub fn preset(name: &str) -> Result<Topology, TopologyError> {
    load_topology(preset_document(name)?)
}
