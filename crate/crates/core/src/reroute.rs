//! Deterministic shortest paths, congestion-avoiding reroutes and the
//! priority-drop fallback.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{LinkDir, LinkId, NodeId, Topology};

/// Utilization is clamped here before penalizing a link's weight.
pub const UTIL_CLAMP: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerouteError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("link {link} has non-positive weight {weight}")]
    BadWeight { link: LinkDir, weight: f64 },
    #[error("load vector has {got} entries, topology has {want} link directions")]
    LoadShape { got: usize, want: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub cost: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    /// Link directions in travel order.
    pub fn dirs(&self, topology: &Topology) -> Vec<LinkDir> {
        self.links
            .iter()
            .zip(&self.nodes)
            .map(|(l, n)| topology.hop(*l, *n).expect("path links join their nodes"))
            .collect()
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = self.nodes.clone();
        seen.sort();
        seen.dedup();
        seen.len() == self.nodes.len()
    }

    pub fn same_route(&self, other: &Path) -> bool {
        self.links == other.links && self.nodes == other.nodes
    }
}

/// Orders candidate paths: cost, then hop count, then node sequence, then
/// link sequence (parallel links).
pub fn path_order(a: &Path, b: &Path) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.links.len().cmp(&b.links.len()))
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| a.links.cmp(&b.links))
}

/// Single-pair shortest path. `weight` gives the cost of leaving a node over
/// a link direction, or `None` to exclude it. Returns `Ok(None)` when `dst`
/// is unreachable.
pub fn shortest_path<W>(topology: &Topology, src: NodeId, dst: NodeId, weight: W) -> Result<Option<Path>, RerouteError>
where
    W: Fn(LinkDir) -> Option<f64>,
{
    for n in [src, dst] {
        if !topology.has_node(n) {
            return Err(RerouteError::UnknownNode(n));
        }
    }
    if src == dst {
        return Err(RerouteError::SameEndpoints(src));
    }

    let nodes = topology.nodes();
    let pos = |n: NodeId| nodes.binary_search(&n).unwrap();
    let mut best: Vec<Option<Path>> = vec![None; nodes.len()];
    let mut done = vec![false; nodes.len()];
    best[pos(src)] = Some(Path { nodes: vec![src], links: vec![], cost: 0.0 });

    loop {
        let mut pick: Option<usize> = None;
        for i in 0..nodes.len() {
            if done[i] {
                continue;
            }
            if let Some(p) = &best[i] {
                if pick.is_none_or(|j| path_order(p, best[j].as_ref().unwrap()) == Ordering::Less) {
                    pick = Some(i);
                }
            }
        }
        let Some(u) = pick else { return Ok(None) };
        done[u] = true;
        let here = best[u].clone().unwrap();
        if nodes[u] == dst {
            return Ok(Some(here));
        }
        for l in topology.links() {
            let Some(peer) = l.peer(nodes[u]) else { continue };
            let v = pos(peer);
            if done[v] {
                continue;
            }
            let ld = LinkDir { link: l.id, dir: l.dir_from(nodes[u]).unwrap() };
            let Some(w) = weight(ld) else { continue };
            if !(w > 0.0 && w.is_finite()) {
                return Err(RerouteError::BadWeight { link: ld, weight: w });
            }
            let mut cand = here.clone();
            cand.nodes.push(peer);
            cand.links.push(l.id);
            cand.cost += w;
            if best[v].as_ref().is_none_or(|b| path_order(&cand, b) == Ordering::Less) {
                best[v] = Some(cand);
            }
        }
    }
}

/// Shortest path on base weights alone.
pub fn static_path(topology: &Topology, src: NodeId, dst: NodeId) -> Result<Option<Path>, RerouteError> {
    shortest_path(topology, src, dst, |ld| topology.link(ld.link).ok().map(|l| l.base_weight))
}

/// Weight of a link direction under load, or `None` when it is over threshold.
pub fn loaded_weight(base: f64, util: f64, threshold: f64) -> Option<f64> {
    if util > threshold {
        None
    } else {
        Some(base / (1.0 - util.clamp(0.0, UTIL_CLAMP)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub original: Path,
    pub current: Path,
    pub epoch: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RerouteOutcome {
    NewPath(Path),
    NoAlternative,
}

/// Current path per (source, destination) pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RouteTable {
    routes: BTreeMap<(NodeId, NodeId), RouteEntry>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs the static shortest path for a pair if none is stored.
    /// Returns `Ok(None)` if the pair is disconnected.
    pub fn ensure(&mut self, topology: &Topology, src: NodeId, dst: NodeId) -> Result<Option<&RouteEntry>, RerouteError> {
        if let Entry::Vacant(slot) = self.routes.entry((src, dst)) {
            let Some(p) = static_path(topology, src, dst)? else { return Ok(None) };
            slot.insert(RouteEntry { original: p.clone(), current: p, epoch: 0 });
        }
        Ok(self.routes.get(&(src, dst)))
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> Option<&RouteEntry> {
        self.routes.get(&(src, dst))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &RouteEntry)> {
        self.routes.iter()
    }

    /// Puts a pair back on its original path. Returns the path it left, if
    /// it was elsewhere.
    pub fn restore(&mut self, src: NodeId, dst: NodeId) -> Option<Path> {
        let e = self.routes.get_mut(&(src, dst))?;
        if e.current.same_route(&e.original) {
            return None;
        }
        let old = std::mem::replace(&mut e.current, e.original.clone());
        e.epoch += 1;
        Some(old)
    }
}

/// Recomputes a pair's path over the links at or below `threshold`, with
/// weights penalized by load. `loads` is indexed by the topology's dense
/// link-direction index. The epoch advances only when the path changes.
pub fn reroute(
    table: &mut RouteTable,
    topology: &Topology,
    src: NodeId,
    dst: NodeId,
    loads: &[f64],
    threshold: f64,
) -> Result<RerouteOutcome, RerouteError> {
    if loads.len() != topology.dir_count() {
        return Err(RerouteError::LoadShape { got: loads.len(), want: topology.dir_count() });
    }
    if table.ensure(topology, src, dst)?.is_none() {
        return Ok(RerouteOutcome::NoAlternative);
    }
    let weight = |ld: LinkDir| {
        let i = topology.dir_index(ld)?;
        let base = topology.link(ld.link).ok()?.base_weight;
        loaded_weight(base, loads[i], threshold)
    };
    let Some(path) = shortest_path(topology, src, dst, weight)? else {
        return Ok(RerouteOutcome::NoAlternative);
    };
    debug_assert!(path.dirs(topology).iter().all(|d| loads[topology.dir_index(*d).unwrap()] <= threshold));
    let entry = table.routes.get_mut(&(src, dst)).unwrap();
    if !entry.current.same_route(&path) {
        entry.current = path.clone();
        entry.epoch += 1;
    }
    Ok(RerouteOutcome::NewPath(path))
}

/// A queued frame as seen by the priority-drop decision, in FIFO order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueuedFrame {
    pub frame_id: u64,
    pub priority: u8,
    pub bits: u64,
}

/// Frames to evict so that at least `needed_bits` are freed, taking the
/// lowest priority first and the oldest among equals. Frames at or above
/// `min_protected_priority` are never chosen.
pub fn priority_drop_decision(queue: &[QueuedFrame], needed_bits: u64, min_protected_priority: u8) -> Vec<u64> {
    let mut candidates: Vec<(u8, usize)> = queue
        .iter()
        .enumerate()
        .filter(|(_, f)| f.priority < min_protected_priority)
        .map(|(i, f)| (f.priority, i))
        .collect();
    candidates.sort_unstable();
    let mut freed = 0u64;
    let mut out = Vec::new();
    for (_, i) in candidates {
        if freed >= needed_bits {
            break;
        }
        freed += queue[i].bits;
        out.push(queue[i].frame_id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{load_topology, preset};

    #[test]
    fn single_link() {
        let t = preset("single").unwrap();
        let p = static_path(&t, NodeId(1), NodeId(2)).unwrap().unwrap();
        assert_eq!(p.links, vec![LinkId(1)]);
        assert_eq!(p.nodes, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn triangle_prefers_two_cheap_hops() {
        let t = load_topology("node 1 2 3\nlink 1 1:1 2:1 weight 1\nlink 2 2:2 3:1 weight 1\nlink 3 1:2 3:2 weight 3\n").unwrap();
        let p = static_path(&t, NodeId(1), NodeId(3)).unwrap().unwrap();
        assert_eq!(p.links, vec![LinkId(1), LinkId(2)]);
        assert_eq!(p.cost, 2.0);
    }

    #[test]
    fn ties_go_to_fewer_hops_then_smaller_nodes() {
        let t = load_topology("node 1 2 3 4\nlink 1 1:1 2:1 weight 1\nlink 2 2:2 4:1 weight 1\nlink 3 1:2 3:1\nlink 4 3:2 4:2\nlink 5 1:3 4:3 weight 2\n").unwrap();
        let p = static_path(&t, NodeId(1), NodeId(4)).unwrap().unwrap();
        assert_eq!(p.links, vec![LinkId(5)]);
        let t = load_topology("node 1 2 3 4\nlink 1 1:1 3:1\nlink 2 3:2 4:1\nlink 3 1:2 2:1\nlink 4 2:2 4:2\n").unwrap();
        let p = static_path(&t, NodeId(1), NodeId(4)).unwrap().unwrap();
        assert_eq!(p.nodes, vec![NodeId(1), NodeId(2), NodeId(4)]);
    }

    #[test]
    fn unreachable_and_errors() {
        let t = load_topology("node 1 2 3\nlink 1 1:1 2:1\n").unwrap();
        assert_eq!(static_path(&t, NodeId(1), NodeId(3)).unwrap(), None);
        assert_eq!(static_path(&t, NodeId(1), NodeId(1)), Err(RerouteError::SameEndpoints(NodeId(1))));
        assert_eq!(static_path(&t, NodeId(1), NodeId(9)), Err(RerouteError::UnknownNode(NodeId(9))));
        assert!(matches!(shortest_path(&t, NodeId(1), NodeId(2), |_| Some(0.0)), Err(RerouteError::BadWeight { .. })));
    }

    #[test]
    fn reroute_avoids_hot_path() {
        let t = preset("twopath").unwrap();
        let mut table = RouteTable::new();
        let orig = table.ensure(&t, NodeId(1), NodeId(4)).unwrap().unwrap().current.clone();
        assert_eq!(orig.nodes, vec![NodeId(1), NodeId(2), NodeId(4)]);
        let mut loads = vec![0.0; t.dir_count()];
        let hot = t.dir_index(t.hop(LinkId(2), NodeId(2)).unwrap()).unwrap();
        loads[hot] = 0.95;
        let out = reroute(&mut table, &t, NodeId(1), NodeId(4), &loads, 0.9).unwrap();
        let RerouteOutcome::NewPath(p) = out else { panic!("expected a path") };
        assert_eq!(p.nodes, vec![NodeId(1), NodeId(3), NodeId(4)]);
        assert_eq!(table.get(NodeId(1), NodeId(4)).unwrap().epoch, 1);

        // Recomputing the same answer leaves the epoch alone.
        reroute(&mut table, &t, NodeId(1), NodeId(4), &loads, 0.9).unwrap();
        assert_eq!(table.get(NodeId(1), NodeId(4)).unwrap().epoch, 1);

        let back = table.restore(NodeId(1), NodeId(4)).unwrap();
        assert_eq!(back.nodes, p.nodes);
        assert_eq!(table.get(NodeId(1), NodeId(4)).unwrap().epoch, 2);
        assert_eq!(table.restore(NodeId(1), NodeId(4)), None);
    }

    #[test]
    fn reverse_direction_load_does_not_prune() {
        let t = preset("twopath").unwrap();
        let mut table = RouteTable::new();
        let mut loads = vec![0.0; t.dir_count()];
        loads[t.dir_index(t.hop(LinkId(2), NodeId(4)).unwrap()).unwrap()] = 1.0;
        let RerouteOutcome::NewPath(p) = reroute(&mut table, &t, NodeId(1), NodeId(4), &loads, 0.9).unwrap() else { panic!() };
        assert_eq!(p.links, vec![LinkId(1), LinkId(2)]);
    }

    #[test]
    fn everything_hot_means_no_alternative() {
        let t = preset("twopath").unwrap();
        let mut table = RouteTable::new();
        let loads = vec![0.95; t.dir_count()];
        assert_eq!(reroute(&mut table, &t, NodeId(1), NodeId(4), &loads, 0.9).unwrap(), RerouteOutcome::NoAlternative);
        assert_eq!(table.get(NodeId(1), NodeId(4)).unwrap().epoch, 0);
        assert!(reroute(&mut table, &t, NodeId(1), NodeId(4), &[0.0], 0.9).is_err());
    }

    fn q(id: u64, priority: u8) -> QueuedFrame {
        QueuedFrame { frame_id: id, priority, bits: 4256 }
    }

    #[test]
    fn drops_lowest_priority() {
        assert_eq!(priority_drop_decision(&[q(1, 0), q(2, 5)], 1, 8), vec![1]);
        assert_eq!(priority_drop_decision(&[q(1, 5), q(2, 0)], 1, 8), vec![2]);
        assert_eq!(priority_drop_decision(&[q(1, 3), q(2, 1), q(3, 1)], 5000, 8), vec![2, 3]);
    }

    #[test]
    fn protected_frames_stay() {
        assert!(priority_drop_decision(&[q(1, 5), q(2, 6)], 1, 5).is_empty());
        assert_eq!(priority_drop_decision(&[q(1, 5), q(2, 4)], 1_000_000, 5), vec![2]);
    }
}
