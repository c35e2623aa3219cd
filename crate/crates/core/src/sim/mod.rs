//! Discrete-event engine. One trial is one single-threaded event loop;
//! given the same configuration and seed it produces identical results.
//!
//! Frames are store-and-forward: a hop consults the ingress ACL once the
//! whole frame has arrived, then queues it on the egress link of its path.
//! Latency is measured first bit to first bit.

mod queue;
mod traffic;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use queue::{DropReason, EnqueueResult, PortQueue, DEFAULT_QUEUE_FRAMES};
pub use traffic::{
    node_ip, node_mac, overflow_burst_count, GeneratorKind, GeneratorSpec, DEFAULT_BURST_PERIOD_SECS, PAPER_FRAME_SIZES,
};

use crate::acl::{AclStack, OnExceed, Policer, PoliceOutcome, Verdict};
use crate::monitor::{Alert, Monitor, MonitorError, Thresholds, DEFAULT_WINDOW_SECS};
use crate::packet::{wire_bits, Frame};
use crate::reroute::{reroute, Path, QueuedFrame, RerouteError, RerouteOutcome, RouteTable};
use crate::time::SimTime;
use crate::topology::{Endpoint, LinkDir, NodeId, Topology, HOST_PORT};

/// Priority floor used when a reroute guard finds no alternative path:
/// any arriving frame may evict strictly lower-priority queued frames.
const FALLBACK_FLOOR: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start_delay: f64,
    pub duration: f64,
    pub drain: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { start_delay: 2.0, duration: 100.0, drain: 15.0 }
    }
}

impl Schedule {
    pub fn traffic_end(&self) -> SimTime {
        SimTime::from_secs(self.start_delay + self.duration)
    }

    pub fn end(&self) -> SimTime {
        SimTime::from_secs(self.start_delay + self.duration + self.drain)
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.start_delay) || !ok(self.drain) || !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::Schedule(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub topology: Topology,
    pub generators: Vec<GeneratorSpec>,
    /// Stacks with their ingress bindings set.
    pub stacks: Vec<AclStack>,
    pub thresholds: Thresholds,
    pub schedule: Schedule,
    pub queue_capacity: usize,
    pub window_secs: f64,
}

impl SimConfig {
    pub fn new(topology: Topology) -> Self {
        SimConfig {
            topology,
            generators: Vec::new(),
            stacks: Vec::new(),
            thresholds: Thresholds::default(),
            schedule: Schedule::default(),
            queue_capacity: DEFAULT_QUEUE_FRAMES,
            window_secs: DEFAULT_WINDOW_SECS,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("generator {index}: {message}")]
    Generator { index: usize, message: String },
    #[error("generator {index}: node {src} cannot reach node {dst}")]
    Disconnected { index: usize, src: NodeId, dst: NodeId },
    #[error("stack `{stack}`: {message}")]
    Binding { stack: String, message: String },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("queue capacity must be at least one frame")]
    QueueCapacity,
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Reroute(#[from] RerouteError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub flow_id: u32,
    pub src: u32,
    pub dst: u32,
    pub measured: bool,
    pub tx_frames: u64,
    pub rx_frames: u64,
    /// Denied by an ACL; not a loss.
    pub filtered_frames: u64,
    pub tail_drops: u64,
    pub priority_drops: u64,
    pub policer_drops: u64,
    /// Frames offered to an egress during a window whose offered load
    /// exceeded the line rate.
    pub oversub_frames: u64,
    pub max_jitter_us: f64,
    pub max_latency_us: f64,
    /// Smallest per-hop latency minus the incoming serialization time.
    pub min_hop_slack_ps: Option<i64>,
}

impl FlowCounters {
    pub fn dropped(&self) -> u64 {
        self.tail_drops + self.priority_drops + self.policer_drops
    }

    /// Frames that should have been delivered but were not.
    pub fn lost(&self) -> u64 {
        self.tx_frames.saturating_sub(self.rx_frames + self.filtered_frames)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub link: LinkDir,
    pub tx_frames: u64,
    pub tail_drops: u64,
    pub priority_drops: u64,
    pub oversub_frames: u64,
    pub max_queue: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerouteReason {
    Guard,
    Clear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerouteEvent {
    pub t: f64,
    pub flow: u32,
    pub old_path: Vec<u32>,
    pub new_path: Vec<u32>,
    pub reason: RerouteReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCounters {
    pub flows: Vec<FlowCounters>,
    pub links: Vec<LinkCounters>,
    pub in_flight: u64,
    pub guard_hits: u64,
    pub end_time: SimTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub counters: TrialCounters,
    pub alerts: Vec<Alert>,
    pub reroutes: Vec<RerouteEvent>,
}

impl TrialReport {
    fn measured(&self) -> impl Iterator<Item = &FlowCounters> {
        self.counters.flows.iter().filter(|f| f.measured)
    }

    pub fn tx_frames(&self) -> u64 {
        self.measured().map(|f| f.tx_frames).sum()
    }

    pub fn rx_frames(&self) -> u64 {
        self.measured().map(|f| f.rx_frames).sum()
    }

    pub fn frames_lost(&self) -> u64 {
        self.measured().map(|f| f.lost()).sum()
    }

    pub fn oversub_frames(&self) -> u64 {
        self.measured().map(|f| f.oversub_frames).sum()
    }

    /// 100 * lost / tx over measured flows; 0 when nothing was sent.
    pub fn frame_loss_pct(&self) -> f64 {
        let tx = self.tx_frames();
        if tx == 0 {
            0.0
        } else {
            100.0 * self.frames_lost() as f64 / tx as f64
        }
    }

    pub fn max_jitter_us(&self) -> f64 {
        self.measured().map(|f| f.max_jitter_us).fold(0.0, f64::max)
    }

    /// Every frame sent by any flow is delivered, filtered, dropped, or
    /// still in flight.
    pub fn conserved(&self) -> bool {
        let f = &self.counters.flows;
        let tx: u64 = f.iter().map(|c| c.tx_frames).sum();
        let rest: u64 = f.iter().map(|c| c.rx_frames + c.filtered_frames + c.dropped()).sum();
        tx == rest + self.counters.in_flight
    }
}

pub fn run_trial(config: &SimConfig, seed: u64) -> Result<TrialReport, SimError> {
    Engine::new(config, seed)?.run()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival { slot: u32 },
    SerializationDone { dir: u32 },
    GeneratorTick { gen: u32 },
    WindowBoundary,
    TrialEnd,
}

struct DirInfo {
    rate_bps: u64,
    delay: SimTime,
    rx: Endpoint,
}

struct PathInfo {
    dirs: Vec<u32>,
}

struct InFlight {
    frame: Frame,
    bits: u64,
    flow: u32,
    path: u32,
    hop: u32,
    node: NodeId,
    in_dir: Option<u32>,
    first_bit_in: SimTime,
    ser_in: SimTime,
    floor: Option<u8>,
}

struct GenState {
    flow: u32,
    start_ps: f64,
    end: SimTime,
    interval_ps: f64,
    burst: Option<(f64, u64)>,
    b: u64,
    j: u64,
    template: Frame,
}

impl GenState {
    fn time_of(&self) -> SimTime {
        let offset = match self.burst {
            None => self.j as f64 * self.interval_ps,
            Some((period, _)) => self.b as f64 * period + self.j as f64 * self.interval_ps,
        };
        SimTime::from_ps((self.start_ps + offset).round() as u64)
    }

    fn advance(&mut self) {
        self.j += 1;
        if let Some((_, count)) = self.burst {
            if self.j == count {
                self.j = 0;
                self.b += 1;
            }
        }
    }
}

#[derive(Default)]
struct GuardState {
    window: Option<u64>,
    no_alternative: bool,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    topo: &'a Topology,
    seed: u64,
    now: SimTime,
    end: SimTime,
    window: SimTime,
    heap: BinaryHeap<Reverse<(SimTime, u64, Event)>>,
    tie: u64,
    dirs: Vec<DirInfo>,
    paths: Vec<PathInfo>,
    pair_path: BTreeMap<(NodeId, NodeId), u32>,
    table: RouteTable,
    slab: Vec<Option<InFlight>>,
    free: Vec<u32>,
    live: u64,
    queues: Vec<PortQueue<u32>>,
    busy: Vec<bool>,
    gens: Vec<GenState>,
    next_frame_id: u64,
    monitor: Monitor,
    stack_in: Vec<Option<usize>>,
    stack_host: BTreeMap<NodeId, usize>,
    policers: BTreeMap<(usize, u32), Policer>,
    guards: Vec<GuardState>,
    flows: Vec<FlowCounters>,
    links: Vec<LinkCounters>,
    last_latency: Vec<Option<SimTime>>,
    win_frames: [Vec<u64>; 2],
    win_gen_bits: Vec<u64>,
    guard_hits: u64,
    reroutes: Vec<RerouteEvent>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, seed: u64) -> Result<Self, SimError> {
        cfg.schedule.validate()?;
        if cfg.queue_capacity == 0 {
            return Err(SimError::QueueCapacity);
        }
        if !(cfg.window_secs > 0.0 && cfg.window_secs.is_finite()) {
            return Err(SimError::Schedule(format!("window {} s", cfg.window_secs)));
        }
        let topo = &cfg.topology;
        let window = SimTime::from_secs(cfg.window_secs);
        let monitor = Monitor::new(topo, window, cfg.thresholds.clone())?;

        let ndirs = topo.dir_count();
        let mut dirs = Vec::with_capacity(ndirs);
        let mut rx_index = BTreeMap::new();
        for i in 0..ndirs {
            let ld = topo.link_dir_at(i);
            let link = topo.link(ld.link).expect("known link");
            let (_, rx) = link.ends(ld.dir);
            rx_index.insert(rx, i);
            dirs.push(DirInfo { rate_bps: link.rate_bps, delay: link.delay, rx });
        }

        let mut stack_in = vec![None; ndirs];
        let mut stack_host = BTreeMap::new();
        for (si, stack) in cfg.stacks.iter().enumerate() {
            let err = |message: String| SimError::Binding { stack: stack.id().to_string(), message };
            let ep = stack.binding().ok_or_else(|| err("stack is not bound to a port".into()))?;
            if stack.rules().is_empty() {
                return Err(err(format!("bound stack at {ep} is empty")));
            }
            if !topo.has_node(ep.node) {
                return Err(err(format!("binding {ep} names unknown node {}", ep.node)));
            }
            let taken = if ep.port == HOST_PORT {
                stack_host.insert(ep.node, si).is_some()
            } else {
                let d = *rx_index.get(&ep).ok_or_else(|| err(format!("binding {ep} names a port with no link")))?;
                stack_in[d].replace(si).is_some()
            };
            if taken {
                return Err(err(format!("port {ep} already has a stack")));
            }
        }

        let mut table = RouteTable::new();
        let mut paths = Vec::new();
        let mut pair_path = BTreeMap::new();
        let mut gens = Vec::with_capacity(cfg.generators.len());
        let mut flows = Vec::with_capacity(cfg.generators.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start_ps = SimTime::from_secs(cfg.schedule.start_delay).as_ps() as f64;
        for (index, g) in cfg.generators.iter().enumerate() {
            g.validate().map_err(|message| SimError::Generator { index, message })?;
            for n in [g.src, g.dst] {
                if !topo.has_node(n) {
                    return Err(SimError::Generator { index, message: format!("unknown node {n}") });
                }
            }
            let Some(entry) = table.ensure(topo, g.src, g.dst)? else {
                return Err(SimError::Disconnected { index, src: g.src, dst: g.dst });
            };
            let path = entry.current.clone();
            pair_path.entry((g.src, g.dst)).or_insert_with(|| register_path(&mut paths, topo, &path));
            let first = topo.link(path.links[0]).expect("path link").rate_bps;
            let interval_ps = g.interval_ps(first);
            let (burst, cycle) = match g.kind {
                GeneratorKind::Constant => (None, interval_ps),
                GeneratorKind::PeriodicBurst { period_secs, burst_count } => {
                    let period = period_secs * 1e12;
                    (Some((period, burst_count as u64)), period)
                }
            };
            let phase = rng.gen_range(0.0..cycle);
            let template = g.template(index as u32).map_err(|e| SimError::Generator { index, message: e.to_string() })?;
            gens.push(GenState {
                flow: index as u32,
                start_ps: start_ps + phase,
                end: cfg.schedule.traffic_end(),
                interval_ps,
                burst,
                b: 0,
                j: 0,
                template,
            });
            flows.push(FlowCounters { flow_id: index as u32, src: g.src.0, dst: g.dst.0, measured: g.measured, ..Default::default() });
        }

        let nflows = flows.len();
        Ok(Engine {
            cfg,
            topo,
            seed,
            now: SimTime::ZERO,
            end: cfg.schedule.end(),
            window,
            heap: BinaryHeap::new(),
            tie: 0,
            links: (0..ndirs)
                .map(|i| LinkCounters {
                    link: topo.link_dir_at(i),
                    tx_frames: 0,
                    tail_drops: 0,
                    priority_drops: 0,
                    oversub_frames: 0,
                    max_queue: 0,
                })
                .collect(),
            dirs,
            paths,
            pair_path,
            table,
            slab: Vec::new(),
            free: Vec::new(),
            live: 0,
            queues: (0..ndirs).map(|_| PortQueue::new(cfg.queue_capacity)).collect(),
            busy: vec![false; ndirs],
            gens,
            next_frame_id: 0,
            monitor,
            stack_in,
            stack_host,
            policers: BTreeMap::new(),
            guards: (0..cfg.stacks.len()).map(|_| GuardState::default()).collect(),
            flows,
            last_latency: vec![None; nflows],
            win_frames: [vec![0; ndirs * nflows], vec![0; ndirs * nflows]],
            win_gen_bits: vec![0; nflows],
            guard_hits: 0,
            reroutes: Vec::new(),
        })
    }

    fn push(&mut self, at: SimTime, ev: Event) {
        self.heap.push(Reverse((at, self.tie, ev)));
        self.tie += 1;
    }

    fn run(mut self) -> Result<TrialReport, SimError> {
        for gi in 0..self.gens.len() {
            let t = self.gens[gi].time_of();
            if t < self.gens[gi].end {
                self.push(t, Event::GeneratorTick { gen: gi as u32 });
            }
        }
        self.push(self.window, Event::WindowBoundary);
        self.push(self.end, Event::TrialEnd);

        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            self.now = t;
            match ev {
                Event::TrialEnd => break,
                Event::GeneratorTick { gen } => self.generate(gen as usize)?,
                Event::Arrival { slot } => self.ingress(slot)?,
                Event::SerializationDone { dir } => {
                    let d = dir as usize;
                    self.busy[d] = false;
                    if let Some((_, slot)) = self.queues[d].pop() {
                        self.start_tx(d, slot)?;
                    }
                }
                Event::WindowBoundary => self.window_boundary()?,
            }
        }

        Ok(TrialReport {
            seed: self.seed,
            counters: TrialCounters {
                flows: self.flows,
                links: self.links,
                in_flight: self.live,
                guard_hits: self.guard_hits,
                end_time: self.now,
            },
            alerts: self.monitor.alerts().to_vec(),
            reroutes: self.reroutes,
        })
    }

    fn alloc(&mut self, f: InFlight) -> u32 {
        self.live += 1;
        match self.free.pop() {
            Some(i) => {
                self.slab[i as usize] = Some(f);
                i
            }
            None => {
                self.slab.push(Some(f));
                (self.slab.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, slot: u32) -> InFlight {
        self.live -= 1;
        self.free.push(slot);
        self.slab[slot as usize].take().expect("live slot")
    }

    fn slot(&mut self, slot: u32) -> &mut InFlight {
        self.slab[slot as usize].as_mut().expect("live slot")
    }

    fn generate(&mut self, gi: usize) -> Result<(), SimError> {
        let g = &self.gens[gi];
        let frame = g.template.renumbered(self.next_frame_id, self.now);
        self.next_frame_id += 1;
        let flow = g.flow;
        let spec = &self.cfg.generators[flow as usize];
        let path = self.pair_path[&(spec.src, spec.dst)];
        let bits = wire_bits(&frame);
        self.flows[flow as usize].tx_frames += 1;
        self.win_gen_bits[flow as usize] += bits;
        let slot = self.alloc(InFlight {
            frame,
            bits,
            flow,
            path,
            hop: 0,
            node: spec.src,
            in_dir: None,
            first_bit_in: self.now,
            ser_in: SimTime::ZERO,
            floor: None,
        });

        let g = &mut self.gens[gi];
        g.advance();
        let next = g.time_of().max(self.now);
        if next < g.end {
            self.push(next, Event::GeneratorTick { gen: gi as u32 });
        }
        self.ingress(slot)
    }

    fn ingress(&mut self, slot: u32) -> Result<(), SimError> {
        let now = self.now;
        let (node, in_dir) = {
            let s = self.slot(slot);
            (s.node, s.in_dir)
        };
        let stack = match in_dir {
            Some(d) => self.stack_in[d as usize],
            None => self.stack_host.get(&node).copied(),
        };
        if let Some(si) = stack {
            let s = self.slab[slot as usize].as_ref().expect("live slot");
            // A guard weighs the link the frame leaves on; at its destination,
            // the link it came in on.
            let load = match self.paths[s.path as usize].dirs.get(s.hop as usize) {
                Some(&d) => self.monitor.utilization_idx(d as usize, now),
                None => in_dir.map_or(0.0, |d| self.monitor.utilization_idx(d as usize, now)),
            };
            let port = in_dir.map_or(HOST_PORT, |d| self.dirs[d as usize].rx.port);
            let c = self.cfg.stacks[si].evaluate(&s.frame, port, load);
            let flow = s.flow as usize;
            match c.verdict {
                Verdict::Permit => {}
                Verdict::Deny => {
                    self.flows[flow].filtered_frames += 1;
                    self.release(slot);
                    return Ok(());
                }
                Verdict::Police(config) => {
                    let seq = c.matched_seq.expect("policed verdicts come from a rule");
                    let bits = s.bits;
                    let policer = self.policers.entry((si, seq)).or_insert_with(|| Policer::new(config, now));
                    let outcome = policer.police_bits(bits, now).expect("event time is monotone");
                    if outcome == PoliceOutcome::Violate {
                        self.flows[flow].policer_drops += 1;
                        self.release(slot);
                        return Ok(());
                    }
                }
                Verdict::Guard(decision) => {
                    self.guard_hits += 1;
                    match decision.on_exceed {
                        OnExceed::AlertOnly => {}
                        OnExceed::DropByPriority { min_protected_priority } => {
                            self.slot(slot).floor = Some(min_protected_priority);
                        }
                        OnExceed::Reroute => {
                            if self.guard_reroute(si, flow, decision.threshold)? {
                                self.slot(slot).floor = Some(FALLBACK_FLOOR);
                            }
                        }
                    }
                }
            }
        }

        let s = self.slab[slot as usize].as_ref().expect("live slot");
        let path = &self.paths[s.path as usize];
        if s.hop as usize == path.dirs.len() {
            self.deliver(slot);
            return Ok(());
        }
        let d = path.dirs[s.hop as usize] as usize;
        self.forward(d, slot)
    }

    /// Attempts at most one reroute per binding per window. Returns true if
    /// the guard has no alternative path this window.
    fn guard_reroute(&mut self, si: usize, flow: usize, threshold: f64) -> Result<bool, SimError> {
        let w = self.now.as_ps() / self.window.as_ps();
        if self.guards[si].window == Some(w) {
            return Ok(self.guards[si].no_alternative);
        }
        let spec = &self.cfg.generators[flow];
        let (src, dst) = (spec.src, spec.dst);
        let old = self.table.get(src, dst).expect("flow pairs are installed").current.clone();
        let loads = self.monitor.loads(self.now);
        let outcome = reroute(&mut self.table, self.topo, src, dst, &loads, threshold)?;
        let no_alternative = match outcome {
            RerouteOutcome::NoAlternative => true,
            RerouteOutcome::NewPath(p) => {
                if !p.same_route(&old) {
                    let id = register_path(&mut self.paths, self.topo, &p);
                    self.pair_path.insert((src, dst), id);
                    self.reroutes.push(RerouteEvent {
                        t: self.now.as_secs(),
                        flow: flow as u32,
                        old_path: old.links.iter().map(|l| l.0).collect(),
                        new_path: p.links.iter().map(|l| l.0).collect(),
                        reason: RerouteReason::Guard,
                    });
                }
                false
            }
        };
        self.guards[si] = GuardState { window: Some(w), no_alternative };
        Ok(no_alternative)
    }

    fn forward(&mut self, d: usize, slot: u32) -> Result<(), SimError> {
        let now = self.now;
        let s = self.slab[slot as usize].as_ref().expect("live slot");
        let (bits, flow, floor) = (s.bits, s.flow as usize, s.floor);
        let queued = QueuedFrame { frame_id: s.frame.frame_id(), priority: s.frame.priority(), bits };
        self.monitor.record_offered_idx(d, bits, now);
        let parity = ((now.as_ps() / self.window.as_ps()) % 2) as usize;
        self.win_frames[parity][d * self.flows.len() + flow] += 1;

        if !self.busy[d] && self.queues[d].is_empty() {
            return self.start_tx(d, slot);
        }
        match self.queues[d].enqueue_or_drop(queued, slot, floor) {
            EnqueueResult::Enqueued { evicted } => {
                for victim in evicted {
                    let v = self.release(victim);
                    self.flows[v.flow as usize].priority_drops += 1;
                    self.links[d].priority_drops += 1;
                }
                let len = self.queues[d].len();
                let link = &mut self.links[d];
                link.max_queue = link.max_queue.max(len);
            }
            EnqueueResult::Dropped(reason) => {
                self.release(slot);
                match reason {
                    DropReason::Priority => {
                        self.flows[flow].priority_drops += 1;
                        self.links[d].priority_drops += 1;
                    }
                    _ => {
                        self.flows[flow].tail_drops += 1;
                        self.links[d].tail_drops += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn start_tx(&mut self, d: usize, slot: u32) -> Result<(), SimError> {
        let now = self.now;
        let info = &self.dirs[d];
        let (rate, delay, rx) = (info.rate_bps, info.delay, info.rx);
        let s = self.slab[slot as usize].as_mut().expect("live slot");
        let slack = now.as_ps() as i64 - s.first_bit_in.as_ps() as i64 - s.ser_in.as_ps() as i64;
        let ser = SimTime::transmission(s.bits, rate);
        let bits = s.bits;
        let flow = s.flow as usize;
        s.first_bit_in = now + delay;
        s.ser_in = ser;
        s.node = rx.node;
        s.in_dir = Some(d as u32);
        s.hop += 1;
        s.floor = None;

        let fc = &mut self.flows[flow];
        fc.min_hop_slack_ps = Some(fc.min_hop_slack_ps.map_or(slack, |m| m.min(slack)));
        self.monitor.record_serialization_idx(d, bits, now)?;
        self.links[d].tx_frames += 1;
        self.busy[d] = true;
        self.push(now + ser, Event::SerializationDone { dir: d as u32 });
        self.push(now + ser + delay, Event::Arrival { slot });
        Ok(())
    }

    fn deliver(&mut self, slot: u32) {
        let s = self.release(slot);
        let flow = s.flow as usize;
        let latency = s.first_bit_in - s.frame.created_at();
        let fc = &mut self.flows[flow];
        fc.rx_frames += 1;
        fc.max_latency_us = fc.max_latency_us.max(latency.as_micros());
        if let Some(prev) = self.last_latency[flow] {
            let delta = latency.as_ps().abs_diff(prev.as_ps()) as f64 / 1e6;
            fc.max_jitter_us = fc.max_jitter_us.max(delta);
        }
        self.last_latency[flow] = Some(latency);
    }

    fn window_boundary(&mut self) -> Result<(), SimError> {
        let now = self.now;
        self.monitor.evaluate_thresholds(now);

        let nflows = self.flows.len();
        let parity = ((now.as_ps() / self.window.as_ps() + 1) % 2) as usize;
        for d in 0..self.dirs.len() {
            if self.monitor.offered_ratio_idx(d, now) > 1.0 {
                for f in 0..nflows {
                    let n = self.win_frames[parity][d * nflows + f];
                    self.flows[f].oversub_frames += n;
                    self.links[d].oversub_frames += n;
                }
            }
        }
        self.win_frames[parity].iter_mut().for_each(|c| *c = 0);

        self.return_flows();
        self.win_gen_bits.iter_mut().for_each(|b| *b = 0);

        let next = now + self.window;
        if next < self.end {
            self.push(next, Event::WindowBoundary);
        }
        Ok(())
    }

    /// Moves rerouted pairs back once their original path, carrying the
    /// pair's own recent traffic, would sit below the clear level.
    fn return_flows(&mut self) {
        let now = self.now;
        let th = self.monitor.thresholds();
        let clear_level = th.link_util - th.clear_margin;
        let away: Vec<((NodeId, NodeId), Path, Path)> = self
            .table
            .entries()
            .filter(|(_, e)| !e.current.same_route(&e.original))
            .map(|(k, e)| (*k, e.original.clone(), e.current.clone()))
            .collect();
        for ((src, dst), original, current) in away {
            let flows: Vec<usize> =
                (0..self.flows.len()).filter(|&f| self.cfg.generators[f].src == src && self.cfg.generators[f].dst == dst).collect();
            let first_rate = self.topo.link(original.links[0]).expect("path link").rate_bps as f64;
            let own = flows.iter().map(|&f| self.win_gen_bits[f]).sum::<u64>() as f64 / (first_rate * self.window.as_secs());
            let on_current = current.dirs(self.topo);
            let projected = original
                .dirs(self.topo)
                .iter()
                .map(|ld| {
                    let i = self.topo.dir_index(*ld).expect("path dir");
                    self.monitor.utilization_idx(i, now) + if on_current.contains(ld) { 0.0 } else { own }
                })
                .fold(0.0, f64::max);
            if projected < clear_level {
                if let Some(old) = self.table.restore(src, dst) {
                    let id = register_path(&mut self.paths, self.topo, &original);
                    self.pair_path.insert((src, dst), id);
                    self.reroutes.push(RerouteEvent {
                        t: now.as_secs(),
                        flow: flows.first().copied().unwrap_or(0) as u32,
                        old_path: old.links.iter().map(|l| l.0).collect(),
                        new_path: original.links.iter().map(|l| l.0).collect(),
                        reason: RerouteReason::Clear,
                    });
                }
            }
        }
    }
}

fn register_path(paths: &mut Vec<PathInfo>, topo: &Topology, path: &Path) -> u32 {
    let dirs: Vec<u32> = path.dirs(topo).iter().map(|ld| topo.dir_index(*ld).expect("path dir") as u32).collect();
    if let Some(i) = paths.iter().position(|p| p.dirs == dirs) {
        return i as u32;
    }
    paths.push(PathInfo { dirs });
    (paths.len() - 1) as u32
}
