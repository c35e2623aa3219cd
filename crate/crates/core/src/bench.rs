//! Frame-loss sweeps, zero-loss throughput search and guard on/off
//! comparisons. Trials are independent and run in parallel; results come
//! back in sweep order regardless of completion order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acl::{AclRule, AclStack, Action, MatchField, OnExceed, ThresholdGuard};
use crate::monitor::Thresholds;
use crate::packet::{PROTO_ICMP, PROTO_UDP};
use crate::sim::{
    overflow_burst_count, run_trial, GeneratorKind, GeneratorSpec, Schedule, SimConfig, SimError, TrialReport,
    DEFAULT_BURST_PERIOD_SECS, DEFAULT_QUEUE_FRAMES, PAPER_FRAME_SIZES,
};
use crate::topology::{preset, Endpoint, NodeId, Topology, TopologyError};

/// Pacing of the paper10 cross-traffic bursts, percent of line rate.
pub const PAPER10_BURST_LOAD: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("frame size {size}, load {load}%, trial {trial}: {source}")]
    Trial { size: u32, load: f64, trial: u32, source: SimError },
}

/// A flow whose load and frame size come from the sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainFlow {
    pub src: NodeId,
    pub dst: NodeId,
    pub dscp: u8,
}

impl MainFlow {
    pub fn new(src: u32, dst: u32) -> Self {
        MainFlow { src: NodeId(src), dst: NodeId(dst), dscp: 0 }
    }
}

/// Everything about a benchmark except the swept load and frame size.
/// Burst periods in `background` are unscaled.
#[derive(Clone, Debug)]
pub struct Workload {
    pub topology: Topology,
    pub main_flows: Vec<MainFlow>,
    pub background: Vec<GeneratorSpec>,
    pub stacks: Vec<AclStack>,
    pub thresholds: Thresholds,
    pub queue_capacity: usize,
}

impl Workload {
    pub fn new(topology: Topology) -> Self {
        Workload {
            topology,
            main_flows: Vec::new(),
            background: Vec::new(),
            stacks: Vec::new(),
            thresholds: Thresholds::default(),
            queue_capacity: DEFAULT_QUEUE_FRAMES,
        }
    }

    /// Built-in workloads, one per topology preset.
    ///
    /// - `paper10`: main flows 1->10 and 10->1; ICMP bursts 3->4 and 5->7
    ///   cross the main path's links 2 and 3. The burst length overflows the
    ///   egress queue when main traffic runs at 95% but not at 85%.
    /// - `twopath`: main 1->4 over node 2; bursts 5->4 at 30% load link 2.
    /// - `twopath-busy`: as `twopath` with the main flow at DSCP 46, and a
    ///   steady 92% ICMP stream 6->4 holding the alternate above 0.9.
    /// - `line3`: main 1->3 with a steady 25% stream 2->3.
    /// - `single`: main 1->2 alone.
    pub fn preset(name: &str) -> Result<Workload, BenchError> {
        let mut w = Workload::new(preset(name)?);
        match name {
            "paper10" => {
                w.main_flows = vec![MainFlow::new(1, 10), MainFlow::new(10, 1)];
                let n = overflow_burst_count(95.0, 1518, PAPER10_BURST_LOAD, DEFAULT_QUEUE_FRAMES, 1.5);
                w.background = vec![
                    GeneratorSpec::burst(3, 4, PAPER10_BURST_LOAD, DEFAULT_BURST_PERIOD_SECS, n),
                    GeneratorSpec::burst(5, 7, PAPER10_BURST_LOAD, DEFAULT_BURST_PERIOD_SECS, n),
                ];
            }
            "twopath" | "twopath-busy" => {
                w.main_flows = vec![MainFlow::new(1, 4)];
                w.background = vec![GeneratorSpec::burst(5, 4, 30.0, DEFAULT_BURST_PERIOD_SECS, 24_000)];
                if name == "twopath-busy" {
                    w.main_flows[0].dscp = 46;
                    w.background.push(
                        GeneratorSpec::constant(6, 4, 92.0, 1518).with_protocol(PROTO_ICMP).measured(false),
                    );
                }
            }
            "line3" => {
                w.main_flows = vec![MainFlow::new(1, 3)];
                w.background = vec![GeneratorSpec::constant(2, 3, 25.0, 512).measured(false)];
            }
            _ => w.main_flows = vec![MainFlow::new(1, 2)],
        }
        Ok(w)
    }

    /// Generators for one cell: main flows first, then background.
    pub fn generators(&self, frame_size: u32, load: f64, duration_scale: f64) -> Vec<GeneratorSpec> {
        let main = self.main_flows.iter().map(|m| GeneratorSpec {
            dscp: m.dscp,
            ..GeneratorSpec::constant(m.src.0, m.dst.0, load, frame_size)
        });
        let background = self.background.iter().map(|g| {
            let mut g = g.clone();
            if let GeneratorKind::PeriodicBurst { period_secs, burst_count } = g.kind {
                g.kind = GeneratorKind::PeriodicBurst { period_secs: period_secs * duration_scale, burst_count };
            }
            g
        });
        main.chain(background).collect()
    }

    pub fn config(&self, spec: &SweepSpec, frame_size: u32, load: f64) -> SimConfig {
        let mut cfg = SimConfig::new(self.topology.clone());
        cfg.generators = self.generators(frame_size, load, spec.duration_scale);
        cfg.stacks = self.stacks.clone();
        if spec.guard {
            cfg.stacks.extend(guard_stacks(&self.topology, &self.stacks, spec.guard_threshold));
        }
        cfg.thresholds = self.thresholds.clone();
        cfg.schedule = spec.schedule();
        cfg.queue_capacity = self.queue_capacity;
        cfg
    }
}

/// The guard rule used by comparisons: reroute UDP traffic whose next link
/// is over `threshold`, permit everything else.
pub fn guard_rules(threshold: f64) -> Vec<AclRule> {
    let guard = ThresholdGuard::new(threshold, OnExceed::Reroute).expect("threshold checked by the sweep");
    vec![
        AclRule::new(10, vec![MatchField::IpProtocol(PROTO_UDP)], Action::Guard(guard)).expect("valid rule"),
        AclRule::new(20, vec![], Action::Permit).expect("valid rule"),
    ]
}

/// One guard stack for every link port that has no stack yet.
pub fn guard_stacks(topology: &Topology, existing: &[AclStack], threshold: f64) -> Vec<AclStack> {
    let taken: Vec<Endpoint> = existing.iter().filter_map(|s| s.binding()).collect();
    let mut out = Vec::new();
    for link in topology.links() {
        for ep in [link.a, link.b] {
            if taken.contains(&ep) {
                continue;
            }
            let mut s = AclStack::from_rules(format!("guard-{ep}"), guard_rules(threshold)).expect("valid stack");
            s.bind(ep).expect("non-empty stack");
            out.push(s);
        }
    }
    out.sort_by_key(|s| s.binding());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub loads: Vec<f64>,
    pub frame_sizes: Vec<u32>,
    pub trials: u32,
    /// Unscaled trial length in seconds.
    pub trial_duration: f64,
    /// Multiplies the trial length and burst periods.
    pub duration_scale: f64,
    pub start_delay: f64,
    pub drain: f64,
    pub base_seed: u64,
    pub guard: bool,
    pub guard_threshold: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            loads: (1..=10).rev().map(|i| i as f64 * 10.0).collect(),
            frame_sizes: PAPER_FRAME_SIZES.to_vec(),
            trials: 4,
            trial_duration: 100.0,
            duration_scale: 0.01,
            start_delay: 2.0,
            drain: 15.0,
            base_seed: 1,
            guard: false,
            guard_threshold: 0.9,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.loads.is_empty() {
            return bad("load list is empty".into());
        }
        if let Some(l) = self.loads.iter().find(|l| !(**l > 0.0 && **l <= 100.0)) {
            return bad(format!("load {l} outside (0, 100]"));
        }
        if self.frame_sizes.is_empty() {
            return bad("frame size list is empty".into());
        }
        if self.trials == 0 {
            return bad("at least one trial is required".into());
        }
        if !(self.trial_duration > 0.0 && self.duration_scale > 0.0) {
            return bad("trial duration and scale must be positive".into());
        }
        if !(self.guard_threshold > 0.0 && self.guard_threshold <= 1.0) {
            return bad(format!("guard threshold {} outside (0, 1]", self.guard_threshold));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { start_delay: self.start_delay, duration: self.trial_duration * self.duration_scale, drain: self.drain }
    }

    pub fn seed(&self, trial: u32) -> u64 {
        self.base_seed + trial as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nodes: usize,
    pub links: usize,
    pub frame_size_bytes: u32,
    pub load_pct: f64,
    pub frame_loss_pct: f64,
    pub max_jitter_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: u32,
    pub seed: u64,
    pub frame_size: u32,
    pub load_pct: f64,
    pub tx_frames: u64,
    pub rx_frames: u64,
    pub frames_lost: u64,
    pub oversub_frames: u64,
    pub max_jitter_us: f64,
    pub conserved: bool,
    pub in_flight: u64,
}

impl TrialRecord {
    fn from_report(trial: u32, frame_size: u32, load: f64, r: &TrialReport) -> Self {
        TrialRecord {
            trial: trial + 1,
            seed: r.seed,
            frame_size,
            load_pct: load,
            tx_frames: r.tx_frames(),
            rx_frames: r.rx_frames(),
            frames_lost: r.frames_lost(),
            oversub_frames: r.oversub_frames(),
            max_jitter_us: r.max_jitter_us(),
            conserved: r.conserved(),
            in_flight: r.counters.in_flight,
        }
    }

    pub fn frame_loss_pct(&self) -> f64 {
        if self.tx_frames == 0 {
            0.0
        } else {
            100.0 * self.frames_lost as f64 / self.tx_frames as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Grouped by row, trials in order within each row.
    pub trials: Vec<TrialRecord>,
}

/// Runs every (frame size, load) cell in the given order.
pub fn frame_loss_sweep(workload: &Workload, spec: &SweepSpec) -> Result<SweepResult, BenchError> {
    spec.validate()?;
    let cells: Vec<(u32, f64)> =
        spec.frame_sizes.iter().flat_map(|&s| spec.loads.iter().map(move |&l| (s, l))).collect();
    let trials = run_cells(workload, spec, &cells)?;
    let per = spec.trials as usize;
    let rows = cells
        .iter()
        .zip(trials.chunks(per))
        .map(|(&(size, load), ts)| SweepRow {
            nodes: workload.topology.nodes().len(),
            links: workload.topology.links().len(),
            frame_size_bytes: size,
            load_pct: load,
            frame_loss_pct: ts.iter().map(TrialRecord::frame_loss_pct).sum::<f64>() / per as f64,
            max_jitter_us: ts.iter().map(|t| t.max_jitter_us).fold(0.0, f64::max),
        })
        .collect();
    Ok(SweepResult { rows, trials })
}

fn run_cells(workload: &Workload, spec: &SweepSpec, cells: &[(u32, f64)]) -> Result<Vec<TrialRecord>, BenchError> {
    let jobs: Vec<(u32, f64, u32)> =
        cells.iter().flat_map(|&(s, l)| (0..spec.trials).map(move |t| (s, l, t))).collect();
    jobs.par_iter()
        .map(|&(size, load, trial)| {
            let cfg = workload.config(spec, size, load);
            run_trial(&cfg, spec.seed(trial))
                .map(|r| TrialRecord::from_report(trial, size, load, &r))
                .map_err(|source| BenchError::Trial { size, load, trial: trial + 1, source })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub frame_size_bytes: u32,
    /// Highest tested load with zero loss in every trial.
    pub throughput_pct: Option<f64>,
}

/// Walks the loads from highest to lowest and stops at the first one that
/// loses nothing in any trial.
pub fn throughput_test(workload: &Workload, spec: &SweepSpec) -> Result<Vec<ThroughputResult>, BenchError> {
    spec.validate()?;
    let mut loads = spec.loads.clone();
    loads.sort_by(|a, b| b.total_cmp(a));
    loads.dedup();
    let mut out = Vec::with_capacity(spec.frame_sizes.len());
    for &size in &spec.frame_sizes {
        let mut found = None;
        for &load in &loads {
            let trials = run_cells(workload, spec, &[(size, load)])?;
            if trials.iter().all(|t| t.frames_lost == 0) {
                found = Some(load);
                break;
            }
        }
        out.push(ThroughputResult { frame_size_bytes: size, throughput_pct: found });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub frame_size_bytes: u32,
    pub load_pct: f64,
    pub baseline_loss_pct: f64,
    pub guarded_loss_pct: f64,
    pub loss_delta_pct: f64,
    pub baseline_oversub_frames: u64,
    pub guarded_oversub_frames: u64,
    pub oversub_delta: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardComparison {
    pub baseline: SweepResult,
    pub guarded: SweepResult,
    pub delta: Vec<DeltaRow>,
}

/// The same sweep with the guard off and on, on identical seeds.
pub fn guard_comparison(workload: &Workload, spec: &SweepSpec) -> Result<GuardComparison, BenchError> {
    let baseline = frame_loss_sweep(workload, &SweepSpec { guard: false, ..spec.clone() })?;
    let guarded = frame_loss_sweep(workload, &SweepSpec { guard: true, ..spec.clone() })?;
    let per = spec.trials as usize;
    let oversub = |r: &SweepResult, i: usize| r.trials[i * per..(i + 1) * per].iter().map(|t| t.oversub_frames).sum::<u64>();
    let delta = baseline
        .rows
        .iter()
        .zip(&guarded.rows)
        .enumerate()
        .map(|(i, (b, g))| {
            let (bo, go) = (oversub(&baseline, i), oversub(&guarded, i));
            DeltaRow {
                frame_size_bytes: b.frame_size_bytes,
                load_pct: b.load_pct,
                baseline_loss_pct: b.frame_loss_pct,
                guarded_loss_pct: g.frame_loss_pct,
                loss_delta_pct: g.frame_loss_pct - b.frame_loss_pct,
                baseline_oversub_frames: bo,
                guarded_oversub_frames: go,
                oversub_delta: go as i64 - bo as i64,
            }
        })
        .collect();
    Ok(GuardComparison { baseline, guarded, delta })
}
