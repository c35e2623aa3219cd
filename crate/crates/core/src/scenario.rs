//! Scenario files: a sectioned, line-oriented description of a run.
//!
//! ```text
//! [topology]
//! preset paper10
//!
//! [generators]
//! preset paper10
//! main 1 3 dscp 46
//! flow 2 3 load 25 size 512 proto icmp
//! burst 5 4 load 30 period 10 count 24000
//!
//! [acl]
//! bind 2:1 edge.acl
//!
//! [thresholds]
//! link_util 0.9
//!
//! [schedule]
//! duration 100
//! duration_scale 0.01
//!
//! [run]
//! mode sweep
//! loads 85 95
//!
//! [output]
//! dir out/fig3
//! format csv
//! ```
//!
//! Topology lines are either a single `preset <name>` or an inline
//! document. Main flows take their load and frame size from the sweep;
//! `flow` and `burst` lines are fixed background traffic. ACL paths are
//! relative to the scenario file.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::acl::{parse_acl, AclError, AclStack};
use crate::bench::{MainFlow, SweepSpec, Workload};
use crate::monitor::Thresholds;
use crate::packet::{PROTO_ICMP, PROTO_TCP, PROTO_UDP};
use crate::sim::{GeneratorKind, GeneratorSpec, DEFAULT_QUEUE_FRAMES};
use crate::topology::{load_topology, preset_document, Endpoint, NodeId, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{0}")]
    Semantic(String),
    #[error("acl file {path}: {source}")]
    Acl { path: String, source: AclError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Trial,
    Sweep,
    Throughput,
    Compare,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Trial => "trial",
            Mode::Sweep => "sweep",
            Mode::Throughput => "throughput",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (csv or json)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySource {
    Preset(String),
    Inline(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub port: Endpoint,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: TopologySource,
    pub workload_preset: Option<String>,
    pub main_flows: Vec<MainFlow>,
    pub background: Vec<GeneratorSpec>,
    pub bindings: Vec<Binding>,
    pub thresholds: Thresholds,
    pub start_delay: f64,
    pub duration: f64,
    pub drain: f64,
    pub duration_scale: f64,
    pub mode: Mode,
    pub seed: u64,
    pub loads: Vec<f64>,
    pub sizes: Vec<u32>,
    pub trials: u32,
    pub guard: bool,
    pub guard_threshold: f64,
    pub queue_capacity: usize,
    pub output_dir: Option<String>,
    pub format: Format,
}

impl Default for Scenario {
    fn default() -> Self {
        let s = SweepSpec::default();
        Scenario {
            topology: TopologySource::Preset(String::new()),
            workload_preset: None,
            main_flows: Vec::new(),
            background: Vec::new(),
            bindings: Vec::new(),
            thresholds: Thresholds::default(),
            start_delay: s.start_delay,
            duration: s.trial_duration,
            drain: s.drain,
            duration_scale: s.duration_scale,
            mode: Mode::Sweep,
            seed: s.base_seed,
            loads: s.loads,
            sizes: s.frame_sizes,
            trials: s.trials,
            guard: false,
            guard_threshold: s.guard_threshold,
            queue_capacity: DEFAULT_QUEUE_FRAMES,
            output_dir: None,
            format: Format::Csv,
        }
    }
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Tok { text: &line[s..i], col: s + 1 });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: s + 1 });
    }
    out
}

struct Line<'a> {
    no: usize,
    toks: Vec<Tok<'a>>,
    end_col: usize,
}

impl<'a> Line<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Syntax { line: self.no, col, message: message.into() }
    }

    fn arg(&self, i: usize, what: &str) -> Result<&Tok<'a>, ScenarioError> {
        self.toks.get(i).ok_or_else(|| self.err(self.end_col, format!("expected {what}")))
    }

    fn parse<T: FromStr>(&self, i: usize, what: &str) -> Result<T, ScenarioError> {
        let t = self.arg(i, what)?;
        t.text.parse().map_err(|_| self.err(t.col, format!("expected {what}, found `{}`", t.text)))
    }

    fn single<T: FromStr>(&self, what: &str) -> Result<T, ScenarioError> {
        let v = self.parse(1, what)?;
        self.no_more(2)?;
        Ok(v)
    }

    fn no_more(&self, i: usize) -> Result<(), ScenarioError> {
        match self.toks.get(i) {
            Some(t) => Err(self.err(t.col, format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    }

    fn list<T: FromStr>(&self, what: &str) -> Result<Vec<T>, ScenarioError> {
        if self.toks.len() < 2 {
            return Err(self.err(self.end_col, format!("expected at least one {what}")));
        }
        (1..self.toks.len()).map(|i| self.parse(i, what)).collect()
    }

    fn on_off(&self) -> Result<bool, ScenarioError> {
        let t = self.arg(1, "on or off")?;
        self.no_more(2)?;
        match t.text {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(self.err(t.col, format!("expected on or off, found `{other}`"))),
        }
    }
}

fn protocol_name(p: u8) -> &'static str {
    match p {
        PROTO_ICMP => "icmp",
        PROTO_TCP => "tcp",
        _ => "udp",
    }
}

fn parse_generator(l: &Line, sc: &mut Scenario) -> Result<(), ScenarioError> {
    let kw = l.toks[0].text;
    if kw == "preset" {
        let name: String = l.single("workload preset name")?;
        Workload::preset(&name).map_err(|e| l.err(l.toks[1].col, e.to_string()))?;
        if sc.workload_preset.replace(name).is_some() {
            return Err(l.err(1, "only one generator preset is allowed"));
        }
        return Ok(());
    }
    let src: u32 = l.parse(1, "source node")?;
    let dst: u32 = l.parse(2, "destination node")?;
    let mut g = match kw {
        "main" => GeneratorSpec::constant(src, dst, 100.0, 512),
        "flow" => GeneratorSpec::constant(src, dst, 0.0, 0).measured(false),
        "burst" => GeneratorSpec::burst(src, dst, 0.0, 0.0, 0),
        other => return Err(l.err(1, format!("unknown generator `{other}` (main, flow, burst or preset)"))),
    };
    let mut i = 3;
    while i < l.toks.len() {
        let key = &l.toks[i];
        let allowed: &[&str] = match kw {
            "main" => &["dscp"],
            "flow" => &["load", "size", "dscp", "proto", "measured"],
            _ => &["load", "period", "count", "dscp"],
        };
        if !allowed.contains(&key.text) {
            return Err(l.err(key.col, format!("unknown {kw} attribute `{}`", key.text)));
        }
        match key.text {
            "load" => g.load_percent = l.parse(i + 1, "load percent")?,
            "size" => g.frame_size = l.parse(i + 1, "frame size")?,
            "dscp" => g.dscp = l.parse(i + 1, "dscp")?,
            "measured" => {
                g.measured = true;
                i += 1;
                continue;
            }
            "proto" => {
                let t = l.arg(i + 1, "protocol")?;
                g.protocol = match t.text {
                    "icmp" => PROTO_ICMP,
                    "tcp" => PROTO_TCP,
                    "udp" => PROTO_UDP,
                    other => return Err(l.err(t.col, format!("unknown protocol `{other}`"))),
                };
            }
            "period" | "count" => {
                let GeneratorKind::PeriodicBurst { period_secs, burst_count } = &mut g.kind else { unreachable!() };
                if key.text == "period" {
                    *period_secs = l.parse(i + 1, "period in seconds")?;
                } else {
                    *burst_count = l.parse(i + 1, "burst count")?;
                }
            }
            _ => unreachable!(),
        }
        i += 2;
    }
    if kw == "main" {
        sc.main_flows.push(MainFlow { src: NodeId(src), dst: NodeId(dst), dscp: g.dscp });
        return Ok(());
    }
    g.validate().map_err(|m| l.err(1, m))?;
    sc.background.push(g);
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut section: Option<&str> = None;
    let mut seen = Vec::new();
    let mut preset: Option<String> = None;
    let mut inline = String::new();

    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let toks = tokens(body);
        if toks.is_empty() {
            continue;
        }
        let l = Line { no: i + 1, end_col: body.trim_end().len() + 1, toks };
        let first = &l.toks[0];
        if first.text.starts_with('[') {
            let name = first.text.trim_start_matches('[').trim_end_matches(']');
            if !first.text.ends_with(']') || l.toks.len() > 1 {
                return Err(l.err(first.col, "malformed section header"));
            }
            let known = ["topology", "generators", "acl", "thresholds", "schedule", "run", "output"];
            let Some(&name) = known.iter().find(|k| **k == name) else {
                return Err(l.err(first.col, format!("unknown section `{name}`")));
            };
            if seen.contains(&name) {
                return Err(l.err(first.col, format!("section `{name}` appears twice")));
            }
            seen.push(name);
            section = Some(name);
            continue;
        }
        let Some(sec) = section else {
            return Err(l.err(first.col, "content before the first section"));
        };
        let key = first.text;
        match sec {
            "topology" => {
                if key == "preset" {
                    let name: String = l.single("preset name")?;
                    preset_document(&name).map_err(|e| l.err(l.toks[1].col, e.to_string()))?;
                    if preset.replace(name).is_some() {
                        return Err(l.err(first.col, "topology preset given twice"));
                    }
                } else {
                    let _ = writeln!(inline, "{}", body.trim());
                }
            }
            "generators" => parse_generator(&l, &mut sc)?,
            "acl" => {
                if key != "bind" {
                    return Err(l.err(first.col, format!("unknown acl statement `{key}`")));
                }
                let ep_tok = l.arg(1, "<node>:<port>")?;
                let port = parse_endpoint(ep_tok.text).ok_or_else(|| l.err(ep_tok.col, format!("bad port `{}`", ep_tok.text)))?;
                let path = l.arg(2, "acl file path")?.text.to_string();
                l.no_more(3)?;
                sc.bindings.push(Binding { port, path });
            }
            "thresholds" => match key {
                "link_util" => sc.thresholds.link_util = l.single("fraction")?,
                "port_util" => sc.thresholds.port_util = Some(l.single("fraction")?),
                "subnet_avg_util" => sc.thresholds.subnet_avg_util = Some(l.single("fraction")?),
                "clear_margin" => sc.thresholds.clear_margin = l.single("fraction")?,
                other => return Err(l.err(first.col, format!("unknown threshold `{other}`"))),
            },
            "schedule" => match key {
                "start_delay" => sc.start_delay = l.single("seconds")?,
                "duration" => sc.duration = l.single("seconds")?,
                "drain" => sc.drain = l.single("seconds")?,
                "duration_scale" => sc.duration_scale = l.single("scale factor")?,
                other => return Err(l.err(first.col, format!("unknown schedule key `{other}`"))),
            },
            "run" => match key {
                "mode" => {
                    let t = l.arg(1, "mode")?;
                    l.no_more(2)?;
                    sc.mode = match t.text {
                        "trial" => Mode::Trial,
                        "sweep" => Mode::Sweep,
                        "throughput" => Mode::Throughput,
                        "compare" => Mode::Compare,
                        other => return Err(l.err(t.col, format!("unknown mode `{other}`"))),
                    };
                }
                "seed" => sc.seed = l.single("seed")?,
                "loads" => sc.loads = l.list("load percent")?,
                "sizes" => sc.sizes = l.list("frame size")?,
                "trials" => sc.trials = l.single("trial count")?,
                "guard" => sc.guard = l.on_off()?,
                "guard_threshold" => sc.guard_threshold = l.single("fraction")?,
                "queue_capacity" => sc.queue_capacity = l.single("frame count")?,
                other => return Err(l.err(first.col, format!("unknown run key `{other}`"))),
            },
            "output" => match key {
                "dir" => sc.output_dir = Some(l.single("directory")?),
                "format" => {
                    let t = l.arg(1, "format")?;
                    l.no_more(2)?;
                    sc.format = t.text.parse().map_err(|m: String| l.err(t.col, m))?;
                }
                other => return Err(l.err(first.col, format!("unknown output key `{other}`"))),
            },
            _ => unreachable!(),
        }
    }

    sc.topology = match (preset, inline.is_empty()) {
        (Some(p), true) => TopologySource::Preset(p),
        (None, false) => {
            load_topology(&inline).map_err(|e| ScenarioError::Semantic(format!("inline topology: {e}")))?;
            TopologySource::Inline(inline)
        }
        (Some(_), false) => return Err(ScenarioError::Semantic("topology has both a preset and inline statements".into())),
        (None, true) => return Err(ScenarioError::Semantic("scenario has no topology".into())),
    };
    sc.sweep_spec().validate().map_err(|e| ScenarioError::Semantic(e.to_string()))?;
    sc.thresholds.validate().map_err(|e| ScenarioError::Semantic(e.to_string()))?;
    Ok(sc)
}

fn parse_endpoint(s: &str) -> Option<Endpoint> {
    let (n, p) = s.split_once(':')?;
    Some(Endpoint::new(n.parse().ok()?, p.parse().ok()?))
}

pub fn load_scenario(path: &FsPath) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

impl Scenario {
    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        let doc = match &self.topology {
            TopologySource::Preset(p) => preset_document(p).map_err(|e| ScenarioError::Semantic(e.to_string()))?,
            TopologySource::Inline(d) => d.as_str(),
        };
        load_topology(doc).map_err(|e| ScenarioError::Semantic(e.to_string()))
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            loads: self.loads.clone(),
            frame_sizes: self.sizes.clone(),
            trials: self.trials,
            trial_duration: self.duration,
            duration_scale: self.duration_scale,
            start_delay: self.start_delay,
            drain: self.drain,
            base_seed: self.seed,
            guard: self.guard,
            guard_threshold: self.guard_threshold,
        }
    }

    /// Builds the workload, reading ACL files relative to `base_dir`.
    pub fn workload(&self, base_dir: &FsPath) -> Result<Workload, ScenarioError> {
        let topology = self.topology()?;
        let mut w = match &self.workload_preset {
            Some(name) => {
                let mut w = Workload::preset(name).map_err(|e| ScenarioError::Semantic(e.to_string()))?;
                w.topology = topology;
                w
            }
            None => Workload::new(topology),
        };
        w.main_flows.extend(self.main_flows.iter().copied());
        w.background.extend(self.background.iter().cloned());
        w.thresholds = self.thresholds.clone();
        w.queue_capacity = self.queue_capacity;
        for flow in w.main_flows.iter().map(|m| (m.src, m.dst)).chain(w.background.iter().map(|g| (g.src, g.dst))) {
            for n in [flow.0, flow.1] {
                if !w.topology.has_node(n) {
                    return Err(ScenarioError::Semantic(format!("generator {}->{} names unknown node {n}", flow.0, flow.1)));
                }
            }
        }
        for b in &self.bindings {
            let ep = b.port;
            if !w.topology.has_node(ep.node) || (ep.port.0 != 0 && w.topology.link_at(ep).is_none()) {
                return Err(ScenarioError::Semantic(format!("acl binding names port {ep}, which does not exist")));
            }
            let path: PathBuf = base_dir.join(&b.path);
            let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
            let acl_err = |source| ScenarioError::Acl { path: b.path.clone(), source };
            let rules = parse_acl(&text).map_err(acl_err)?;
            let mut stack = AclStack::from_rules(format!("{}@{ep}", b.path), rules).map_err(acl_err)?;
            stack.bind(ep).map_err(acl_err)?;
            w.stacks.push(stack);
        }
        Ok(w)
    }

    /// Canonical text; parsing it gives back an equal scenario.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        o.push_str("[topology]\n");
        match &self.topology {
            TopologySource::Preset(p) => {
                let _ = writeln!(o, "preset {p}");
            }
            TopologySource::Inline(d) => o.push_str(d),
        }
        o.push_str("\n[generators]\n");
        if let Some(p) = &self.workload_preset {
            let _ = writeln!(o, "preset {p}");
        }
        for m in &self.main_flows {
            let _ = writeln!(o, "main {} {} dscp {}", m.src, m.dst, m.dscp);
        }
        for g in &self.background {
            match g.kind {
                GeneratorKind::Constant => {
                    let _ = write!(
                        o,
                        "flow {} {} load {} size {} dscp {} proto {}",
                        g.src,
                        g.dst,
                        g.load_percent,
                        g.frame_size,
                        g.dscp,
                        protocol_name(g.protocol)
                    );
                    if g.measured {
                        o.push_str(" measured");
                    }
                    o.push('\n');
                }
                GeneratorKind::PeriodicBurst { period_secs, burst_count } => {
                    let _ = writeln!(
                        o,
                        "burst {} {} load {} period {} count {} dscp {}",
                        g.src, g.dst, g.load_percent, period_secs, burst_count, g.dscp
                    );
                }
            }
        }
        if !self.bindings.is_empty() {
            o.push_str("\n[acl]\n");
            for b in &self.bindings {
                let _ = writeln!(o, "bind {} {}", b.port, b.path);
            }
        }
        let t = &self.thresholds;
        let _ = writeln!(o, "\n[thresholds]\nlink_util {}", t.link_util);
        if let Some(p) = t.port_util {
            let _ = writeln!(o, "port_util {p}");
        }
        if let Some(s) = t.subnet_avg_util {
            let _ = writeln!(o, "subnet_avg_util {s}");
        }
        let _ = writeln!(o, "clear_margin {}", t.clear_margin);
        let _ = writeln!(
            o,
            "\n[schedule]\nstart_delay {}\nduration {}\ndrain {}\nduration_scale {}",
            self.start_delay, self.duration, self.drain, self.duration_scale
        );
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(
            o,
            "\n[run]\nmode {}\nseed {}\nloads {}\nsizes {}\ntrials {}\nguard {}\nguard_threshold {}\nqueue_capacity {}",
            self.mode.name(),
            self.seed,
            join(self.loads.iter().map(|l| l.to_string()).collect()),
            join(self.sizes.iter().map(|s| s.to_string()).collect()),
            self.trials,
            if self.guard { "on" } else { "off" },
            self.guard_threshold,
            self.queue_capacity
        );
        o.push_str("\n[output]\n");
        if let Some(d) = &self.output_dir {
            let _ = writeln!(o, "dir {d}");
        }
        let _ = writeln!(o, "format {}", if self.format == Format::Json { "json" } else { "csv" });
        o
    }
}
