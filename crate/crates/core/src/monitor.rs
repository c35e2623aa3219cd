//! Windowed utilization metering and threshold state.
//!
//! Every link direction has a meter of tumbling windows aligned to t = 0.
//! A meter records busy (serializing) time, which bounds carried load by
//! the line rate, and offered bits, which are unbounded. Ports are metered
//! through their link: a port's egress is the direction leaving it, its
//! ingress the direction arriving at it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;
use crate::topology::{LinkDir, LinkId, Topology};

pub const DEFAULT_WINDOW_SECS: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("meter {meter} saw time {at} after {last}")]
    TimeRegression { meter: LinkDir, at: SimTime, last: SimTime },
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub link_util: f64,
    pub port_util: Option<f64>,
    pub subnet_avg_util: Option<f64>,
    pub clear_margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { link_util: 0.9, port_util: None, subnet_avg_util: None, clear_margin: 0.1 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let check = |name: &str, v: f64| {
            if !(v > 0.0 && v <= 1.0) {
                return Err(MonitorError::InvalidThresholds(format!("{name} {v} outside (0, 1]")));
            }
            if v - self.clear_margin <= 0.0 {
                return Err(MonitorError::InvalidThresholds(format!("{name} {v} minus clear margin {} is not positive", self.clear_margin)));
            }
            Ok(())
        };
        if !(self.clear_margin >= 0.0) {
            return Err(MonitorError::InvalidThresholds("clear margin is negative".into()));
        }
        check("link_util", self.link_util)?;
        if let Some(p) = self.port_util {
            check("port_util", p)?;
        }
        if let Some(s) = self.subnet_avg_util {
            check("subnet_avg_util", s)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Link,
    Port,
    Subnet,
}

/// A below-to-above threshold crossing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub t: f64,
    pub scope: Scope,
    pub id: String,
    pub util: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubnetState {
    Clear,
    Congested,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowSample {
    pub busy_ps: u64,
    pub offered_bits: u64,
}

#[derive(Clone, Debug)]
struct Meter {
    rate_bps: u64,
    samples: Vec<WindowSample>,
    last_record: SimTime,
    total_bits: u64,
}

impl Meter {
    fn slot(&mut self, k: usize) -> &mut WindowSample {
        if self.samples.len() <= k {
            self.samples.resize(k + 1, WindowSample::default());
        }
        &mut self.samples[k]
    }

    fn sample(&self, k: usize) -> WindowSample {
        self.samples.get(k).copied().unwrap_or_default()
    }
}

/// Hysteresis automaton: goes above when `value > on`, back below when
/// `value < on - margin`. Returns true on a below-to-above transition.
fn step(above: &mut bool, value: f64, on: f64, margin: f64) -> bool {
    if !*above && value > on {
        *above = true;
        return true;
    }
    if *above && value < on - margin {
        *above = false;
    }
    false
}

#[derive(Clone, Debug)]
pub struct Monitor {
    window: SimTime,
    thresholds: Thresholds,
    dirs: Vec<LinkDir>,
    index: BTreeMap<LinkDir, usize>,
    /// Port names per direction: (egress port of the sender, ingress port of the receiver).
    port_names: Vec<(String, String)>,
    meters: Vec<Meter>,
    link_above: Vec<bool>,
    port_out_above: Vec<bool>,
    port_in_above: Vec<bool>,
    subnets: Vec<(String, Vec<usize>)>,
    subnet_state: Vec<SubnetState>,
    alerts: Vec<Alert>,
}

impl Monitor {
    pub fn new(topology: &Topology, window: SimTime, thresholds: Thresholds) -> Result<Self, MonitorError> {
        thresholds.validate()?;
        if window == SimTime::ZERO {
            return Err(MonitorError::InvalidThresholds("window length must be positive".into()));
        }
        let n = topology.dir_count();
        let dirs: Vec<LinkDir> = (0..n).map(|i| topology.link_dir_at(i)).collect();
        let index = dirs.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut meters = Vec::with_capacity(n);
        let mut port_names = Vec::with_capacity(n);
        for d in &dirs {
            let link = topology.link(d.link).expect("dir of a known link");
            let (tx, rx) = link.ends(d.dir);
            meters.push(Meter { rate_bps: link.rate_bps, samples: Vec::new(), last_record: SimTime::ZERO, total_bits: 0 });
            port_names.push((format!("{tx}:out"), format!("{rx}:in")));
        }
        let subnets: Vec<(String, Vec<usize>)> = topology
            .subnetworks()
            .iter()
            .map(|(name, links)| (name.clone(), links.iter().map(|l| topology.link_pos(*l).unwrap()).collect()))
            .collect();
        Ok(Monitor {
            window,
            thresholds,
            dirs,
            index,
            port_names,
            meters,
            link_above: vec![false; n],
            port_out_above: vec![false; n],
            port_in_above: vec![false; n],
            subnet_state: vec![SubnetState::Clear; subnets.len()],
            subnets,
            alerts: Vec::new(),
        })
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn index_of(&self, ld: LinkDir) -> Result<usize, MonitorError> {
        self.index.get(&ld).copied().ok_or(MonitorError::UnknownLink(ld.link))
    }

    fn window_of(&self, at: SimTime) -> usize {
        (at.as_ps() / self.window.as_ps()) as usize
    }

    /// Accounts a frame whose first bit leaves at `at` on the given direction.
    pub fn record_serialization(&mut self, ld: LinkDir, bits: u64, at: SimTime) -> Result<(), MonitorError> {
        let i = self.index_of(ld)?;
        self.record_serialization_idx(i, bits, at)
    }

    pub fn record_serialization_idx(&mut self, i: usize, bits: u64, at: SimTime) -> Result<(), MonitorError> {
        let window = self.window.as_ps();
        let first = self.window_of(at);
        let meter = &mut self.meters[i];
        if at < meter.last_record {
            return Err(MonitorError::TimeRegression { meter: self.dirs[i], at, last: meter.last_record });
        }
        meter.last_record = at;
        meter.total_bits += bits;
        let mut remaining = SimTime::transmission(bits, meter.rate_bps).as_ps();
        let mut k = first;
        let mut offset = at.as_ps() - first as u64 * window;
        while remaining > 0 {
            let room = window - offset;
            let take = remaining.min(room);
            let slot = meter.slot(k);
            slot.busy_ps = (slot.busy_ps + take).min(window);
            remaining -= take;
            offset = 0;
            k += 1;
        }
        Ok(())
    }

    /// Accounts bits offered to a direction (carried or not).
    pub fn record_offered_idx(&mut self, i: usize, bits: u64, at: SimTime) {
        let k = self.window_of(at);
        self.meters[i].slot(k).offered_bits += bits;
    }

    pub fn sample_idx(&self, i: usize, window_index: usize) -> WindowSample {
        self.meters[i].sample(window_index)
    }

    fn util_of(&self, i: usize, k: usize) -> f64 {
        self.meters[i].sample(k).busy_ps as f64 / self.window.as_ps() as f64
    }

    /// Carried utilization of the last window completed before `at`.
    pub fn utilization(&self, ld: LinkDir, at: SimTime) -> Result<f64, MonitorError> {
        Ok(self.utilization_idx(self.index_of(ld)?, at))
    }

    pub fn utilization_idx(&self, i: usize, at: SimTime) -> f64 {
        match self.window_of(at).checked_sub(1) {
            Some(k) => self.util_of(i, k),
            None => 0.0,
        }
    }

    /// Offered bits over capacity for the last window completed before `at`.
    pub fn offered_ratio_idx(&self, i: usize, at: SimTime) -> f64 {
        match self.window_of(at).checked_sub(1) {
            Some(k) => {
                let m = &self.meters[i];
                let cap = m.rate_bps as f64 * self.window.as_secs();
                m.sample(k).offered_bits as f64 / cap
            }
            None => 0.0,
        }
    }

    /// Every direction's carried utilization for the last completed window.
    pub fn loads(&self, at: SimTime) -> Vec<f64> {
        (0..self.meters.len()).map(|i| self.utilization_idx(i, at)).collect()
    }

    pub fn total_bits(&self, ld: LinkDir) -> Result<u64, MonitorError> {
        Ok(self.meters[self.index_of(ld)?].total_bits)
    }

    pub fn link_above(&self, ld: LinkDir) -> Result<bool, MonitorError> {
        Ok(self.link_above[self.index_of(ld)?])
    }

    pub fn subnet_state(&self, name: &str) -> Option<SubnetState> {
        self.subnets.iter().position(|(n, _)| n == name).map(|i| self.subnet_state[i])
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn push_alert(&mut self, alert: Alert) {
        self.alerts.push(alert);
    }

    /// Runs every hysteresis automaton on the window that ends at `at` and
    /// returns the alerts raised.
    pub fn evaluate_thresholds(&mut self, at: SimTime) -> Vec<Alert> {
        let Some(k) = self.window_of(at).checked_sub(1) else {
            return Vec::new();
        };
        let t = at.as_secs();
        let th = self.thresholds.clone();
        let mut raised = Vec::new();
        let utils: Vec<f64> = (0..self.meters.len()).map(|i| self.util_of(i, k)).collect();

        for (i, &u) in utils.iter().enumerate() {
            if step(&mut self.link_above[i], u, th.link_util, th.clear_margin) {
                raised.push(Alert { t, scope: Scope::Link, id: self.dirs[i].to_string(), util: u, threshold: th.link_util });
            }
        }
        if let Some(p) = th.port_util {
            for (i, &u) in utils.iter().enumerate() {
                if step(&mut self.port_out_above[i], u, p, th.clear_margin) {
                    raised.push(Alert { t, scope: Scope::Port, id: self.port_names[i].0.clone(), util: u, threshold: p });
                }
                if step(&mut self.port_in_above[i], u, p, th.clear_margin) {
                    raised.push(Alert { t, scope: Scope::Port, id: self.port_names[i].1.clone(), util: u, threshold: p });
                }
            }
        }
        if let Some(s) = th.subnet_avg_util {
            for (si, (name, members)) in self.subnets.iter().enumerate() {
                let mean = members.iter().map(|&pos| utils[2 * pos].max(utils[2 * pos + 1])).sum::<f64>() / members.len() as f64;
                let state = &mut self.subnet_state[si];
                match *state {
                    SubnetState::Clear if mean >= s => {
                        *state = SubnetState::Congested;
                        raised.push(Alert { t, scope: Scope::Subnet, id: name.clone(), util: mean, threshold: s });
                    }
                    SubnetState::Congested if mean < s - th.clear_margin => *state = SubnetState::Clear,
                    _ => {}
                }
            }
        }
        self.alerts.extend(raised.iter().cloned());
        raised
    }
}
