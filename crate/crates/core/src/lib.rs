//! Deterministic discrete-event network simulator with an ACL engine whose
//! rules can carry a link-load threshold, plus a frame-loss benchmarking
//! harness built on top of it.
//!
//! Module map:
//!
//! - [`packet`]: simulated frames and their header fields
//! - [`acl`]: first-match classification, policing, guard rules, text format
//! - [`topology`]: node/port/link graph and built-in presets
//! - [`monitor`]: windowed link utilization, thresholds and alerts
//! - [`reroute`]: shortest paths, congestion-avoiding reroutes, priority drop
//! - [`sim`]: the event loop
//! - [`bench`]: frame-loss, throughput and guard on/off comparisons
//! - [`scenario`]: scenario file format
//! - [`report`]: CSV and JSON-lines output

pub mod acl;
pub mod bench;
pub mod monitor;
pub mod packet;
pub mod reroute;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod topology;
