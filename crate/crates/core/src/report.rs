//! CSV and JSON renderings of benchmark results. All writers are pure
//! functions of their input, so equal results give byte-identical files.

use serde::Serialize;

use crate::bench::{DeltaRow, SweepRow, ThroughputResult, TrialRecord};

pub const SWEEP_HEADER: &str = "nodes,links,frame_size_bytes,load_pct,frame_loss_pct,max_jitter_us";
pub const TRIALS_HEADER: &str = "trial,frame_size,tx_frames,rx_frames,frames_lost";

fn to_csv<T: Serialize>(header: &[&str], items: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for item in items {
        w.serialize(item).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    to_csv(&SWEEP_HEADER.split(',').collect::<Vec<_>>(), rows)
}

#[derive(Serialize)]
struct TrialLine {
    trial: u32,
    frame_size: u32,
    tx_frames: u64,
    rx_frames: u64,
    frames_lost: u64,
}

pub fn trials_csv<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> String {
    let lines = trials.into_iter().map(|t| TrialLine {
        trial: t.trial,
        frame_size: t.frame_size,
        tx_frames: t.tx_frames,
        rx_frames: t.rx_frames,
        frames_lost: t.frames_lost,
    });
    to_csv(&TRIALS_HEADER.split(',').collect::<Vec<_>>(), lines)
}

/// Trial records grouped by load, loads in first-seen order.
pub fn trials_by_load(trials: &[TrialRecord]) -> Vec<(f64, Vec<&TrialRecord>)> {
    let mut out: Vec<(f64, Vec<&TrialRecord>)> = Vec::new();
    for t in trials {
        match out.iter_mut().find(|(l, _)| *l == t.load_pct) {
            Some((_, v)) => v.push(t),
            None => out.push((t.load_pct, vec![t])),
        }
    }
    out
}

/// `trials_load95.csv`, `trials_load92.5.csv`.
pub fn trials_file_name(load: f64) -> String {
    format!("trials_load{load}.csv")
}

pub fn throughput_csv(results: &[ThroughputResult]) -> String {
    #[derive(Serialize)]
    struct Line {
        frame_size_bytes: u32,
        throughput_pct: Option<f64>,
    }
    to_csv(
        &["frame_size_bytes", "throughput_pct"],
        results.iter().map(|r| Line { frame_size_bytes: r.frame_size_bytes, throughput_pct: r.throughput_pct }),
    )
}

pub fn comparison_csv(rows: &[DeltaRow]) -> String {
    to_csv(
        &[
            "frame_size_bytes",
            "load_pct",
            "baseline_loss_pct",
            "guarded_loss_pct",
            "loss_delta_pct",
            "baseline_oversub_frames",
            "guarded_oversub_frames",
            "oversub_delta",
        ],
        rows,
    )
}

/// One JSON object per line.
pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

pub fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: u32, load: f64) -> TrialRecord {
        TrialRecord {
            trial,
            seed: trial as u64,
            frame_size: 512,
            load_pct: load,
            tx_frames: 100,
            rx_frames: 99,
            frames_lost: 1,
            oversub_frames: 0,
            max_jitter_us: 0.5,
            conserved: true,
            in_flight: 0,
        }
    }

    #[test]
    fn sweep_schema() {
        let rows = vec![SweepRow { nodes: 10, links: 18, frame_size_bytes: 512, load_pct: 85.0, frame_loss_pct: 0.0, max_jitter_us: 0.06 }];
        assert_eq!(sweep_csv(&rows), "nodes,links,frame_size_bytes,load_pct,frame_loss_pct,max_jitter_us\n10,18,512,85.0,0.0,0.06\n");
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn trial_schema_and_grouping() {
        let ts = vec![record(1, 95.0), record(1, 85.0), record(2, 95.0)];
        let groups = trials_by_load(&ts);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, 95.0);
        assert_eq!(trials_csv(groups[0].1.iter().copied()), "trial,frame_size,tx_frames,rx_frames,frames_lost\n1,512,100,99,1\n2,512,100,99,1\n");
        assert_eq!(trials_file_name(95.0), "trials_load95.csv");
        assert_eq!(trials_file_name(92.5), "trials_load92.5.csv");
    }

    #[test]
    fn throughput_none_is_blank() {
        let r = vec![ThroughputResult { frame_size_bytes: 512, throughput_pct: None }, ThroughputResult { frame_size_bytes: 1518, throughput_pct: Some(70.0) }];
        assert_eq!(throughput_csv(&r), "frame_size_bytes,throughput_pct\n512,\n1518,70.0\n");
    }
}
