use aclsim_core::bench::{frame_loss_sweep, guard_comparison, throughput_test, SweepSpec, Workload};

fn quick(loads: Vec<f64>, sizes: Vec<u32>, trials: u32) -> SweepSpec {
    SweepSpec {
        loads,
        frame_sizes: sizes,
        trials,
        trial_duration: 0.05,
        duration_scale: 1.0,
        start_delay: 0.0,
        drain: 0.05,
        ..SweepSpec::default()
    }
}

#[test]
fn sweep_rows_are_size_major_and_average_their_trials() {
    let w = Workload::preset("line3").unwrap();
    let spec = quick(vec![90.0, 60.0, 80.0], vec![1518, 512], 3);
    let r = frame_loss_sweep(&w, &spec).unwrap();
    let cells: Vec<(u32, f64)> = r.rows.iter().map(|row| (row.frame_size_bytes, row.load_pct)).collect();
    assert_eq!(cells, [(1518, 90.0), (1518, 60.0), (1518, 80.0), (512, 90.0), (512, 60.0), (512, 80.0)]);
    assert_eq!(r.trials.len(), 18);
    for (i, row) in r.rows.iter().enumerate() {
        let ts = &r.trials[i * 3..(i + 1) * 3];
        assert!(ts.iter().all(|t| t.frame_size == row.frame_size_bytes && t.load_pct == row.load_pct));
        assert_eq!(ts.iter().map(|t| t.trial).collect::<Vec<_>>(), [1, 2, 3]);
        let mean = ts.iter().map(|t| 100.0 * t.frames_lost as f64 / t.tx_frames as f64).sum::<f64>() / 3.0;
        assert!((row.frame_loss_pct - mean).abs() < 1e-12);
        assert!(ts.iter().all(|t| t.conserved && t.in_flight == 0));
        assert_eq!((row.nodes, row.links), (3, 2));
    }
}

#[test]
fn throughput_agrees_with_a_full_sweep() {
    let w = Workload::preset("line3").unwrap();
    let loads: Vec<f64> = (0..=12).map(|i| 66.0 + i as f64).collect();
    let spec = quick(loads.clone(), vec![512, 1518], 2);
    let found = throughput_test(&w, &spec).unwrap();
    let full = frame_loss_sweep(&w, &spec).unwrap();
    for f in &found {
        let best = full
            .rows
            .iter()
            .filter(|r| r.frame_size_bytes == f.frame_size_bytes)
            .filter(|r| {
                full.trials
                    .iter()
                    .filter(|t| t.frame_size == r.frame_size_bytes && t.load_pct == r.load_pct)
                    .all(|t| t.frames_lost == 0)
            })
            .map(|r| r.load_pct)
            .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))));
        assert_eq!(f.throughput_pct, best, "size {}", f.frame_size_bytes);
    }
}

#[test]
fn comparison_runs_both_arms_on_the_same_seeds() {
    let w = Workload::preset("twopath").unwrap();
    let spec = SweepSpec { duration_scale: 0.002, ..quick(vec![85.0], vec![1518], 2) };
    let c = guard_comparison(&w, &spec).unwrap();
    let seeds = |r: &aclsim_core::bench::SweepResult| r.trials.iter().map(|t| t.seed).collect::<Vec<_>>();
    assert_eq!(seeds(&c.baseline), seeds(&c.guarded));
    assert_eq!(c.baseline.trials.iter().map(|t| t.tx_frames).collect::<Vec<_>>(), c.guarded.trials.iter().map(|t| t.tx_frames).collect::<Vec<_>>());
    let d = &c.delta[0];
    assert_eq!(d.loss_delta_pct, d.guarded_loss_pct - d.baseline_loss_pct);
    assert_eq!(d.oversub_delta, d.guarded_oversub_frames as i64 - d.baseline_oversub_frames as i64);
}

#[test]
fn invalid_specs_are_rejected() {
    let w = Workload::preset("single").unwrap();
    assert!(frame_loss_sweep(&w, &quick(vec![], vec![512], 1)).is_err());
    assert!(frame_loss_sweep(&w, &quick(vec![50.0], vec![512], 0)).is_err());
    assert!(frame_loss_sweep(&w, &quick(vec![150.0], vec![512], 1)).is_err());
    assert!(throughput_test(&w, &quick(vec![50.0], vec![10], 1)).is_err());
}
