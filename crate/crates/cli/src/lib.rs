//! The `aclsim` subcommands as library functions, so tests can drive them
//! without spawning a process.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use aclsim_core::acl::{format_acl, lint_specific_before_general, parse_acl, AclStack};
use aclsim_core::bench::{frame_loss_sweep, guard_comparison, throughput_test, SweepRow, Workload};
use aclsim_core::report;
use aclsim_core::scenario::{parse_scenario, Format, Mode, Scenario};
use aclsim_core::sim::run_trial;
use anyhow::{anyhow, Context, Result};

pub const OUT_ENV: &str = "ACLSIM_OUT";
pub const DEFAULT_OUT_DIR: &str = "aclsim-out";

/// Command-line settings that take precedence over the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration_scale: Option<f64>,
    pub guard: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => anyhow!("file not found: {}", path.display()),
        _ => anyhow!("cannot read {}: {e}", path.display()),
    })
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let text = read(path)?;
    let mut sc = parse_scenario(&text).with_context(|| path.display().to_string())?;
    if let Some(s) = overrides.seed {
        sc.seed = s;
    }
    if let Some(d) = overrides.duration_scale {
        sc.duration_scale = d;
    }
    if let Some(g) = overrides.guard {
        sc.guard = g;
    }
    if let Some(f) = overrides.format {
        sc.format = f;
    }
    sc.sweep_spec().validate().with_context(|| format!("{} after command-line overrides", path.display()))?;
    Ok(sc)
}

fn out_dir(sc: &Scenario, overrides: &Overrides) -> PathBuf {
    if let Some(o) = &overrides.out {
        return o.clone();
    }
    if let Some(d) = &sc.output_dir {
        return PathBuf::from(d);
    }
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs the scenario at `path` and returns the files written.
pub fn cmd_run(path: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let sc = load(path, overrides)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let workload = sc.workload(base).with_context(|| path.display().to_string())?;
    let spec = sc.sweep_spec();
    let json = sc.format == Format::Json;

    let mut files: Vec<(String, String)> = Vec::new();
    match sc.mode {
        Mode::Sweep => {
            let r = frame_loss_sweep(&workload, &spec)?;
            if json {
                files.push(("results.json".into(), report::json(&r.rows)));
                files.push(("trials.json".into(), report::json(&r.trials)));
            } else {
                files.push(("results.csv".into(), report::sweep_csv(&r.rows)));
                for (load, trials) in report::trials_by_load(&r.trials) {
                    files.push((report::trials_file_name(load), report::trials_csv(trials)));
                }
            }
        }
        Mode::Throughput => {
            let r = throughput_test(&workload, &spec)?;
            if json {
                files.push(("throughput.json".into(), report::json(&r)));
            } else {
                files.push(("throughput.csv".into(), report::throughput_csv(&r)));
            }
        }
        Mode::Compare => {
            let r = guard_comparison(&workload, &spec)?;
            if json {
                files.push(("comparison.json".into(), report::json(&r)));
            } else {
                files.push(("comparison.csv".into(), report::comparison_csv(&r.delta)));
                files.push(("baseline.csv".into(), report::sweep_csv(&r.baseline.rows)));
                files.push(("guarded.csv".into(), report::sweep_csv(&r.guarded.rows)));
            }
        }
        Mode::Trial => files.extend(single_trial(&sc, &workload)?),
    }

    let dir = out_dir(&sc, overrides);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))?;
        written.push(p);
    }
    Ok(written)
}

/// One trial at the first configured frame size and load.
fn single_trial(sc: &Scenario, workload: &Workload) -> Result<Vec<(String, String)>> {
    let spec = sc.sweep_spec();
    let (size, load) = (spec.frame_sizes[0], spec.loads[0]);
    let r = run_trial(&workload.config(&spec, size, load), spec.seed(0))?;
    let row = SweepRow {
        nodes: workload.topology.nodes().len(),
        links: workload.topology.links().len(),
        frame_size_bytes: size,
        load_pct: load,
        frame_loss_pct: r.frame_loss_pct(),
        max_jitter_us: r.max_jitter_us(),
    };
    let results = match sc.format {
        Format::Json => ("results.json".to_string(), report::json(&[row])),
        Format::Csv => ("results.csv".to_string(), report::sweep_csv(&[row])),
    };
    Ok(vec![
        results,
        ("counters.json".into(), report::json(&r.counters)),
        ("alerts.jsonl".into(), report::jsonl(&r.alerts)),
        ("reroutes.jsonl".into(), report::jsonl(&r.reroutes)),
    ])
}

/// Canonical listing of the ACL file at `path` followed by lint warnings.
pub fn cmd_acl_check(path: &Path) -> Result<String> {
    let text = read(path)?;
    let rules = parse_acl(&text).with_context(|| path.display().to_string())?;
    let mut out = format_acl(&rules);
    let n = rules.len();
    out.push_str(&format!("{n} rule{}\n", if n == 1 { "" } else { "s" }));
    if rules.is_empty() {
        out.push_str("note: an empty stack cannot be bound to a port\n");
        return Ok(out);
    }
    let stack = AclStack::from_rules(path.display().to_string(), rules)?;
    let warnings = lint_specific_before_general(&stack);
    for w in &warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    if warnings.is_empty() {
        out.push_str("no shadowed rules\n");
    }
    Ok(out)
}
