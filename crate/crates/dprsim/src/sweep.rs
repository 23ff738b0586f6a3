//! The experiment sweep: every combination of arrival rate, image size,
//! region count and preemption flag, replicated with consecutive seeds.
//!
//! Cells run in parallel, each on its own engine instance; rows are emitted
//! in sorted cell order regardless of completion order, so the CSV bytes are
//! a pure function of the sweep configuration.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{SchedPolicy, SimConfig, TimingConfig};
use crate::kernel::KernelSpec;
use crate::metrics::{self, RunMeta, RunRecord};
use crate::sched::{self, SimError};
use crate::time::SimTime;
use crate::workload::{self, MenuEntry, WorkloadConfig};

/// A named arrival window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateSpec {
    pub label: String,
    pub window: SimTime,
}

impl RateSpec {
    pub fn preset(name: &str) -> Option<RateSpec> {
        workload::preset_window(name).map(|window| RateSpec {
            label: name.to_string(),
            window,
        })
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellKey {
    pub rate: RateSpec,
    pub size: (u32, u32),
    pub rrs: u32,
    pub preemption: bool,
}

pub fn size_label(size: (u32, u32)) -> String {
    if size.0 == size.1 {
        size.0.to_string()
    } else {
        format!("{}x{}", size.0, size.1)
    }
}

/// Sweep-wide settings. The defaults reproduce the study grid: three rates,
/// five square sizes, one and two regions, preemption off and on, ten
/// replicas seeded `base_seed + replica`, thirty tasks each.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base_seed: u64,
    pub replicas: u32,
    pub n_tasks: u32,
    pub rates: Vec<RateSpec>,
    pub sizes: Vec<(u32, u32)>,
    pub rrs: Vec<u32>,
    pub preemption: Vec<bool>,
    pub policy: SchedPolicy,
    pub timing: TimingConfig,
    pub menu: Vec<MenuEntry>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base_seed: 15,
            replicas: 10,
            n_tasks: 30,
            rates: ["busy", "medium", "idle"]
                .iter()
                .map(|n| RateSpec::preset(n).expect("preset rates exist"))
                .collect(),
            sizes: workload::STUDY_SIZES.to_vec(),
            rrs: vec![1, 2],
            preemption: vec![false, true],
            policy: SchedPolicy::default(),
            timing: TimingConfig::default(),
            menu: workload::study_menu(),
        }
    }
}

impl SweepConfig {
    /// Cells in output order: rate, size, regions, preemption.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for rate in &self.rates {
            for &size in &self.sizes {
                for &rrs in &self.rrs {
                    for &preemption in &self.preemption {
                        cells.push(CellKey {
                            rate: rate.clone(),
                            size,
                            rrs,
                            preemption,
                        });
                    }
                }
            }
        }
        cells
    }
}

/// All replicas of one cell, in replica order.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub runs: Vec<RunRecord>,
}

/// Complete sweep output, cells in [`SweepConfig::cells`] order.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
}

/// Runs one cell replica.
pub fn run_cell(cfg: &SweepConfig, key: &CellKey, replica: u32) -> Result<RunRecord, SimError> {
    let seed = cfg.base_seed + u64::from(replica);
    let wl = WorkloadConfig {
        seed,
        n_tasks: cfg.n_tasks,
        window: key.rate.window,
        sizes: vec![key.size],
        n_priorities: cfg.policy.n_priorities,
        menu: cfg.menu.clone(),
    };
    let tasks = workload::generate(&wl)
        .map_err(|e| SimError::Config(format!("workload generation failed: {e}")))?;
    let sim = SimConfig {
        regions: key.rrs,
        policy: SchedPolicy {
            preemption_enabled: key.preemption,
            ..cfg.policy
        },
        timing: cfg.timing,
    };
    let meta = RunMeta::labelled(
        &key.rate.label,
        &size_label(key.size),
        key.rrs,
        key.preemption,
        seed,
        replica,
    );
    sched::run(&sim, tasks, meta)
}

/// Runs the whole grid. Cell replicas execute in parallel; the result is
/// ordered and deterministic. If any cell fails, the error reports every
/// failing cell.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput, SimError> {
    let cells = cfg.cells();
    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicas).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(usize, u32, Result<RunRecord, SimError>)> = jobs
        .into_par_iter()
        .map(|(c, r)| (c, r, run_cell(cfg, &cells[c], r)))
        .collect();
    let mut failures: Vec<String> = Vec::new();
    let mut results: Vec<(usize, u32, RunRecord)> = Vec::with_capacity(outcomes.len());
    for (c, r, outcome) in outcomes {
        match outcome {
            Ok(rec) => results.push((c, r, rec)),
            Err(e) => {
                let key = &cells[c];
                failures.push(format!(
                    "{}/{}/{}rr/preemption={}/replica {r}: {e}",
                    key.rate.label,
                    size_label(key.size),
                    key.rrs,
                    on_off(key.preemption)
                ));
            }
        }
    }
    if !failures.is_empty() {
        failures.sort();
        return Err(SimError::Config(format!(
            "{} sweep cell(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    results.sort_by_key(|&(c, r, _)| (c, r));
    let mut out: Vec<CellResult> = cells
        .into_iter()
        .map(|key| CellResult {
            key,
            runs: Vec::with_capacity(cfg.replicas as usize),
        })
        .collect();
    for (c, _, rec) in results {
        out[c].runs.push(rec);
    }
    Ok(SweepOutput {
        config: cfg.clone(),
        cells: out,
    })
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn sweep_echo(cfg: &SweepConfig) -> String {
    let mut s = String::new();
    let rates: Vec<&str> = cfg.rates.iter().map(|r| r.label.as_str()).collect();
    let sizes: Vec<String> = cfg.sizes.iter().map(|&z| size_label(z)).collect();
    let _ = writeln!(
        s,
        "# sweep base_seed={} replicas={} tasks={} rates={} sizes={} rrs={:?} preemption={:?}",
        cfg.base_seed,
        cfg.replicas,
        cfg.n_tasks,
        rates.join("|"),
        sizes.join("|"),
        cfg.rrs,
        cfg.preemption
            .iter()
            .map(|&b| on_off(b))
            .collect::<Vec<_>>(),
    );
    let _ = writeln!(
        s,
        "# priorities={} save_window_us={} preempt_overhead_us={} restore_overhead_us={} t_partial_us={} t_full_us={}",
        cfg.policy.n_priorities,
        cfg.timing.save_window,
        cfg.timing.preempt_overhead,
        cfg.timing.restore_overhead,
        cfg.timing.t_partial,
        cfg.timing.t_full
    );
    let mut seen: Vec<&KernelSpec> = Vec::new();
    for entry in &cfg.menu {
        if !seen.iter().any(|k| k.id == entry.kernel.id) {
            seen.push(&entry.kernel);
        }
    }
    seen.sort_by_key(|k| k.id);
    for k in seen {
        let _ = writeln!(
            s,
            "# kernel.{}={} per_iter_cost_us={} checkpoint_stride={}",
            k.id, k.name, k.per_iter_cost, k.checkpoint_stride
        );
    }
    s
}

impl SweepOutput {
    /// Per-run CSV: header plus one row per (cell, replica, priority).
    pub fn runs_csv(&self) -> String {
        let mut s = sweep_echo(&self.config);
        let _ = writeln!(s, "{}", metrics::RUNS_CSV_HEADER);
        for cell in &self.cells {
            for run in &cell.runs {
                for row in metrics::runs_csv_rows(run) {
                    let _ = writeln!(s, "{row}");
                }
            }
        }
        s
    }

    /// Aggregated CSV: mean and standard deviation of every metric across
    /// replicas, one row per (cell, priority).
    pub fn aggregate_csv(&self) -> String {
        let mut s = sweep_echo(&self.config);
        let _ = writeln!(
            s,
            "rate,size,rrs,preemption,priority,replicas,service_mean_us_mean,service_mean_us_std,\
             service_sum_us_mean,service_sum_us_std,throughput_per_s_mean,throughput_per_s_std,\
             reconfigs_mean,reconfigs_std,preemptions_mean,preemptions_std,bound_per_s_mean,bound_per_s_std"
        );
        for cell in &self.cells {
            let refs: Vec<&RunRecord> = cell.runs.iter().collect();
            let agg = metrics::aggregate(&refs).expect("non-empty replica set");
            for row in &agg.per_priority {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    cell.key.rate.label,
                    size_label(cell.key.size),
                    cell.key.rrs,
                    on_off(cell.key.preemption),
                    row.priority,
                    agg.replicas,
                    row.service_mean_us.mean,
                    row.service_mean_us.std,
                    row.service_sum_us.mean,
                    row.service_sum_us.std,
                    agg.throughput.mean,
                    agg.throughput.std,
                    agg.reconfigs.mean,
                    agg.reconfigs.std,
                    agg.preemptions.mean,
                    agg.preemptions.std,
                    agg.bound.mean,
                    agg.bound.std
                );
            }
        }
        s
    }

    /// Preemption-overhead CSV: one row per (rate, size, rrs), pairing the
    /// preemption-off and -on cells replica by replica.
    pub fn overhead_csv(&self) -> String {
        let mut s = sweep_echo(&self.config);
        let _ = writeln!(s, "rate,size,rrs,replicas,overhead_mean,overhead_std");
        for (key, overheads) in self.paired_overheads() {
            let ms = metrics::mean_std(&overheads);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                key.rate.label,
                size_label(key.size),
                key.rrs,
                overheads.len(),
                ms.mean,
                ms.std
            );
        }
        s
    }

    /// Per-replica preemption overheads for every (rate, size, rrs) with
    /// both preemption cells present.
    pub fn paired_overheads(&self) -> Vec<(CellKey, Vec<f64>)> {
        let mut out = Vec::new();
        for off in &self.cells {
            if off.key.preemption {
                continue;
            }
            let on = self.cells.iter().find(|c| {
                c.key.preemption
                    && c.key.rate == off.key.rate
                    && c.key.size == off.key.size
                    && c.key.rrs == off.key.rrs
            });
            let Some(on) = on else { continue };
            let overheads: Vec<f64> = off
                .runs
                .iter()
                .zip(&on.runs)
                .map(|(np, p)| {
                    metrics::preemption_overhead(np, p).expect("paired cells share workloads")
                })
                .collect();
            if !overheads.is_empty() {
                out.push((on.key.clone(), overheads));
            }
        }
        out
    }

    /// Trace files for every run: `(file name, contents)`.
    pub fn traces(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for cell in &self.cells {
            for run in &cell.runs {
                let name = format!(
                    "trace_{}_{}_{}rr_{}_r{}.txt",
                    run.meta.rate_label,
                    run.meta.size_label,
                    run.meta.rrs,
                    on_off(run.meta.preemption),
                    run.meta.replica
                );
                out.push((name, metrics::trace_file(run)));
            }
        }
        out
    }
}
