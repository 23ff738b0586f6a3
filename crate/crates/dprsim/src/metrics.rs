//! Evaluation metrics over completed runs.
//!
//! A [`RunRecord`] is the full outcome of one simulation: configuration
//! snapshot, event trace, per-task lifecycle data and the counters the study
//! reports. The metric functions here are pure post-processing; floating
//! point appears only at this layer.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::TraceLine;
use crate::exec::ExecSegment;
use crate::kernel::KernelId;
use crate::region::RegionId;
use crate::task::{TaskId, TaskState};
use crate::time::SimTime;

/// Provenance of a run, echoed into every output header and CSV row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub rate_label: String,
    pub size_label: String,
    pub rrs: u32,
    pub preemption: bool,
    pub seed: u64,
    pub replica: u32,
}

impl RunMeta {
    pub fn labelled(
        rate: &str,
        size: &str,
        rrs: u32,
        preemption: bool,
        seed: u64,
        replica: u32,
    ) -> RunMeta {
        RunMeta {
            rate_label: rate.to_string(),
            size_label: size.to_string(),
            rrs,
            preemption,
            seed,
            replica,
        }
    }

    /// Placeholder provenance for hand-built workloads.
    pub fn synthetic() -> RunMeta {
        RunMeta::labelled("custom", "custom", 0, true, 0, 0)
    }
}

/// Final per-task lifecycle data.
#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub id: TaskId,
    pub kernel: KernelId,
    pub priority: u8,
    pub arrival: SimTime,
    pub first_launch: Option<SimTime>,
    pub finish: Option<SimTime>,
    pub state: TaskState,
    pub total_work: u64,
    pub completed_work: u64,
    /// How many times this task was stopped.
    pub preemptions: u32,
    /// Durable iterations discarded across all its preemptions.
    pub re_executed: u64,
    /// Closed execution segments, in order.
    pub segments: Vec<ExecSegment>,
}

/// One kernel launch, in dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchRecord {
    pub seq: u32,
    pub time: SimTime,
    pub task: TaskId,
    pub region: RegionId,
    pub resumed: bool,
}

/// A region grant: the task was taken into service and a region committed to
/// it (its launch may still wait behind a reconfiguration). Service order is
/// commit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitRecord {
    pub time: SimTime,
    pub task: TaskId,
    pub region: RegionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchVia {
    Arrival,
    Queue,
}

/// A dispatch decision: which task was taken for service and the highest
/// priority still queued at that moment (for the priority-respect audit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchRecord {
    pub time: SimTime,
    pub task: TaskId,
    pub priority: u8,
    pub max_other_queued: Option<u8>,
    pub via: DispatchVia,
}

/// One preemption, with its lost-work accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreemptionRecord {
    pub time: SimTime,
    pub region: RegionId,
    pub victim: TaskId,
    pub victim_priority: u8,
    pub incoming: TaskId,
    pub incoming_priority: u8,
    /// Floor progress of the victim at the stop instant.
    pub progress: u64,
    /// Progress its saved context encodes.
    pub durable: u64,
    pub torn: bool,
}

/// One ICAP occupancy interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcapReservation {
    pub region: RegionId,
    pub bitstream: crate::kernel::BitstreamId,
    pub start: SimTime,
    pub end: SimTime,
}

/// Full trace and metrics of one simulation.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub config: SimConfig,
    /// Kernel cost knobs in effect, for the provenance header.
    pub kernel_costs: Vec<(KernelId, &'static str, SimTime, u64)>,
    pub tasks: Vec<TaskRecord>,
    pub trace: Vec<TraceLine>,
    pub launches: Vec<LaunchRecord>,
    pub commits: Vec<CommitRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub preemptions: Vec<PreemptionRecord>,
    pub icap: Vec<IcapReservation>,
    pub n_reconfigs: u32,
    pub n_preemptions: u32,
    pub n_torn_saves: u32,
    pub makespan: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("task {0} never launched")]
    NeverLaunched(TaskId),
    #[error("run contains no tasks")]
    EmptyRun,
    #[error("records are not comparable: {0}")]
    MismatchedConfigs(String),
}

/// Interval from a task's arrival until its kernel first starts on the
/// fabric (after any reconfiguration).
pub fn service_time(task: &TaskRecord) -> Result<SimTime, MetricsError> {
    let launch = task
        .first_launch
        .ok_or(MetricsError::NeverLaunched(task.id))?;
    Ok(launch - task.arrival)
}

/// Per-priority service-time row: task count, mean and accumulated sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityService {
    pub priority: u8,
    pub count: u32,
    pub mean_us: f64,
    pub sum_us: u64,
}

/// Sum and mean of service time per priority level. Rows are emitted for
/// every level of the policy, zeroed where no task of that priority exists.
pub fn per_priority_service(record: &RunRecord) -> Vec<PriorityService> {
    let p = record.config.policy.n_priorities;
    let mut rows: Vec<PriorityService> = (0..p)
        .map(|priority| PriorityService {
            priority,
            count: 0,
            mean_us: 0.0,
            sum_us: 0,
        })
        .collect();
    for task in &record.tasks {
        if let Ok(s) = service_time(task) {
            let row = &mut rows[task.priority as usize];
            row.count += 1;
            row.sum_us += s.as_micros();
        }
    }
    for row in &mut rows {
        if row.count > 0 {
            row.mean_us = row.sum_us as f64 / f64::from(row.count);
        }
    }
    rows
}

/// Completed tasks per second of makespan.
pub fn throughput(record: &RunRecord) -> Result<f64, MetricsError> {
    if record.tasks.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    Ok(record.tasks.len() as f64 / record.makespan.as_secs_f64())
}

/// Optimistic throughput upper bound had every reconfiguration been a full
/// one: the makespan grows by the count of reconfigurations times the
/// full/partial duration difference.
pub fn full_reconfig_bound(
    record: &RunRecord,
    t_full: SimTime,
    t_partial: SimTime,
) -> Result<f64, MetricsError> {
    if record.tasks.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let delta_s = (t_full - t_partial).as_secs_f64();
    Ok(record.tasks.len() as f64
        / (record.makespan.as_secs_f64() + f64::from(record.n_reconfigs) * delta_s))
}

/// Relative throughput cost of enabling preemption, between two runs of the
/// same workload differing only in the preemption flag.
pub fn preemption_overhead(
    non_preemptive: &RunRecord,
    preemptive: &RunRecord,
) -> Result<f64, MetricsError> {
    if non_preemptive.config.policy.preemption_enabled {
        return Err(MetricsError::MismatchedConfigs(
            "first record ran with preemption enabled".into(),
        ));
    }
    if !preemptive.config.policy.preemption_enabled {
        return Err(MetricsError::MismatchedConfigs(
            "second record ran without preemption".into(),
        ));
    }
    let mut np_cfg = non_preemptive.config.clone();
    let mut p_cfg = preemptive.config.clone();
    np_cfg.policy.preemption_enabled = true;
    p_cfg.policy.preemption_enabled = true;
    if np_cfg != p_cfg {
        return Err(MetricsError::MismatchedConfigs(
            "configurations differ beyond the preemption flag".into(),
        ));
    }
    let same_workload = non_preemptive.tasks.len() == preemptive.tasks.len()
        && non_preemptive
            .tasks
            .iter()
            .zip(&preemptive.tasks)
            .all(|(a, b)| {
                a.id == b.id
                    && a.kernel == b.kernel
                    && a.priority == b.priority
                    && a.arrival == b.arrival
                    && a.total_work == b.total_work
            });
    if !same_workload {
        return Err(MetricsError::MismatchedConfigs(
            "records replay different workloads".into(),
        ));
    }
    let t_np = throughput(non_preemptive)?;
    let t_p = throughput(preemptive)?;
    Ok((t_np - t_p) / t_np)
}

/// Sample mean and sample standard deviation; a single observation has zero
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    assert!(!xs.is_empty(), "aggregate of an empty replica set");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

/// Per-priority aggregate across replicas of one configuration.
#[derive(Debug, Clone)]
pub struct PriorityAggregate {
    pub priority: u8,
    pub service_mean_us: MeanStd,
    pub service_sum_us: MeanStd,
}

/// Aggregate of every reported metric across the replicas of one
/// configuration.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub replicas: usize,
    pub per_priority: Vec<PriorityAggregate>,
    pub throughput: MeanStd,
    pub reconfigs: MeanStd,
    pub preemptions: MeanStd,
    pub bound: MeanStd,
}

/// Mean and standard deviation of each metric over replicas of the same
/// configuration.
pub fn aggregate(replicas: &[&RunRecord]) -> Result<Aggregate, MetricsError> {
    let first = replicas.first().ok_or(MetricsError::EmptyRun)?;
    if replicas.iter().any(|r| r.config != first.config) {
        return Err(MetricsError::MismatchedConfigs(
            "replicas span different configurations".into(),
        ));
    }
    let per_run_rows: Vec<Vec<PriorityService>> =
        replicas.iter().map(|r| per_priority_service(r)).collect();
    let n_pri = first.config.policy.n_priorities as usize;
    let per_priority = (0..n_pri)
        .map(|i| PriorityAggregate {
            priority: i as u8,
            service_mean_us: mean_std(
                &per_run_rows
                    .iter()
                    .map(|rows| rows[i].mean_us)
                    .collect::<Vec<_>>(),
            ),
            service_sum_us: mean_std(
                &per_run_rows
                    .iter()
                    .map(|rows| rows[i].sum_us as f64)
                    .collect::<Vec<_>>(),
            ),
        })
        .collect();
    let collect =
        |f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> { replicas.iter().map(|r| f(r)).collect() };
    Ok(Aggregate {
        replicas: replicas.len(),
        per_priority,
        throughput: mean_std(&collect(&|r| throughput(r).unwrap_or(0.0))),
        reconfigs: mean_std(&collect(&|r| f64::from(r.n_reconfigs))),
        preemptions: mean_std(&collect(&|r| f64::from(r.n_preemptions))),
        bound: mean_std(&collect(&|r| {
            full_reconfig_bound(r, r.config.timing.t_full, r.config.timing.t_partial).unwrap_or(0.0)
        })),
    })
}

/// Stable header of the per-run metrics CSV.
pub const RUNS_CSV_HEADER: &str = "rate,size,rrs,preemption,seed,replica,priority,service_mean_us,service_sum_us,throughput_per_s,reconfigs,preemptions,bound_per_s";

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Data rows of the per-run metrics CSV: one row per priority level, with
/// run-level columns repeated. An empty run yields no rows.
pub fn runs_csv_rows(record: &RunRecord) -> Vec<String> {
    if record.tasks.is_empty() {
        return Vec::new();
    }
    let thr = throughput(record).expect("non-empty run");
    let bound = full_reconfig_bound(
        record,
        record.config.timing.t_full,
        record.config.timing.t_partial,
    )
    .expect("non-empty run");
    per_priority_service(record)
        .iter()
        .map(|row| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                record.meta.rate_label,
                record.meta.size_label,
                record.meta.rrs,
                on_off(record.meta.preemption),
                record.meta.seed,
                record.meta.replica,
                row.priority,
                row.mean_us,
                row.sum_us,
                thr,
                record.n_reconfigs,
                record.n_preemptions,
                bound
            )
        })
        .collect()
}

/// Provenance header echoed at the top of every output file: the effective
/// configuration as `# key=value` comment lines.
pub fn config_echo(record: &RunRecord) -> String {
    let mut s = String::new();
    let m = &record.meta;
    let c = &record.config;
    let _ = writeln!(
        s,
        "# rate={} size={} rrs={} preemption={} seed={} replica={} tasks={}",
        m.rate_label,
        m.size_label,
        m.rrs,
        on_off(m.preemption),
        m.seed,
        m.replica,
        record.tasks.len()
    );
    let _ = writeln!(
        s,
        "# priorities={} save_window_us={} preempt_overhead_us={} restore_overhead_us={} t_partial_us={} t_full_us={}",
        c.policy.n_priorities,
        c.timing.save_window,
        c.timing.preempt_overhead,
        c.timing.restore_overhead,
        c.timing.t_partial,
        c.timing.t_full
    );
    for (id, name, cost, stride) in &record.kernel_costs {
        let _ = writeln!(
            s,
            "# kernel.{id}={name} per_iter_cost_us={cost} checkpoint_stride={stride}"
        );
    }
    s
}

/// Renders a complete trace file: provenance header plus one line per trace
/// record.
pub fn trace_file(record: &RunRecord) -> String {
    let mut s = config_echo(record);
    for line in &record.trace {
        let _ = writeln!(s, "{line}");
    }
    s
}
