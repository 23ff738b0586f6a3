//! Reproducible random workload generation.
//!
//! Arrival times are uniform over an arrival window, priorities, kernels and
//! image sizes uniform over their menus, all drawn from the self-contained
//! [`SplitMix64`] generator so a seed fully determines the workload on every
//! platform. Workloads round-trip through a plain text format for replay.

use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::exec::ExecError;
use crate::kernel::{KernelId, KernelSpec};
use crate::rng::SplitMix64;
use crate::task::{Task, TaskId};
use crate::time::SimTime;

/// Arrival-window presets, from the study's 0.1 / 0.5 / 0.8 minute rates.
pub const RATE_PRESETS: [(&str, SimTime); 3] = [
    ("busy", SimTime::from_secs(6)),
    ("medium", SimTime::from_secs(30)),
    ("idle", SimTime::from_secs(48)),
];

/// Square image-size presets used by the sweep.
pub const STUDY_SIZES: [(u32, u32); 5] =
    [(200, 200), (300, 300), (400, 400), (500, 500), (600, 600)];

pub fn preset_window(name: &str) -> Option<SimTime> {
    RATE_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(_, w)| w)
}

/// One drawable entry of the kernel menu: a kernel plus the iteration-count
/// argument this entry fixes.
#[derive(Debug, Clone)]
pub struct MenuEntry {
    pub kernel: Arc<KernelSpec>,
    pub iters: i64,
}

/// The study's four-entry menu: Median Blur with one, two or three
/// iterations (one bitstream — the iteration count is a scalar argument) and
/// single-iteration Gaussian Blur on its own bitstream.
pub fn study_menu() -> Vec<MenuEntry> {
    study_menu_with(KernelSpec::median_blur(), KernelSpec::gaussian_blur())
}

pub fn study_menu_with(mb: Arc<KernelSpec>, gb: Arc<KernelSpec>) -> Vec<MenuEntry> {
    vec![
        MenuEntry {
            kernel: Arc::clone(&mb),
            iters: 1,
        },
        MenuEntry {
            kernel: Arc::clone(&mb),
            iters: 2,
        },
        MenuEntry {
            kernel: mb,
            iters: 3,
        },
        MenuEntry {
            kernel: gb,
            iters: 1,
        },
    ]
}

/// Everything [`generate`] needs. Output is a pure function of this value.
#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub n_tasks: u32,
    /// Arrival window: arrivals are uniform over `[0, window]`.
    pub window: SimTime,
    pub sizes: Vec<(u32, u32)>,
    pub n_priorities: u8,
    pub menu: Vec<MenuEntry>,
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    Config(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown kernel id {id}")]
    UnknownKernel { line: usize, id: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Draws `n_tasks` tasks, sorted by `(arrival, id)`. Ids are assigned in
/// generation order, so equal arrival instants keep the draw order. The
/// per-task draw order is fixed: arrival, priority, kernel, size.
pub fn generate(config: &WorkloadConfig) -> Result<Vec<Task>, WorkloadError> {
    if config.menu.is_empty() {
        return Err(WorkloadError::Config("kernel menu is empty".into()));
    }
    if config.sizes.is_empty() {
        return Err(WorkloadError::Config("size menu is empty".into()));
    }
    if config.window == SimTime::ZERO {
        return Err(WorkloadError::Config("arrival window is zero".into()));
    }
    let mut rng = SplitMix64::new(config.seed);
    let mut tasks = Vec::with_capacity(config.n_tasks as usize);
    for id in 0..config.n_tasks {
        let arrival = SimTime::from_micros(rng.below(config.window.as_micros() + 1));
        let priority = rng.below(u64::from(config.n_priorities)) as u8;
        let entry = &config.menu[rng.below(config.menu.len() as u64) as usize];
        let (h, w) = config.sizes[rng.below(config.sizes.len() as u64) as usize];
        let task = Task::new(
            TaskId(id),
            Arc::clone(&entry.kernel),
            vec![i64::from(h), i64::from(w), entry.iters],
            priority,
            arrival,
        )?;
        tasks.push(task);
    }
    tasks.sort_by_key(|t| (t.arrival, t.id));
    Ok(tasks)
}

/// Writes one task per line: `id,arrival_us,priority,kernel,h,w,iters`.
pub fn write_workload(tasks: &[Task], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# id,arrival_us,priority,kernel,h,w,iters")?;
    for t in tasks {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.id, t.arrival, t.priority, t.kernel.id, t.args[0], t.args[1], t.args[2]
        )?;
    }
    Ok(())
}

/// Reads a workload written by [`write_workload`]. `kernels` supplies the
/// kernel definitions the file's kernel ids refer to.
pub fn read_workload(
    input: impl BufRead,
    kernels: &[Arc<KernelSpec>],
) -> Result<Vec<Task>, WorkloadError> {
    let mut tasks = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let n = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(WorkloadError::Parse {
                line: n,
                msg: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let parse = |field: &str, what: &str| -> Result<i64, WorkloadError> {
            field
                .trim()
                .parse::<i64>()
                .map_err(|e| WorkloadError::Parse {
                    line: n,
                    msg: format!("bad {what}: {e}"),
                })
        };
        let id = parse(fields[0], "id")?;
        let arrival = parse(fields[1], "arrival")?;
        let priority = parse(fields[2], "priority")?;
        let kernel_id = parse(fields[3], "kernel id")?;
        let h = parse(fields[4], "height")?;
        let w = parse(fields[5], "width")?;
        let iters = parse(fields[6], "iters")?;
        if !(0..=u32::MAX as i64).contains(&id) || arrival < 0 || !(0..=255).contains(&priority) {
            return Err(WorkloadError::Parse {
                line: n,
                msg: "field out of range".into(),
            });
        }
        let kernel = kernels
            .iter()
            .find(|k| i64::from(k.id.0) == kernel_id)
            .ok_or(WorkloadError::UnknownKernel {
                line: n,
                id: kernel_id as u16,
            })?;
        tasks.push(Task::new(
            TaskId(id as u32),
            Arc::clone(kernel),
            vec![h, w, iters],
            priority as u8,
            SimTime::from_micros(arrival as u64),
        )?);
    }
    tasks.sort_by_key(|t| (t.arrival, t.id));
    Ok(tasks)
}

/// The kernel definitions behind [`study_menu`], keyed by id for replay.
pub fn study_kernels() -> Vec<Arc<KernelSpec>> {
    vec![KernelSpec::median_blur(), KernelSpec::gaussian_blur()]
}

/// Distinct kernel ids a menu draws from.
pub fn menu_kernel_ids(menu: &[MenuEntry]) -> Vec<KernelId> {
    let mut ids: Vec<KernelId> = menu.iter().map(|e| e.kernel.id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}
