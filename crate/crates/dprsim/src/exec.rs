//! Execution semantics of checkpointable kernels.
//!
//! A kernel run is modelled as a walk over its nested-loop iteration space:
//! `total_work` inner iterations, each costing `per_iter_cost`, with a
//! durable checkpoint after every `checkpoint_stride`-th inner iteration of a
//! segment. Progress is a single integer; [`index_of`] and [`linearize`] map
//! between that integer and the tuple of surface loop variables stored in a
//! [`Context`].
//!
//! Stops are asynchronous: a preemption landing inside the save window of the
//! latest checkpoint tears that save, and the resume falls back to the
//! previous one (`valid == false`). The lost work per preemption is therefore
//! bounded by one checkpoint stride.

use thiserror::Error;

use crate::config::TimingConfig;
use crate::context::{Context, CONTEXT_CAPACITY};
use crate::kernel::{Extent, KernelSpec};
use crate::region::RegionId;
use crate::task::{Task, TaskId, TaskState};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("invalid kernel arguments: {0}")]
    InvalidArgs(String),
    #[error("progress {progress} outside iteration space of size {total}")]
    OutOfRange { progress: u64, total: u64 },
    #[error("task {0} is not running")]
    NotRunning(TaskId),
    #[error("corrupt context: {0}")]
    CorruptContext(String),
}

/// One nesting level with its resolved trip count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopLevel {
    pub extent: u64,
    pub init: i64,
    pub incr: i64,
}

/// Resolved iteration space of a kernel applied to concrete arguments,
/// outermost level first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopDims {
    levels: Vec<LoopLevel>,
}

impl LoopDims {
    pub fn for_kernel(kernel: &KernelSpec, args: &[i64]) -> Result<LoopDims, ExecError> {
        let mut levels = Vec::with_capacity(kernel.loops.len());
        for tpl in &kernel.loops {
            let extent = match tpl.extent {
                Extent::Const(c) => i64::try_from(c)
                    .map_err(|_| ExecError::InvalidArgs(format!("extent {c} too large")))?,
                Extent::Arg(i) => *args.get(i).ok_or_else(|| {
                    ExecError::InvalidArgs(format!(
                        "kernel {} expects argument {i}, got {} args",
                        kernel.name,
                        args.len()
                    ))
                })?,
            };
            if extent < 1 {
                return Err(ExecError::InvalidArgs(format!(
                    "loop extent {extent} < 1 for kernel {}",
                    kernel.name
                )));
            }
            if tpl.incr == 0 {
                return Err(ExecError::InvalidArgs("loop increment is zero".into()));
            }
            levels.push(LoopLevel {
                extent: extent as u64,
                init: tpl.init,
                incr: tpl.incr,
            });
        }
        if levels.is_empty() {
            return Err(ExecError::InvalidArgs("kernel declares no loops".into()));
        }
        if levels.len() > CONTEXT_CAPACITY {
            return Err(ExecError::InvalidArgs(format!(
                "{} loop variables exceed the context capacity {CONTEXT_CAPACITY}",
                levels.len()
            )));
        }
        let dims = LoopDims { levels };
        dims.total_work_checked()?;
        Ok(dims)
    }

    pub fn levels(&self) -> &[LoopLevel] {
        &self.levels
    }

    /// Product of all trip counts.
    pub fn total_work(&self) -> u64 {
        self.total_work_checked()
            .expect("validated at construction")
    }

    fn total_work_checked(&self) -> Result<u64, ExecError> {
        self.levels
            .iter()
            .try_fold(1u64, |acc, l| acc.checked_mul(l.extent))
            .ok_or_else(|| ExecError::InvalidArgs("iteration space overflows u64".into()))
    }
}

/// Total inner-iteration count of a kernel applied to `args`.
pub fn total_work(kernel: &KernelSpec, args: &[i64]) -> Result<u64, ExecError> {
    Ok(LoopDims::for_kernel(kernel, args)?.total_work())
}

/// Mixed-radix decomposition of a progress count into the surface loop
/// variable tuple (outermost first), mapped through each level's init and
/// increment. `progress == total_work` yields the one-past-the-end tuple.
pub fn index_of(progress: u64, dims: &LoopDims) -> Result<Vec<i64>, ExecError> {
    let total = dims.total_work();
    if progress > total {
        return Err(ExecError::OutOfRange { progress, total });
    }
    let n = dims.levels.len();
    let mut digits = vec![0u64; n];
    let mut rem = progress;
    for i in (1..n).rev() {
        digits[i] = rem % dims.levels[i].extent;
        rem /= dims.levels[i].extent;
    }
    digits[0] = rem;
    dims.levels
        .iter()
        .zip(&digits)
        .map(|(level, &d)| {
            let d = i64::try_from(d).map_err(|_| ExecError::OutOfRange { progress, total })?;
            d.checked_mul(level.incr)
                .and_then(|step| level.init.checked_add(step))
                .ok_or(ExecError::OutOfRange { progress, total })
        })
        .collect()
}

/// Inverse of [`index_of`]: recovers the progress count from a variable
/// tuple.
pub fn linearize(values: &[i64], dims: &LoopDims) -> Result<u64, ExecError> {
    let n = dims.levels.len();
    if values.len() != n {
        return Err(ExecError::CorruptContext(format!(
            "tuple has {} entries, iteration space has {n} levels",
            values.len()
        )));
    }
    let mut acc: u64 = 0;
    for (i, (level, &v)) in dims.levels.iter().zip(values).enumerate() {
        let delta = v - level.init;
        if delta % level.incr != 0 {
            return Err(ExecError::CorruptContext(format!(
                "variable {v} unreachable from init {} by steps of {}",
                level.init, level.incr
            )));
        }
        let digit = delta / level.incr;
        let bound = level.extent + u64::from(i == 0); // outermost may be one past
        if digit < 0 || digit as u64 >= bound {
            return Err(ExecError::CorruptContext(format!(
                "digit {digit} outside [0, {}) at level {i}",
                bound
            )));
        }
        acc = acc * level.extent + digit as u64;
    }
    let total = dims.total_work();
    if acc > total {
        return Err(ExecError::CorruptContext(format!(
            "tuple encodes progress {acc} beyond total {total}"
        )));
    }
    Ok(acc)
}

/// A context with the loop shape recorded but nothing saved yet.
pub fn blank_context(dims: &LoopDims, valid: bool) -> Context {
    let mut ctx = Context::empty();
    for (i, level) in dims.levels.iter().enumerate() {
        ctx.init_vars[i] = level.init;
        ctx.incr_vars[i] = level.incr;
        ctx.vars[i] = level.init;
    }
    ctx.valid = valid;
    ctx
}

/// Builds the context a stop at durable progress `progress` leaves behind.
/// Zero progress means nothing was ever checkpointed.
pub fn capture_context(dims: &LoopDims, progress: u64, valid: bool) -> Result<Context, ExecError> {
    let mut ctx = blank_context(dims, valid);
    if progress > 0 {
        let values = index_of(progress, dims)?;
        for (i, v) in values.iter().enumerate() {
            ctx.vars[i] = *v;
            ctx.saved[i] = true;
        }
    }
    Ok(ctx)
}

/// Progress a resume restores: saved variables come back from the context,
/// unsaved ones from their inits.
pub fn resume_progress(ctx: &Context, dims: &LoopDims) -> Result<u64, ExecError> {
    let n = dims.levels.len();
    for (i, level) in dims.levels.iter().enumerate() {
        if ctx.init_vars[i] != level.init || ctx.incr_vars[i] != level.incr {
            return Err(ExecError::CorruptContext(format!(
                "context loop shape disagrees with the kernel at level {i}"
            )));
        }
    }
    let values: Vec<i64> = (0..n)
        .map(|i| {
            if ctx.saved[i] {
                ctx.vars[i]
            } else {
                ctx.init_vars[i]
            }
        })
        .collect();
    linearize(&values, dims)
}

/// How a segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    Finished,
    Preempted,
}

/// One contiguous stay of a task on a region. `restore` is the context
/// copy-back time spent at the head of the segment (zero for a first
/// launch). While open, `end` and `end_reason` are unset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecSegment {
    pub task: TaskId,
    pub region: RegionId,
    pub start: SimTime,
    pub restore: SimTime,
    pub start_progress: u64,
    pub end: Option<SimTime>,
    pub end_reason: Option<SegmentEnd>,
}

impl ExecSegment {
    /// Instant at which the checkpoint for global iteration `q` was written
    /// in this segment. Meaningful for `q > start_progress`.
    fn checkpoint_instant(&self, cost: SimTime, q: u64) -> SimTime {
        self.start + self.restore + cost * (q - self.start_progress)
    }
}

/// Restore cost a launch of `task` pays: only previously stopped tasks carry
/// a context back to the fabric.
pub fn restore_cost(task: &Task, timing: &TimingConfig) -> SimTime {
    if task.context.is_some() {
        timing.restore_overhead
    } else {
        SimTime::ZERO
    }
}

/// Completion instant of `task` when launched at `start` with its current
/// durable progress.
pub fn finish_time(task: &Task, start: SimTime, timing: &TimingConfig) -> SimTime {
    start + restore_cost(task, timing) + task.kernel.per_iter_cost * task.remaining_work()
}

/// Iterations complete at instant `t` of an open segment: floor progress,
/// clamped to the iteration space. Time still inside the restore window
/// yields the segment's starting progress.
pub fn progress_at(segment: &ExecSegment, cost: SimTime, total: u64, t: SimTime) -> u64 {
    let warm = segment.start + segment.restore;
    let elapsed = match t.checked_sub(warm) {
        Some(e) => e,
        None => return segment.start_progress,
    };
    debug_assert!(cost.as_micros() > 0);
    let done = elapsed.as_micros() / cost.as_micros();
    (segment.start_progress + done).min(total)
}

/// Everything a preemption decides.
#[derive(Debug, Clone)]
pub struct PreemptOutcome {
    /// The context copied to the host.
    pub context: Context,
    /// Floor progress at the stop instant.
    pub progress: u64,
    /// Progress the saved context encodes (what the resume will restore).
    pub durable: u64,
    /// Whether the stop tore an in-flight checkpoint save.
    pub torn: bool,
}

/// Asynchronously stops `task` at instant `t` of its open `segment`.
///
/// The durable progress is the latest checkpoint at or below the floor
/// progress — one checkpoint earlier if the stop landed inside the save
/// window of that checkpoint's write. Updates the task's state, completed
/// work and saved context.
pub fn preempt(
    task: &mut Task,
    t: SimTime,
    segment: &ExecSegment,
    timing: &TimingConfig,
) -> Result<PreemptOutcome, ExecError> {
    if task.state != TaskState::Running {
        return Err(ExecError::NotRunning(task.id));
    }
    let dims = LoopDims::for_kernel(&task.kernel, &task.args)?;
    let total = dims.total_work();
    let cost = task.kernel.per_iter_cost;
    let stride = task.kernel.checkpoint_stride;
    let progress = progress_at(segment, cost, total, t);
    let start = segment.start_progress;

    // Latest checkpoint at or below the floor progress, relative to this
    // segment's resume point.
    let latest = progress - ((progress - start) % stride);
    let (durable, torn) = if latest > start {
        let write = segment.checkpoint_instant(cost, latest);
        debug_assert!(t >= write);
        if (t - write) < timing.save_window {
            (latest - stride, true)
        } else {
            (latest, false)
        }
    } else {
        (start, false)
    };

    let context = capture_context(&dims, durable, !torn)?;
    task.completed_work = durable;
    task.context = Some(context.clone());
    task.transition(TaskState::Preempted)
        .map_err(|_| ExecError::NotRunning(task.id))?;
    Ok(PreemptOutcome {
        context,
        progress,
        durable,
        torn,
    })
}
