//! Schedulable tasks and their lifecycle.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::context::Context;
use crate::exec::{self, ExecError};
use crate::kernel::KernelSpec;
use crate::time::SimTime;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Task lifecycle states. The only legal edges are
/// `Pending -> Queued -> Running -> {Done, Preempted}` and
/// `Preempted -> Queued`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TaskState {
    Pending,
    Queued,
    Running,
    Preempted,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal task transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: TaskState,
    pub to: TaskState,
}

/// One schedulable unit: a kernel reference plus scalar arguments, priority
/// and arrival instant, and the mutable lifecycle bookkeeping the scheduler
/// maintains.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: TaskId,
    pub kernel: Arc<KernelSpec>,
    /// Scalar argument vector; for the image kernels this is `[H, W, iters]`.
    pub args: Vec<i64>,
    /// Priority in `[0, P)`, higher value = more urgent.
    pub priority: u8,
    pub arrival: SimTime,
    pub state: TaskState,
    /// Saved context, present once the task has been stopped at least once.
    pub context: Option<Context>,
    pub first_launch: Option<SimTime>,
    pub finish: Option<SimTime>,
    /// Inner iterations already durably checkpointed.
    pub completed_work: u64,
    /// Total inner iterations, cached from the kernel's loop shape.
    pub total_work: u64,
}

impl Task {
    pub fn new(
        id: TaskId,
        kernel: Arc<KernelSpec>,
        args: Vec<i64>,
        priority: u8,
        arrival: SimTime,
    ) -> Result<Task, ExecError> {
        let total_work = exec::total_work(&kernel, &args)?;
        Ok(Task {
            id,
            kernel,
            args,
            priority,
            arrival,
            state: TaskState::Pending,
            context: None,
            first_launch: None,
            finish: None,
            completed_work: 0,
            total_work,
        })
    }

    pub fn remaining_work(&self) -> u64 {
        self.total_work - self.completed_work
    }

    /// Moves the task along one lifecycle edge; any other edge is a defect.
    pub fn transition(&mut self, to: TaskState) -> Result<(), TransitionError> {
        use TaskState::*;
        let ok = matches!(
            (self.state, to),
            (Pending, Queued)
                | (Queued, Running)
                | (Running, Done)
                | (Running, Preempted)
                | (Preempted, Queued)
        );
        if ok {
            self.state = to;
            Ok(())
        } else {
            Err(TransitionError {
                from: self.state,
                to,
            })
        }
    }
}
