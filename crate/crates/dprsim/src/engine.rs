//! Deterministic discrete-event core.
//!
//! The engine owns the virtual clock and the pending-event calendar, and
//! exposes the interrupt-or-timeout wait the scheduler main loop is built on:
//! the wait returns either the next interrupt (a dequeued event) or the
//! expiry of an arrival timeout, whichever comes first. An event landing
//! exactly on the timeout instant wins the tie, so a region freed at time `t`
//! can absorb a task arriving at `t` without a spurious preemption.
//!
//! Events dequeue in `(time, kind-rank, seq)` order, where the kind rank puts
//! kernel finishes before reconfiguration completions before task arrivals at
//! equal times, and `seq` is the posting order. The engine is virtual-time
//! only; there is no wall-clock pacing.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::kernel::BitstreamId;
use crate::region::RegionId;
use crate::task::TaskId;
use crate::time::SimTime;

/// What happened, attached to a timestamp by [`Event`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    KernelFinish {
        region: RegionId,
        task: TaskId,
    },
    ReconfigDone {
        region: RegionId,
        bitstream: BitstreamId,
    },
    TaskArrival {
        task: TaskId,
    },
}

impl EventKind {
    /// Tie-break rank at equal times: finishes first, arrivals last.
    fn rank(&self) -> u8 {
        match self {
            EventKind::KernelFinish { .. } => 0,
            EventKind::ReconfigDone { .. } => 1,
            EventKind::TaskArrival { .. } => 2,
        }
    }

    pub fn region(&self) -> Option<RegionId> {
        match self {
            EventKind::KernelFinish { region, .. } | EventKind::ReconfigDone { region, .. } => {
                Some(*region)
            }
            EventKind::TaskArrival { .. } => None,
        }
    }

    pub fn task(&self) -> Option<TaskId> {
        match self {
            EventKind::KernelFinish { task, .. } | EventKind::TaskArrival { task } => Some(*task),
            EventKind::ReconfigDone { .. } => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            EventKind::KernelFinish { .. } => "finish",
            EventKind::ReconfigDone { .. } => "reconfig",
            EventKind::TaskArrival { .. } => "arrival",
        }
    }
}

/// A timestamped occurrence with its posting sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.rank(), self.seq).cmp(&(other.time, other.kind.rank(), other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Result of one wait: an interrupt carrying the dequeued event (with the
/// raising region, when the event has one), or the arrival timeout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WaitResult {
    Interrupt(Option<RegionId>, Event),
    ArrivalTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("event at {requested} posted in the past of {now}")]
    TimeTravel { now: SimTime, requested: SimTime },
    #[error("no pending events and no timeout to wait for")]
    Exhausted,
}

/// One line of the event trace, in emission order. Arrival lines are
/// recorded by the consumer of the timeout (the scheduler); event lines are
/// recorded when the event is dequeued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub time: SimTime,
    pub seq: u64,
    pub kind: &'static str,
    pub region: Option<RegionId>,
    pub task: Option<TaskId>,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.time, self.seq, self.kind)?;
        match self.region {
            Some(r) => write!(f, "{r},")?,
            None => write!(f, "-,")?,
        }
        match self.task {
            Some(t) => write!(f, "{t}"),
            None => write!(f, "-"),
        }
    }
}

/// The event queue, clock, and trace sink. One engine instance is owned and
/// driven by exactly one logical thread of control.
#[derive(Debug, Default)]
pub struct Engine {
    now: SimTime,
    heap: BinaryHeap<std::cmp::Reverse<Event>>,
    next_seq: u64,
    cancelled: HashSet<u64>,
    live: usize,
    trace: Vec<TraceLine>,
}

impl Engine {
    pub fn new() -> Engine {
        Engine::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of pending (uncancelled) events.
    pub fn pending(&self) -> usize {
        self.live
    }

    /// Enqueues an event; returns its sequence number.
    pub fn post(&mut self, time: SimTime, kind: EventKind) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::TimeTravel {
                now: self.now,
                requested: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(std::cmp::Reverse(Event { time, seq, kind }));
        self.live += 1;
        Ok(seq)
    }

    /// Removes every pending event matching the predicate; returns how many.
    pub fn cancel(&mut self, pred: impl Fn(&Event) -> bool) -> usize {
        let mut hits = 0;
        for std::cmp::Reverse(ev) in self.heap.iter() {
            if !self.cancelled.contains(&ev.seq) && pred(ev) {
                self.cancelled.insert(ev.seq);
                hits += 1;
            }
        }
        self.live -= hits;
        hits
    }

    fn peek_live(&mut self) -> Option<Event> {
        while let Some(std::cmp::Reverse(ev)) = self.heap.peek() {
            if self.cancelled.remove(&ev.seq) {
                self.heap.pop();
            } else {
                return Some(*ev);
            }
        }
        None
    }

    /// Blocks (in virtual time) until the next event fires or the timeout
    /// instant passes, whichever is earlier. An event at the timeout instant
    /// wins the tie. Errs with [`EngineError::Exhausted`] when there is
    /// nothing to wait for.
    pub fn wait_for_interrupt(
        &mut self,
        timeout: Option<SimTime>,
    ) -> Result<WaitResult, EngineError> {
        let next = self.peek_live();
        let take_event = match (next, timeout) {
            (None, None) => return Err(EngineError::Exhausted),
            (None, Some(_)) => false,
            (Some(_), None) => true,
            (Some(ev), Some(to)) => ev.time <= to,
        };
        if take_event {
            let ev = next.expect("peeked above");
            self.heap.pop();
            self.live -= 1;
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.trace.push(TraceLine {
                time: ev.time,
                seq: ev.seq,
                kind: ev.kind.label(),
                region: ev.kind.region(),
                task: ev.kind.task(),
            });
            Ok(WaitResult::Interrupt(ev.kind.region(), ev))
        } else {
            let to = timeout.expect("no event implies a timeout");
            debug_assert!(to >= self.now, "timeouts never point into the past");
            self.now = self.now.max(to);
            Ok(WaitResult::ArrivalTimeout)
        }
    }

    /// Records an arrival trace line at the current instant. The scheduler
    /// calls this when an arrival timeout fires, so arrivals appear in the
    /// trace alongside dequeued events with a consistent sequence numbering.
    pub fn trace_arrival(&mut self, task: TaskId) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.trace.push(TraceLine {
            time: self.now,
            seq,
            kind: "arrival",
            region: None,
            task: Some(task),
        });
    }

    pub fn trace(&self) -> &[TraceLine] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceLine> {
        std::mem::take(&mut self.trace)
    }
}
