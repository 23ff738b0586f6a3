//! The scheduler main loop.
//!
//! Arrivals are pre-generated and delivered through the engine's arrival
//! timeout; kernel completions and reconfiguration completions arrive as
//! interrupts. Each loop turn waits, then serves exactly one task — the
//! arrived one on a timeout, the head of the highest non-empty priority
//! queue otherwise.
//!
//! Serving walks four steps: (1) find an available region, preferring one
//! already loaded with the task's bitstream; (2) failing that, preempt a
//! region running a strictly lower-priority task, if preemption is enabled,
//! else queue the task; (3) if the chosen region holds a different
//! bitstream, enqueue a reconfiguration — an internal task serialised on the
//! single ICAP; (4) launch, copying the saved context back first when
//! resuming a previously stopped task.

use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{Engine, EngineError, Event, EventKind, WaitResult};
use crate::exec::{self, ExecError, ExecSegment, SegmentEnd};
use crate::kernel::{check_kernel, BitstreamId, KernelId};
use crate::metrics::{
    CommitRecord, DispatchRecord, DispatchVia, IcapReservation, LaunchRecord, PreemptionRecord,
    RunMeta, RunRecord, TaskRecord,
};
use crate::region::{Region, RegionId, RegionState};
use crate::task::{Task, TaskId, TaskState, TransitionError};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no arrival due at the current instant")]
    NoArrival,
    #[error("engine defect: {0}")]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// FIFO queues of task ids, one per priority level. Entries are ordered by
/// original arrival time (ties by id), so a preempted task re-enters at the
/// position its arrival earns rather than at the tail.
#[derive(Debug, Clone)]
pub struct PriorityQueues {
    queues: Vec<Vec<(SimTime, TaskId)>>,
}

impl PriorityQueues {
    pub fn new(n_priorities: u8) -> PriorityQueues {
        PriorityQueues {
            queues: vec![Vec::new(); n_priorities as usize],
        }
    }

    pub fn enqueue(&mut self, priority: u8, arrival: SimTime, id: TaskId) {
        let q = &mut self.queues[priority as usize];
        debug_assert!(!q.iter().any(|&(_, t)| t == id), "task already queued");
        let pos = q.partition_point(|&key| key <= (arrival, id));
        q.insert(pos, (arrival, id));
    }

    /// Head of the highest non-empty queue.
    pub fn pop_highest(&mut self) -> Option<(u8, TaskId)> {
        for (p, q) in self.queues.iter_mut().enumerate().rev() {
            if !q.is_empty() {
                let (_, id) = q.remove(0);
                return Some((p as u8, id));
            }
        }
        None
    }

    /// Highest priority with a waiting task.
    pub fn highest_waiting(&self) -> Option<u8> {
        self.queues
            .iter()
            .enumerate()
            .rev()
            .find(|(_, q)| !q.is_empty())
            .map(|(p, _)| p as u8)
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }
}

/// The single internal configuration port. Reconfigurations are granted in
/// request order; a request not ready to start (its region is still copying
/// a context out) holds its place in line. The full reservation ledger is
/// kept for the exclusivity audit.
#[derive(Debug, Clone, Default)]
pub struct IcapLock {
    busy_until: SimTime,
    log: Vec<IcapReservation>,
}

impl IcapLock {
    pub fn new() -> IcapLock {
        IcapLock::default()
    }

    /// Books the port for `region` starting no earlier than `ready_at` and
    /// no earlier than the end of the previous grant.
    pub fn reserve(
        &mut self,
        ready_at: SimTime,
        region: RegionId,
        bitstream: BitstreamId,
        duration: SimTime,
    ) -> IcapReservation {
        let start = self.busy_until.max(ready_at);
        let end = start + duration;
        self.busy_until = end;
        let r = IcapReservation {
            region,
            bitstream,
            start,
            end,
        };
        self.log.push(r);
        r
    }

    /// Region holding the port at instant `t`, if any.
    pub fn holder_at(&self, t: SimTime) -> Option<RegionId> {
        self.log
            .iter()
            .find(|r| r.start <= t && t < r.end)
            .map(|r| r.region)
    }

    pub fn reservations(&self) -> &[IcapReservation] {
        &self.log
    }
}

/// One full simulation: engine, regions, queues and bookkeeping.
#[derive(Debug)]
pub struct Scheduler {
    config: SimConfig,
    meta: RunMeta,
    engine: Engine,
    regions: Vec<Region>,
    queues: PriorityQueues,
    icap: IcapLock,
    /// All tasks, sorted by id.
    tasks: Vec<Task>,
    /// Indices into `tasks` in (arrival, id) order.
    arrival_order: Vec<usize>,
    next_arrival: usize,
    segments: Vec<Vec<ExecSegment>>,
    per_task_preemptions: Vec<u32>,
    per_task_re_executed: Vec<u64>,
    launches: Vec<LaunchRecord>,
    commits: Vec<CommitRecord>,
    dispatches: Vec<DispatchRecord>,
    preemptions: Vec<PreemptionRecord>,
    n_torn: u32,
}

/// Runs one simulation to completion.
pub fn run(config: &SimConfig, workload: Vec<Task>, meta: RunMeta) -> Result<RunRecord, SimError> {
    Scheduler::new(config.clone(), workload, meta)?.run_to_completion()
}

impl Scheduler {
    pub fn new(
        config: SimConfig,
        workload: Vec<Task>,
        meta: RunMeta,
    ) -> Result<Scheduler, SimError> {
        if config.regions == 0 {
            return Err(SimError::Config("at least one region is required".into()));
        }
        if config.policy.n_priorities == 0 {
            return Err(SimError::Config("at least one priority level".into()));
        }
        if config.timing.t_partial == SimTime::ZERO {
            return Err(SimError::Config("t_partial must be positive".into()));
        }
        let mut tasks = workload;
        tasks.sort_by_key(|t| t.id);
        for pair in tasks.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(SimError::Config(format!(
                    "duplicate task id {}",
                    pair[0].id
                )));
            }
        }
        for t in &tasks {
            if t.priority >= config.policy.n_priorities {
                return Err(SimError::Config(format!(
                    "task {} has priority {} outside [0, {})",
                    t.id, t.priority, config.policy.n_priorities
                )));
            }
            if t.state != TaskState::Pending {
                return Err(SimError::Config(format!("task {} is not pending", t.id)));
            }
            if t.kernel.per_iter_cost == SimTime::ZERO {
                return Err(SimError::Config(format!(
                    "kernel {} has zero per-iteration cost",
                    t.kernel.name
                )));
            }
            check_kernel(&t.kernel)
                .map_err(|e| SimError::Config(format!("kernel {}: {e}", t.kernel.name)))?;
        }
        let mut arrival_order: Vec<usize> = (0..tasks.len()).collect();
        arrival_order.sort_by_key(|&i| (tasks[i].arrival, tasks[i].id));
        let n = tasks.len();
        Ok(Scheduler {
            queues: PriorityQueues::new(config.policy.n_priorities),
            regions: (0..config.regions)
                .map(|i| Region::new(RegionId(i)))
                .collect(),
            icap: IcapLock::new(),
            engine: Engine::new(),
            tasks,
            arrival_order,
            next_arrival: 0,
            segments: vec![Vec::new(); n],
            per_task_preemptions: vec![0; n],
            per_task_re_executed: vec![0; n],
            launches: Vec::new(),
            commits: Vec::new(),
            dispatches: Vec::new(),
            preemptions: Vec::new(),
            n_torn: 0,
            config,
            meta,
        })
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    fn task(&self, id: TaskId) -> &Task {
        let i = self.index_of(id);
        &self.tasks[i]
    }

    fn task_mut(&mut self, id: TaskId) -> &mut Task {
        let i = self.index_of(id);
        &mut self.tasks[i]
    }

    fn index_of(&self, id: TaskId) -> usize {
        self.tasks
            .binary_search_by_key(&id, |t| t.id)
            .expect("unknown task id")
    }

    /// Algorithm main loop: wait, dispatch, serve, refresh the timeout.
    pub fn run_to_completion(mut self) -> Result<RunRecord, SimError> {
        loop {
            if self.has_finished() {
                break;
            }
            let timeout = self.update_timeout();
            match self.engine.wait_for_interrupt(timeout)? {
                WaitResult::ArrivalTimeout => {
                    let tid = self.get_arrived_task()?;
                    self.task_mut(tid).transition(TaskState::Queued)?;
                    self.serve_task(tid)?;
                }
                WaitResult::Interrupt(_, event) => {
                    self.handle_event(event)?;
                    if let Some(tid) = self.get_task_from_queue() {
                        self.serve_task(tid)?;
                    }
                }
            }
        }
        Ok(self.into_record())
    }

    /// Termination test: nothing left to arrive, queues drained, and no
    /// region still running or committed to a reconfiguration.
    pub fn has_finished(&self) -> bool {
        self.next_arrival == self.arrival_order.len()
            && self.queues.is_empty()
            && self
                .regions
                .iter()
                .all(|r| r.state == RegionState::Idle && r.pending.is_none())
    }

    /// Next arrival instant, if any task is still to arrive.
    pub fn update_timeout(&self) -> Option<SimTime> {
        self.arrival_order
            .get(self.next_arrival)
            .map(|&i| self.tasks[i].arrival)
    }

    /// Takes the arrival whose timeout just fired.
    pub fn get_arrived_task(&mut self) -> Result<TaskId, SimError> {
        let &i = self
            .arrival_order
            .get(self.next_arrival)
            .ok_or(SimError::NoArrival)?;
        if self.tasks[i].arrival > self.engine.now() {
            return Err(SimError::NoArrival);
        }
        self.next_arrival += 1;
        let tid = self.tasks[i].id;
        let priority = self.tasks[i].priority;
        self.engine.trace_arrival(tid);
        self.dispatches.push(DispatchRecord {
            time: self.engine.now(),
            task: tid,
            priority,
            max_other_queued: self.queues.highest_waiting(),
            via: DispatchVia::Arrival,
        });
        Ok(tid)
    }

    /// Head of the highest non-empty priority queue, keeping its saved
    /// context.
    pub fn get_task_from_queue(&mut self) -> Option<TaskId> {
        let (priority, tid) = self.queues.pop_highest()?;
        self.dispatches.push(DispatchRecord {
            time: self.engine.now(),
            task: tid,
            priority,
            max_other_queued: self.queues.highest_waiting(),
            via: DispatchVia::Queue,
        });
        Some(tid)
    }

    /// The four-step serve procedure.
    pub fn serve_task(&mut self, tid: TaskId) -> Result<(), SimError> {
        let now = self.engine.now();
        let bitstream = self.task(tid).kernel.bitstream;
        let priority = self.task(tid).priority;
        let overtakes =
            |queues: &PriorityQueues| queues.highest_waiting().is_some_and(|h| h > priority);
        if let Some(rid) = self.find_available_region(bitstream) {
            debug_assert!(
                !overtakes(&self.queues),
                "commit past a waiting higher priority"
            );
            self.commit(rid, tid, now)
        } else if self.config.policy.preemption_enabled {
            match self.select_victim(priority) {
                Some(rid) => {
                    let ready_at = self.preempt_region(rid, tid)?;
                    debug_assert!(
                        !overtakes(&self.queues),
                        "commit past a waiting higher priority"
                    );
                    self.commit(rid, tid, ready_at)
                }
                None => {
                    self.enqueue(tid)?;
                    Ok(())
                }
            }
        } else {
            self.enqueue(tid)?;
            Ok(())
        }
    }

    /// Idle region to serve a kernel on. Preference order: a region already
    /// loaded with the matching bitstream (no reconfiguration at all), then a
    /// never-loaded region (a reconfiguration that evicts nothing), then any
    /// idle region; lowest id within each tier. This keeps resident
    /// bitstreams warm and meets the brute-force minimum reconfiguration
    /// count on two-region schedules over the blur menu.
    pub fn find_available_region(&self, bitstream: BitstreamId) -> Option<RegionId> {
        let mut empty = None;
        let mut loaded_other = None;
        for r in self.regions.iter().filter(|r| r.is_available()) {
            match r.loaded_bitstream {
                Some(bs) if bs == bitstream => return Some(r.id),
                None => {
                    if empty.is_none() {
                        empty = Some(r.id);
                    }
                }
                Some(_) => {
                    if loaded_other.is_none() {
                        loaded_other = Some(r.id);
                    }
                }
            }
        }
        empty.or(loaded_other)
    }

    /// Region running the lowest-priority task strictly below `incoming`;
    /// ties prefer the most recently started segment (least sunk work), then
    /// the lowest region id.
    pub fn select_victim(&self, incoming: u8) -> Option<RegionId> {
        debug_assert!(self.config.policy.preemption_enabled);
        self.regions
            .iter()
            .filter(|r| r.state == RegionState::Running)
            .filter_map(|r| {
                let occupant = r.occupant.expect("running region has an occupant");
                let priority = self.task(occupant).priority;
                (priority < incoming).then(|| {
                    let start = r
                        .segment
                        .as_ref()
                        .expect("running region has a segment")
                        .start;
                    (priority, std::cmp::Reverse(start), r.id)
                })
            })
            .min()
            .map(|(_, _, id)| id)
    }

    /// Stops the victim on `rid`, saves its context, re-enqueues it, and
    /// returns when the region is usable again (after the context copy-out).
    fn preempt_region(&mut self, rid: RegionId, incoming: TaskId) -> Result<SimTime, SimError> {
        let now = self.engine.now();
        let region = &mut self.regions[rid.0 as usize];
        let victim = region.occupant.take().expect("victim region is running");
        let mut segment = region.segment.take().expect("victim region has a segment");
        region.state = RegionState::Idle;
        region.busy_until = None;

        let removed = self.engine.cancel(|ev| {
            ev.kind
                == EventKind::KernelFinish {
                    region: rid,
                    task: victim,
                }
        });
        debug_assert_eq!(removed, 1, "victim had exactly one pending finish");

        let timing = self.config.timing;
        let incoming_priority = self.task(incoming).priority;
        let vi = self.index_of(victim);
        let outcome = exec::preempt(&mut self.tasks[vi], now, &segment, &timing)?;
        segment.end = Some(now);
        segment.end_reason = Some(SegmentEnd::Preempted);
        self.segments[vi].push(segment);
        self.per_task_preemptions[vi] += 1;
        self.per_task_re_executed[vi] += outcome.progress - outcome.durable;
        if outcome.torn {
            self.n_torn += 1;
        }
        self.preemptions.push(PreemptionRecord {
            time: now,
            region: rid,
            victim,
            victim_priority: self.tasks[vi].priority,
            incoming,
            incoming_priority,
            progress: outcome.progress,
            durable: outcome.durable,
            torn: outcome.torn,
        });
        self.enqueue(victim)?;
        Ok(now + timing.preempt_overhead)
    }

    /// Places a task into its priority queue (ordered by original arrival).
    fn enqueue(&mut self, tid: TaskId) -> Result<(), SimError> {
        let task = self.task_mut(tid);
        if task.state == TaskState::Preempted {
            task.transition(TaskState::Queued)?;
        }
        debug_assert_eq!(task.state, TaskState::Queued);
        let (priority, arrival) = (task.priority, task.arrival);
        self.queues.enqueue(priority, arrival, tid);
        Ok(())
    }

    /// Step 3 + 4: reconfigure if needed, then launch. `ready_at` is when the
    /// region becomes usable (now, or after a preemption's context copy-out).
    fn commit(&mut self, rid: RegionId, tid: TaskId, ready_at: SimTime) -> Result<(), SimError> {
        self.commits.push(CommitRecord {
            time: self.engine.now(),
            task: tid,
            region: rid,
        });
        match self.enqueue_reconfig(rid, tid, ready_at)? {
            Some(_done_at) => Ok(()), // launch continues at ReconfigDone
            None => self.launch(rid, tid, ready_at),
        }
    }

    /// Books the ICAP and posts the completion event, unless the region
    /// already holds the wanted bitstream (then reconfiguration is a no-op).
    /// Returns the completion instant when a reconfiguration was scheduled.
    pub fn enqueue_reconfig(
        &mut self,
        rid: RegionId,
        tid: TaskId,
        ready_at: SimTime,
    ) -> Result<Option<SimTime>, SimError> {
        let bitstream = self.task(tid).kernel.bitstream;
        let region = &self.regions[rid.0 as usize];
        if region.loaded_bitstream == Some(bitstream) {
            return Ok(None);
        }
        let reservation = self
            .icap
            .reserve(ready_at, rid, bitstream, self.config.timing.t_partial);
        let region = &mut self.regions[rid.0 as usize];
        region.state = RegionState::Reconfiguring;
        region.pending = Some(tid);
        region.occupant = None;
        region.busy_until = Some(reservation.end);
        region.check();
        self.engine.post(
            reservation.end,
            EventKind::ReconfigDone {
                region: rid,
                bitstream,
            },
        )?;
        Ok(Some(reservation.end))
    }

    /// Starts the task's next segment at `start` (which may lie up to one
    /// context copy-out ahead of the clock) and posts its completion.
    fn launch(&mut self, rid: RegionId, tid: TaskId, start: SimTime) -> Result<(), SimError> {
        let timing = self.config.timing;
        let ti = self.index_of(tid);
        let finish = exec::finish_time(&self.tasks[ti], start, &timing);
        let restore = exec::restore_cost(&self.tasks[ti], &timing);
        let resumed = restore > SimTime::ZERO;
        self.tasks[ti].transition(TaskState::Running)?;
        if self.tasks[ti].first_launch.is_none() {
            self.tasks[ti].first_launch = Some(start);
        }
        let segment = ExecSegment {
            task: tid,
            region: rid,
            start,
            restore,
            start_progress: self.tasks[ti].completed_work,
            end: None,
            end_reason: None,
        };
        let region = &mut self.regions[rid.0 as usize];
        region.state = RegionState::Running;
        region.occupant = Some(tid);
        region.pending = None;
        region.segment = Some(segment);
        region.busy_until = Some(finish);
        region.check();
        self.launches.push(LaunchRecord {
            seq: self.launches.len() as u32,
            time: start,
            task: tid,
            region: rid,
            resumed,
        });
        self.engine.post(
            finish,
            EventKind::KernelFinish {
                region: rid,
                task: tid,
            },
        )?;
        Ok(())
    }

    fn handle_event(&mut self, event: Event) -> Result<(), SimError> {
        match event.kind {
            EventKind::KernelFinish { region, task } => {
                let now = self.engine.now();
                let r = &mut self.regions[region.0 as usize];
                debug_assert_eq!(r.occupant, Some(task));
                let mut segment = r.segment.take().expect("finishing region has a segment");
                r.occupant = None;
                r.state = RegionState::Idle;
                r.busy_until = None;
                r.check();
                segment.end = Some(now);
                segment.end_reason = Some(SegmentEnd::Finished);
                let ti = self.index_of(task);
                self.segments[ti].push(segment);
                self.tasks[ti].completed_work = self.tasks[ti].total_work;
                self.tasks[ti].transition(TaskState::Done)?;
                self.tasks[ti].finish = Some(now);
                Ok(())
            }
            EventKind::ReconfigDone { region, bitstream } => {
                let now = self.engine.now();
                let r = &mut self.regions[region.0 as usize];
                debug_assert_eq!(r.state, RegionState::Reconfiguring);
                r.loaded_bitstream = Some(bitstream);
                r.state = RegionState::Idle;
                r.busy_until = None;
                let tid = r
                    .pending
                    .take()
                    .expect("reconfiguration had a pending task");
                self.launch(region, tid, now)
            }
            EventKind::TaskArrival { .. } => {
                // arrivals are timeout-driven; a posted arrival event would be
                // a harness defect
                Err(SimError::Config("unexpected arrival event".into()))
            }
        }
    }

    fn into_record(mut self) -> RunRecord {
        let trace = self.engine.take_trace();
        let mut kernel_costs: Vec<(KernelId, &'static str, SimTime, u64)> = Vec::new();
        for t in &self.tasks {
            let entry = (
                t.kernel.id,
                t.kernel.name,
                t.kernel.per_iter_cost,
                t.kernel.checkpoint_stride,
            );
            if !kernel_costs.contains(&entry) {
                kernel_costs.push(entry);
            }
        }
        kernel_costs.sort_by_key(|e| e.0);
        let mut tasks: Vec<TaskRecord> = Vec::with_capacity(self.tasks.len());
        for (i, t) in self.tasks.iter().enumerate() {
            tasks.push(TaskRecord {
                id: t.id,
                kernel: t.kernel.id,
                priority: t.priority,
                arrival: t.arrival,
                first_launch: t.first_launch,
                finish: t.finish,
                state: t.state,
                total_work: t.total_work,
                completed_work: t.completed_work,
                preemptions: self.per_task_preemptions[i],
                re_executed: self.per_task_re_executed[i],
                segments: std::mem::take(&mut self.segments[i]),
            });
        }
        let makespan = tasks
            .iter()
            .filter_map(|t| t.finish)
            .max()
            .unwrap_or(SimTime::ZERO);
        let n_reconfigs = self.icap.log.len() as u32;
        let n_preemptions = self.preemptions.len() as u32;
        RunRecord {
            meta: self.meta,
            config: self.config,
            kernel_costs,
            tasks,
            trace,
            launches: self.launches,
            commits: self.commits,
            dispatches: self.dispatches,
            preemptions: self.preemptions,
            icap: self.icap.log,
            n_reconfigs,
            n_preemptions,
            n_torn_saves: self.n_torn,
            makespan,
        }
    }
}
