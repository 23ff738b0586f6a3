//! Quantum-stepped reference scheduler.
//!
//! Advances virtual time one microsecond per step and re-evaluates the
//! scheduling conditions at every tick: which kernels finished, which
//! reconfiguration completed, whether the configuration port can start its
//! next grant, and which tasks arrive. It shares no code with the
//! event-driven engine under test; agreement on task lifecycles validates
//! the engine's event ordering, timeout handling, cancellation and
//! reconfiguration arithmetic.

use std::collections::VecDeque;

use dprsim::{SimConfig, Task};

/// Observable lifecycle of one simulation, for comparison against a
/// `RunRecord`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    /// `(time_us, task, region)` in launch order.
    pub launches: Vec<(u64, u32, u32)>,
    /// `(task, time_us)` sorted by task id.
    pub first_launch: Vec<(u32, u64)>,
    /// `(task, time_us)` sorted by task id.
    pub finish: Vec<(u32, u64)>,
    /// `(time_us, victim)` in preemption order.
    pub preempts: Vec<(u64, u32)>,
    pub n_reconfigs: u32,
}

struct OTask {
    id: u32,
    bitstream: u16,
    priority: u8,
    arrival: u64,
    total: u64,
    cost: u64,
    stride: u64,
    durable: u64,
    has_ctx: bool,
    done: bool,
    first_launch: Option<u64>,
    finish: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    /// Committed and waiting in the configuration-port queue.
    Reserved {
        task: usize,
    },
    Reconfiguring {
        task: usize,
        end: u64,
    },
    Running {
        task: usize,
        start: u64,
        restore: u64,
        start_progress: u64,
        launch_seq: u32,
        finish_at: u64,
    },
}

struct ORegion {
    loaded: Option<u16>,
    phase: Phase,
}

struct Sim {
    preemption: bool,
    save_window: u64,
    preempt_overhead: u64,
    restore_overhead: u64,
    t_partial: u64,
    tasks: Vec<OTask>,
    regions: Vec<ORegion>,
    /// Per-priority queues of task indices, each sorted by (arrival, id).
    queues: Vec<Vec<usize>>,
    /// Configuration-port FIFO: (ready_at, region).
    fifo: VecDeque<(u64, usize)>,
    port_busy: bool,
    next_launch_seq: u32,
    out: Outcome,
}

/// Runs the tick-stepped simulation of `workload` under `config`.
pub fn simulate(config: &SimConfig, workload: &[Task]) -> Outcome {
    let mut tasks: Vec<OTask> = workload
        .iter()
        .map(|t| OTask {
            id: t.id.0,
            bitstream: t.kernel.bitstream.0,
            priority: t.priority,
            arrival: t.arrival.as_micros(),
            total: t.total_work,
            cost: t.kernel.per_iter_cost.as_micros(),
            stride: t.kernel.checkpoint_stride,
            durable: 0,
            has_ctx: false,
            done: false,
            first_launch: None,
            finish: None,
        })
        .collect();
    tasks.sort_by_key(|t| t.id);
    let mut arrival_order: Vec<usize> = (0..tasks.len()).collect();
    arrival_order.sort_by_key(|&i| (tasks[i].arrival, tasks[i].id));

    let horizon: u64 = tasks
        .iter()
        .map(|t| t.arrival + 3 * (t.total * t.cost) + 8 * config.timing.t_partial.as_micros())
        .sum::<u64>()
        + tasks.len() as u64
            * 4
            * (config.timing.preempt_overhead.as_micros()
                + config.timing.restore_overhead.as_micros()
                + 1)
        + 1_000;

    let mut sim = Sim {
        preemption: config.policy.preemption_enabled,
        save_window: config.timing.save_window.as_micros(),
        preempt_overhead: config.timing.preempt_overhead.as_micros(),
        restore_overhead: config.timing.restore_overhead.as_micros(),
        t_partial: config.timing.t_partial.as_micros(),
        regions: (0..config.regions)
            .map(|_| ORegion {
                loaded: None,
                phase: Phase::Idle,
            })
            .collect(),
        queues: vec![Vec::new(); config.policy.n_priorities as usize],
        fifo: VecDeque::new(),
        port_busy: false,
        next_launch_seq: 0,
        out: Outcome::default(),
        tasks,
    };

    let mut next_arrival = 0usize;
    for t in 0..=horizon {
        // kernels that complete at this tick, oldest launch first
        let mut finishing: Vec<(u32, usize)> = sim
            .regions
            .iter()
            .enumerate()
            .filter_map(|(r, region)| match region.phase {
                Phase::Running {
                    finish_at,
                    launch_seq,
                    ..
                } if finish_at == t => Some((launch_seq, r)),
                _ => None,
            })
            .collect();
        finishing.sort_unstable();
        for (_, r) in finishing {
            let Phase::Running { task, .. } = sim.regions[r].phase else {
                unreachable!()
            };
            sim.tasks[task].done = true;
            sim.tasks[task].finish = Some(t);
            sim.tasks[task].durable = sim.tasks[task].total;
            sim.regions[r].phase = Phase::Idle;
            sim.serve_from_queue(t);
        }

        // at most one reconfiguration can end per tick
        for r in 0..sim.regions.len() {
            if let Phase::Reconfiguring { task, end } = sim.regions[r].phase {
                if end == t {
                    sim.regions[r].loaded = Some(sim.tasks[task].bitstream);
                    sim.regions[r].phase = Phase::Idle;
                    sim.port_busy = false;
                    sim.launch(r, task, t);
                    sim.pump(t);
                    sim.serve_from_queue(t);
                }
            }
        }

        sim.pump(t);

        while next_arrival < arrival_order.len() {
            let ti = arrival_order[next_arrival];
            if sim.tasks[ti].arrival != t {
                break;
            }
            next_arrival += 1;
            sim.serve_task(ti, t);
        }

        if next_arrival == arrival_order.len() && sim.tasks.iter().all(|t| t.done) {
            break;
        }
    }
    assert!(
        sim.tasks.iter().all(|t| t.done),
        "oracle exceeded its horizon"
    );

    sim.out.first_launch = sim
        .tasks
        .iter()
        .map(|t| (t.id, t.first_launch.expect("launched")))
        .collect();
    sim.out.finish = sim
        .tasks
        .iter()
        .map(|t| (t.id, t.finish.expect("finished")))
        .collect();
    sim.out
}

impl Sim {
    /// Starts the head of the port queue if the port is free and the head's
    /// region is ready.
    fn pump(&mut self, t: u64) {
        if self.port_busy {
            return;
        }
        let Some(&(ready, r)) = self.fifo.front() else {
            return;
        };
        if ready > t {
            return;
        }
        self.fifo.pop_front();
        let Phase::Reserved { task } = self.regions[r].phase else {
            unreachable!("queued region is reserved")
        };
        self.regions[r].phase = Phase::Reconfiguring {
            task,
            end: t + self.t_partial,
        };
        self.port_busy = true;
    }

    fn enqueue(&mut self, ti: usize) {
        let key = (self.tasks[ti].arrival, self.tasks[ti].id);
        let pri = self.tasks[ti].priority as usize;
        let q = &mut self.queues[pri];
        let pos =
            q.partition_point(|&other| (self.tasks[other].arrival, self.tasks[other].id) <= key);
        q.insert(pos, ti);
    }

    fn serve_from_queue(&mut self, t: u64) {
        for p in (0..self.queues.len()).rev() {
            if !self.queues[p].is_empty() {
                let ti = self.queues[p].remove(0);
                self.serve_task(ti, t);
                return;
            }
        }
    }

    fn serve_task(&mut self, ti: usize, t: u64) {
        let bs = self.tasks[ti].bitstream;
        // step 1: an idle region — matching bitstream, else never loaded,
        // else any, lowest id within each tier
        let mut chosen = None;
        let mut empty = None;
        let mut loaded_other = None;
        for (r, region) in self.regions.iter().enumerate() {
            if region.phase == Phase::Idle {
                match region.loaded {
                    Some(l) if l == bs => {
                        chosen = Some(r);
                        break;
                    }
                    None => {
                        if empty.is_none() {
                            empty = Some(r);
                        }
                    }
                    Some(_) => {
                        if loaded_other.is_none() {
                            loaded_other = Some(r);
                        }
                    }
                }
            }
        }
        if let Some(r) = chosen.or(empty).or(loaded_other) {
            self.commit(r, ti, t, t);
            return;
        }
        // step 2: preempt a strictly lower-priority kernel
        if self.preemption {
            let incoming = self.tasks[ti].priority;
            let victim = self
                .regions
                .iter()
                .enumerate()
                .filter_map(|(r, region)| match region.phase {
                    Phase::Running { task, start, .. } if self.tasks[task].priority < incoming => {
                        Some((self.tasks[task].priority, std::cmp::Reverse(start), r))
                    }
                    _ => None,
                })
                .min();
            if let Some((_, _, r)) = victim {
                self.preempt(r, t);
                self.commit(r, ti, t, t + self.preempt_overhead);
                return;
            }
        }
        self.enqueue(ti);
    }

    fn preempt(&mut self, r: usize, t: u64) {
        let Phase::Running {
            task,
            start,
            restore,
            start_progress,
            ..
        } = self.regions[r].phase
        else {
            unreachable!("victim is running")
        };
        let victim = &mut self.tasks[task];
        let warm = start + restore;
        let progress = if t <= warm {
            start_progress
        } else {
            (start_progress + (t - warm) / victim.cost).min(victim.total)
        };
        let rel = progress - start_progress;
        let checkpointed = rel / victim.stride * victim.stride;
        let durable_rel = if checkpointed > 0 {
            let written_at = warm + checkpointed * victim.cost;
            if t - written_at < self.save_window {
                checkpointed - victim.stride // torn save: previous checkpoint
            } else {
                checkpointed
            }
        } else {
            0
        };
        victim.durable = start_progress + durable_rel;
        victim.has_ctx = true;
        self.regions[r].phase = Phase::Idle;
        self.out.preempts.push((t, victim.id));
        self.enqueue(task);
    }

    /// Steps 3 and 4: reconfigure if the bitstream differs, else launch
    /// directly (possibly a context copy-out ahead of the clock).
    fn commit(&mut self, r: usize, ti: usize, t: u64, ready: u64) {
        if self.regions[r].loaded == Some(self.tasks[ti].bitstream) {
            self.launch(r, ti, ready);
        } else {
            self.regions[r].phase = Phase::Reserved { task: ti };
            self.fifo.push_back((ready, r));
            self.out.n_reconfigs += 1;
            self.pump(t);
        }
    }

    fn launch(&mut self, r: usize, ti: usize, start: u64) {
        let task = &mut self.tasks[ti];
        let restore = if task.has_ctx {
            self.restore_overhead
        } else {
            0
        };
        let finish_at = start + restore + (task.total - task.durable) * task.cost;
        self.regions[r].phase = Phase::Running {
            task: ti,
            start,
            restore,
            start_progress: task.durable,
            launch_seq: self.next_launch_seq,
            finish_at,
        };
        self.next_launch_seq += 1;
        if task.first_launch.is_none() {
            task.first_launch = Some(start);
        }
        self.out.launches.push((start, task.id, r as u32));
    }
}
