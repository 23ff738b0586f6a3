//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured margins (run with `--nocapture` to see them).

mod oracle;

use std::sync::Arc;

use dprsim::audit;
use dprsim::config::{SchedPolicy, SimConfig, TimingConfig};
use dprsim::exec::{self, ExecSegment};
use dprsim::kernel::{BitstreamId, Extent, KernelId, KernelSpec, LoopTemplate, Padding};
use dprsim::metrics::{self, RunMeta, RunRecord};
use dprsim::rng::SplitMix64;
use dprsim::sched;
use dprsim::sweep::{run_sweep, SweepConfig, SweepOutput};
use dprsim::task::{Task, TaskId, TaskState};
use dprsim::time::SimTime;

fn us(n: u64) -> SimTime {
    SimTime::from_micros(n)
}

/// A small synthetic kernel family for oracle instances: same loop nest as
/// the image kernels, arbitrary bitstream identity and cost.
fn test_kernel(id: u16, cost: u64, stride: u64) -> Arc<KernelSpec> {
    Arc::new(KernelSpec {
        id: KernelId(id),
        name: match id {
            0 => "MedianBlur",
            1 => "GaussianBlur",
            _ => "Synthetic",
        },
        bitstream: BitstreamId(id),
        n_int_args: 3,
        n_float_args: 0,
        n_tile_args: 2,
        loops: vec![
            LoopTemplate {
                extent: Extent::Arg(2),
                init: 0,
                incr: 1,
            },
            LoopTemplate {
                extent: Extent::Arg(0),
                init: 1,
                incr: 1,
            },
            LoopTemplate {
                extent: Extent::Arg(1),
                init: 1,
                incr: 1,
            },
        ],
        per_iter_cost: us(cost),
        checkpoint_stride: stride,
    })
}

/// Criterion 1: the event-driven engine reproduces the quantum-stepped
/// reference exactly on randomized small instances.
#[test]
fn criterion_1_oracle_equivalence() {
    let mut rng = SplitMix64::new(0xC1);
    let instances = 300;
    let mut total_preempts = 0usize;
    for case in 0..instances {
        let rrs = 1 + rng.below(2) as u32;
        let preemption = rng.below(4) != 0; // preemption on three quarters of the time
        let n_tasks = rng.below(7);
        let stride = [1, 1, 1, 2, 3][rng.below(5) as usize];
        // a third of the instances stagger escalating priorities over long
        // kernels, so preemption chains are common
        let adversarial = rng.below(3) == 0;
        let kernels: Vec<Arc<KernelSpec>> = (0..3)
            .map(|id| test_kernel(id, 1 + rng.below(4), stride))
            .collect();
        let tasks: Vec<Task> = (0..n_tasks)
            .map(|i| {
                let kernel = Arc::clone(&kernels[rng.below(3) as usize]);
                // paired priorities make equal-priority victim ties common
                let (dims_lo, priority, arrival) = if adversarial {
                    (8, ((i / 2) % 5) as u8, i * 150 + rng.below(50))
                } else {
                    (1, rng.below(5) as u8, rng.below(2_000))
                };
                Task::new(
                    TaskId(i as u32),
                    kernel,
                    vec![
                        dims_lo + rng.below(12) as i64, // H
                        dims_lo + rng.below(12) as i64, // W
                        1 + rng.below(3) as i64,        // iters: total work <= 1083
                    ],
                    priority,
                    us(arrival),
                )
                .unwrap()
            })
            .collect();
        let config = SimConfig {
            regions: rrs,
            policy: SchedPolicy {
                preemption_enabled: preemption,
                ..SchedPolicy::default()
            },
            timing: TimingConfig {
                save_window: us(rng.below(3)),
                preempt_overhead: us(rng.below(30)),
                restore_overhead: us(rng.below(30)),
                t_partial: us(1 + rng.below(if adversarial { 40 } else { 200 })),
                t_full: us(400),
            },
        };

        let expected = oracle::simulate(&config, &tasks);
        let record = sched::run(&config, tasks, RunMeta::synthetic()).unwrap();

        let got_launches: Vec<(u64, u32, u32)> = record
            .launches
            .iter()
            .map(|l| (l.time.as_micros(), l.task.0, l.region.0))
            .collect();
        assert_eq!(got_launches, expected.launches, "case {case}: launches");
        let got_first: Vec<(u32, u64)> = record
            .tasks
            .iter()
            .map(|t| (t.id.0, t.first_launch.unwrap().as_micros()))
            .collect();
        assert_eq!(
            got_first, expected.first_launch,
            "case {case}: first launches"
        );
        let got_finish: Vec<(u32, u64)> = record
            .tasks
            .iter()
            .map(|t| (t.id.0, t.finish.unwrap().as_micros()))
            .collect();
        assert_eq!(got_finish, expected.finish, "case {case}: finish times");
        let got_preempts: Vec<(u64, u32)> = record
            .preemptions
            .iter()
            .map(|p| (p.time.as_micros(), p.victim.0))
            .collect();
        assert_eq!(got_preempts, expected.preempts, "case {case}: preemptions");
        assert_eq!(
            record.n_reconfigs, expected.n_reconfigs,
            "case {case}: reconfiguration count"
        );
        total_preempts += record.preemptions.len();
    }
    println!(
        "criterion 1 PASS - engine matches the 1us quantum oracle on {instances} instances \
         ({total_preempts} preemptions observed)"
    );
}

/// Criterion 2: checkpoint lost-work bound, torn-save coverage and exact
/// preempt/resume round-trips at the default 1 us save window.
#[test]
fn criterion_2_checkpoint_lost_work() {
    // direct segment-level round-trips
    let mut rng = SplitMix64::new(0xC2);
    let timing = TimingConfig::default();
    assert_eq!(timing.save_window, us(1));
    let mut segment_preempts = 0usize;
    let mut segment_torn = 0usize;
    for _ in 0..1_500 {
        let kernel = test_kernel(0, 1 + rng.below(4), 1);
        let mut task = Task::new(
            TaskId(0),
            Arc::clone(&kernel),
            vec![
                1 + rng.below(10) as i64,
                1 + rng.below(10) as i64,
                1 + rng.below(3) as i64,
            ],
            0,
            SimTime::ZERO,
        )
        .unwrap();
        let dims = exec::LoopDims::for_kernel(&kernel, &task.args).unwrap();
        let start_p = rng.below(task.total_work);
        if start_p > 0 {
            task.context = Some(exec::capture_context(&dims, start_p, true).unwrap());
            task.completed_work = start_p;
        }
        task.transition(TaskState::Queued).unwrap();
        task.transition(TaskState::Running).unwrap();
        let restore = exec::restore_cost(&task, &timing);
        let segment = ExecSegment {
            task: task.id,
            region: dprsim::RegionId(0),
            start: us(rng.below(500)),
            restore,
            start_progress: start_p,
            end: None,
            end_reason: None,
        };
        let span = restore + kernel.per_iter_cost * (task.total_work - start_p) + us(rng.below(5));
        let t = segment.start + us(rng.below(span.as_micros() + 1));
        let out = exec::preempt(&mut task, t, &segment, &timing).unwrap();
        // lost-work bound at checkpoint stride 1
        assert!(out.progress - out.durable <= 1);
        // exact round-trip through the saved context
        let resumed = exec::resume_progress(task.context.as_ref().unwrap(), &dims).unwrap();
        assert_eq!(resumed, out.durable);
        assert_eq!(resumed, task.completed_work);
        segment_preempts += 1;
        segment_torn += usize::from(out.torn);
    }

    // scheduler-level preemptions: strictly escalating priorities arriving
    // while the previous kernel still runs, so nearly every arrival preempts
    let mut sched_preempts = 0usize;
    let mut sched_torn = 0usize;
    for round in 0..150u64 {
        let mut rng = SplitMix64::new(0xBEEF + round);
        let kernels: Vec<Arc<KernelSpec>> = (0..2)
            .map(|id| test_kernel(id, 1 + rng.below(3), 1))
            .collect();
        let n = 10u32;
        let tasks: Vec<Task> = (0..n)
            .map(|i| {
                Task::new(
                    TaskId(i),
                    Arc::clone(&kernels[rng.below(2) as usize]),
                    vec![
                        500 + rng.below(200) as i64, // >= 0.25 s of work
                        500 + rng.below(200) as i64,
                        1 + rng.below(2) as i64,
                    ],
                    i as u8,
                    us(u64::from(i) * 250_000 + rng.below(1_000)),
                )
                .unwrap()
            })
            .collect();
        let mut config = SimConfig::new(1);
        config.policy.n_priorities = n as u8;
        let record = sched::run(&config, tasks, RunMeta::synthetic()).unwrap();
        for p in &record.preemptions {
            assert!(p.progress - p.durable <= 1, "lost more than one iteration");
            sched_torn += usize::from(p.torn);
        }
        sched_preempts += record.preemptions.len();
        audit::audit_run(&record).unwrap();
    }
    assert!(
        segment_preempts + sched_preempts >= 1_000,
        "need at least 1000 randomized preemptions, got {}",
        segment_preempts + sched_preempts
    );
    assert!(sched_preempts >= 500, "scheduler path exercised too little");
    let torn_fraction =
        (segment_torn + sched_torn) as f64 / (segment_preempts + sched_preempts) as f64;
    assert!(
        torn_fraction >= 0.01,
        "valid=0 fallback fraction {torn_fraction} below 1%"
    );
    println!(
        "criterion 2 PASS - {} preemptions, lost work <= 1 iteration, round-trips exact, \
         torn-save fraction {:.1}%",
        segment_preempts + sched_preempts,
        torn_fraction * 100.0
    );
}

/// Criterion 3: scheduling invariants over the entire sweep trace set.
#[test]
fn criterion_3_sweep_invariants() {
    let out = run_sweep(&SweepConfig::default()).unwrap();
    assert_eq!(out.cells.len(), 60);
    let mut runs = 0;
    for cell in &out.cells {
        assert_eq!(cell.runs.len(), 10);
        for record in &cell.runs {
            audit::audit_run(record).unwrap_or_else(|e| {
                panic!(
                    "cell {}/{}/{}rr/preemption={}: {e}",
                    cell.key.rate.label, cell.key.size.0, cell.key.rrs, cell.key.preemption
                )
            });
            runs += 1;
        }
    }
    println!(
        "criterion 3 PASS - ICAP exclusivity, FCFS and priority invariants hold over {runs} sweep runs"
    );
}

/// Criterion 4: an urgent arrival is served almost immediately under
/// preemption, and only after a running kernel drains without it.
#[test]
fn criterion_4_preemptive_service_time() {
    for rrs in [1u32, 2] {
        let mut tasks: Vec<Task> = (0..rrs)
            .map(|i| {
                Task::new(
                    TaskId(i),
                    KernelSpec::median_blur(),
                    vec![600, 600, 3],
                    0,
                    SimTime::ZERO,
                )
                .unwrap()
            })
            .collect();
        let urgent_arrival = us(500_000);
        tasks.push(
            Task::new(
                TaskId(rrs),
                KernelSpec::gaussian_blur(),
                vec![200, 200, 1],
                4,
                urgent_arrival,
            )
            .unwrap(),
        );
        let timing = TimingConfig::default();

        let preemptive =
            sched::run(&SimConfig::new(rrs), tasks.clone(), RunMeta::synthetic()).unwrap();
        // every region was still busy with >= 1 s of remaining work when the
        // urgent task arrived (remaining = the first segment's planned span)
        let urgent = &preemptive.tasks[rrs as usize];
        let remaining: Vec<SimTime> = preemptive.tasks[..rrs as usize]
            .iter()
            .map(|t| planned_remaining_at(&preemptive, t, urgent_arrival))
            .collect();
        assert!(remaining.iter().all(|&r| r >= SimTime::from_secs(1)));
        let service_p = metrics::service_time(urgent).unwrap();
        let bound = timing.preempt_overhead + timing.t_partial + us(10_000);
        assert!(
            service_p <= bound,
            "{rrs} RRs: preemptive service {service_p} exceeds {bound}"
        );

        let non_preemptive = sched::run(
            &SimConfig::new(rrs).with_preemption(false),
            tasks,
            RunMeta::synthetic(),
        )
        .unwrap();
        let urgent_np = &non_preemptive.tasks[rrs as usize];
        let service_np = metrics::service_time(urgent_np).unwrap();
        let shortest = remaining.iter().min().copied().unwrap();
        assert!(
            service_np >= shortest,
            "{rrs} RRs: non-preemptive service {service_np} below {shortest}"
        );
        println!(
            "criterion 4 PASS ({rrs} RR) - preemptive service {} us <= {} us; \
             non-preemptive {} us >= shortest remaining {} us",
            service_p, bound, service_np, shortest
        );
    }
}

/// Runtime a task's first segment still had ahead of it at instant `t`,
/// ignoring any preemption that cut the segment short.
fn planned_remaining_at(record: &RunRecord, task: &metrics::TaskRecord, t: SimTime) -> SimTime {
    let seg = &task.segments[0];
    let cost = record
        .kernel_costs
        .iter()
        .find(|(id, ..)| *id == task.kernel)
        .map(|&(_, _, c, _)| c)
        .expect("kernel cost recorded");
    let planned_finish = seg.start + seg.restore + cost * (task.total_work - seg.start_progress);
    planned_finish.saturating_sub(t)
}

/// Criterion 5: the reported full-reconfiguration bound matches the formula
/// with the measured 0.22 s / 0.07 s constants, to within 1 ulp.
#[test]
fn criterion_5_full_reconfig_bound_formula() {
    let out = run_sweep(&SweepConfig::default()).unwrap();
    let mut checked = 0;
    for cell in out.cells.iter().filter(|c| c.key.rate.label == "busy") {
        for record in &cell.runs {
            let got = metrics::full_reconfig_bound(record, us(220_000), us(70_000)).unwrap();
            let n = record.tasks.len() as f64;
            let expect =
                n / (record.makespan.as_micros() as f64 / 1e6 + record.n_reconfigs as f64 * 0.15);
            let ulp = (got - expect).abs() / expect.abs();
            assert!(
                ulp <= f64::EPSILON,
                "bound {got} vs formula {expect} differs by {ulp}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 200); // 5 sizes x 2 rrs x 2 preemption x 10 replicas
    println!("criterion 5 PASS - bound formula exact on {checked} busy-rate records");
}

fn cell_aggregate(
    out: &SweepOutput,
    rate: &str,
    size: u32,
    rrs: u32,
    pre: bool,
) -> metrics::Aggregate {
    let cell = out
        .cells
        .iter()
        .find(|c| {
            c.key.rate.label == rate
                && c.key.size.0 == size
                && c.key.rrs == rrs
                && c.key.preemption == pre
        })
        .expect("cell exists");
    let refs: Vec<&RunRecord> = cell.runs.iter().collect();
    metrics::aggregate(&refs).unwrap()
}

/// Criterion 6: qualitative trends at desk scale with the default cost
/// model, base seed 15, 30 tasks, averaged over 10 replicas.
#[test]
fn criterion_6_qualitative_trends() {
    let out = run_sweep(&SweepConfig::default()).unwrap();

    // (a) busy-rate service exceeds idle-rate service at every priority
    for rrs in [1, 2] {
        for pre in [false, true] {
            let busy = cell_aggregate(&out, "busy", 600, rrs, pre);
            let idle = cell_aggregate(&out, "idle", 600, rrs, pre);
            for (b, i) in busy.per_priority.iter().zip(&idle.per_priority) {
                assert!(
                    b.service_mean_us.mean > i.service_mean_us.mean,
                    "priority {}: busy {} <= idle {} ({rrs} RR, preemption {pre})",
                    b.priority,
                    b.service_mean_us.mean,
                    i.service_mean_us.mean
                );
            }
        }
    }

    // (b) two regions never hurt mean throughput
    for rate in ["busy", "medium", "idle"] {
        for size in [200, 300, 400, 500, 600] {
            for pre in [false, true] {
                let one = cell_aggregate(&out, rate, size, 1, pre).throughput.mean;
                let two = cell_aggregate(&out, rate, size, 2, pre).throughput.mean;
                assert!(
                    two >= one,
                    "{rate}/{size}/preemption={pre}: 2 RR {two} < 1 RR {one}"
                );
            }
        }
    }

    // (c) preemption overhead per cell within [-1%, 25%], sweep mean <= 10%
    let pairs = out.paired_overheads();
    assert_eq!(pairs.len(), 30);
    let mut cell_means = Vec::new();
    for (key, overheads) in &pairs {
        let ms = metrics::mean_std(overheads);
        assert!(
            (-0.01..=0.25).contains(&ms.mean),
            "{}/{}/{}rr: overhead {}",
            key.rate.label,
            key.size.0,
            key.rrs,
            ms.mean
        );
        cell_means.push(ms.mean);
    }
    let sweep_mean = cell_means.iter().sum::<f64>() / cell_means.len() as f64;
    assert!(sweep_mean <= 0.10, "sweep-wide overhead mean {sweep_mean}");
    println!(
        "criterion 6 PASS - service busy>idle per priority, throughput 2RR>=1RR, \
         overhead per cell in [-1%, 25%], sweep mean {:.2}%",
        sweep_mean * 100.0
    );
}

/// Criterion 7: the full sweep is byte-deterministic given the base seed.
#[test]
fn criterion_7_determinism() {
    let cfg = SweepConfig::default();
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a.runs_csv(), b.runs_csv());
    assert_eq!(a.aggregate_csv(), b.aggregate_csv());
    assert_eq!(a.overhead_csv(), b.overhead_csv());
    let (ta, tb) = (a.traces(), b.traces());
    assert_eq!(ta.len(), 600);
    assert_eq!(ta, tb);
    let bytes: usize = ta.iter().map(|(_, c)| c.len()).sum();
    println!(
        "criterion 7 PASS - two sweep executions produced byte-identical CSVs and {} trace bytes",
        bytes
    );
}

/// Criterion 8: the Median Blur signature pads to exactly 5 dummy ints and
/// 8 dummy floats.
#[test]
fn criterion_8_signature_padding() {
    let mb = KernelSpec::median_blur();
    assert_eq!((mb.n_int_args, mb.n_float_args, mb.n_tile_args), (3, 0, 2));
    let padding = mb.validate_signature().unwrap();
    assert_eq!(
        padding,
        Padding {
            ints: 5,
            floats: 8,
            tiles: 0
        }
    );
    println!(
        "criterion 8 PASS - MedianBlur(3 ints, 0 floats, 2 tiles) pads to 5 dummy ints, \
         8 dummy floats, 0 dummy tiles"
    );
}
