//! Invariant checks over completed runs.
//!
//! Every property here must hold for any run the scheduler produces; the
//! acceptance suite applies them to the full experiment sweep, and the
//! property tests apply them to randomised small instances.

use thiserror::Error;

use crate::exec::SegmentEnd;
use crate::metrics::RunRecord;
use crate::task::TaskState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violated: {0}")]
pub struct AuditError(pub String);

fn fail(msg: String) -> Result<(), AuditError> {
    Err(AuditError(msg))
}

/// Runs every audit below.
pub fn audit_run(record: &RunRecord) -> Result<(), AuditError> {
    icap_exclusive(record)?;
    fcfs_within_priority(record)?;
    priority_respected_at_dispatch(record)?;
    preemption_safety(record)?;
    conservation(record)?;
    segments_cover_the_work(record)?;
    counters_consistent(record)?;
    Ok(())
}

/// Reconfiguration intervals `[start, end)` never overlap: the single ICAP
/// serialises them across all regions.
pub fn icap_exclusive(record: &RunRecord) -> Result<(), AuditError> {
    let mut sorted = record.icap.clone();
    sorted.sort_by_key(|r| r.start);
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return fail(format!(
                "ICAP intervals overlap: region {} [{}, {}) and region {} [{}, {})",
                pair[0].region,
                pair[0].start,
                pair[0].end,
                pair[1].region,
                pair[1].start,
                pair[1].end
            ));
        }
    }
    Ok(())
}

/// Within one priority level, tasks enter service in arrival order. Service
/// starts when a region is committed to the task; the launch itself may
/// trail behind a reconfiguration, so launch instants of equal-priority
/// tasks can legitimately cross when one lands on an already-loaded region.
pub fn fcfs_within_priority(record: &RunRecord) -> Result<(), AuditError> {
    for p in 0..record.config.policy.n_priorities {
        let mut of_p: Vec<_> = record.tasks.iter().filter(|t| t.priority == p).collect();
        of_p.sort_by_key(|t| (t.arrival, t.id));
        let first_commit = |task: crate::task::TaskId| {
            record
                .commits
                .iter()
                .find(|c| c.task == task)
                .map(|c| c.time)
        };
        for pair in of_p.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if let (Some(ca), Some(cb)) = (first_commit(a.id), first_commit(b.id)) {
                if ca > cb {
                    return fail(format!(
                        "FCFS broken at priority {p}: task {} (arrived {}) served {} after \
                         task {} (arrived {}) served {}",
                        a.id, a.arrival, ca, b.id, b.arrival, cb
                    ));
                }
            }
        }
    }
    Ok(())
}

/// No task was dequeued for service while a strictly higher-priority task
/// sat queued. Arrival dispatches are exempt: a freshly arrived task is
/// served directly and simply re-enters the queue when nothing is free.
pub fn priority_respected_at_dispatch(record: &RunRecord) -> Result<(), AuditError> {
    for d in &record.dispatches {
        if d.via != crate::metrics::DispatchVia::Queue {
            continue;
        }
        if let Some(waiting) = d.max_other_queued {
            if waiting > d.priority {
                return fail(format!(
                    "task {} (priority {}) dequeued at {} while priority {} waited",
                    d.task, d.priority, d.time, waiting
                ));
            }
        }
    }
    Ok(())
}

/// Preemption discipline: none at all when disabled; victims strictly below
/// the incoming priority when enabled.
pub fn preemption_safety(record: &RunRecord) -> Result<(), AuditError> {
    if !record.config.policy.preemption_enabled && !record.preemptions.is_empty() {
        return fail(format!(
            "{} preemptions recorded with preemption disabled",
            record.preemptions.len()
        ));
    }
    for p in &record.preemptions {
        if p.victim_priority >= p.incoming_priority {
            return fail(format!(
                "victim {} (priority {}) preempted by {} (priority {})",
                p.victim, p.victim_priority, p.incoming, p.incoming_priority
            ));
        }
        // worst case: a full stride since the last checkpoint, plus one more
        // stride discarded by a torn save
        let stride = record_stride(record, p.victim);
        if p.progress - p.durable > 2 * stride - 1 {
            return fail(format!(
                "preemption of {} lost {} iterations (stride {stride})",
                p.victim,
                p.progress - p.durable
            ));
        }
    }
    Ok(())
}

fn record_stride(record: &RunRecord, victim: crate::task::TaskId) -> u64 {
    record
        .tasks
        .iter()
        .find(|t| t.id == victim)
        .and_then(|t| {
            record
                .kernel_costs
                .iter()
                .find(|(id, ..)| *id == t.kernel)
                .map(|&(_, _, _, stride)| stride)
        })
        .unwrap_or(1)
}

/// Every generated task terminates Done exactly once.
pub fn conservation(record: &RunRecord) -> Result<(), AuditError> {
    for t in &record.tasks {
        if t.state != TaskState::Done {
            return fail(format!("task {} ended in state {:?}", t.id, t.state));
        }
        if t.finish.is_none() || t.first_launch.is_none() {
            return fail(format!("task {} lacks launch/finish instants", t.id));
        }
        if t.completed_work != t.total_work {
            return fail(format!(
                "task {} done with {}/{} iterations",
                t.id, t.completed_work, t.total_work
            ));
        }
    }
    Ok(())
}

/// Per task: segments are time-disjoint with non-decreasing progress, their
/// progress ranges cover `[0, total_work)` with overlaps only (never gaps),
/// and total busy time is at least the pure compute time.
pub fn segments_cover_the_work(record: &RunRecord) -> Result<(), AuditError> {
    for t in &record.tasks {
        if t.segments.is_empty() {
            return fail(format!("done task {} has no segments", t.id));
        }
        let mut covered_to = 0u64;
        let mut busy = 0u64;
        for (i, seg) in t.segments.iter().enumerate() {
            let end = seg
                .end
                .ok_or_else(|| AuditError(format!("task {} segment {i} left open", t.id)))?;
            if i + 1 < t.segments.len() {
                let next = &t.segments[i + 1];
                if next.start < end {
                    return fail(format!(
                        "task {} segments {i},{} overlap in time",
                        t.id,
                        i + 1
                    ));
                }
                if next.start_progress < seg.start_progress {
                    return fail(format!(
                        "task {} segment {} regresses its start progress",
                        t.id,
                        i + 1
                    ));
                }
            }
            if seg.start_progress > covered_to {
                return fail(format!(
                    "task {} has a progress gap before segment {i} ({} > {})",
                    t.id, seg.start_progress, covered_to
                ));
            }
            let reached = match seg.end_reason {
                Some(SegmentEnd::Finished) => t.total_work,
                _ => {
                    // durable progress the following segment resumed from
                    t.segments
                        .get(i + 1)
                        .map(|n| n.start_progress)
                        .unwrap_or(seg.start_progress)
                }
            };
            covered_to = covered_to.max(reached);
            busy += (end - seg.start).as_micros();
        }
        if covered_to != t.total_work {
            return fail(format!(
                "task {} segments cover only {}/{} iterations",
                t.id, covered_to, t.total_work
            ));
        }
        let cost = record
            .kernel_costs
            .iter()
            .find(|(id, ..)| *id == t.kernel)
            .map(|&(_, _, c, _)| c.as_micros())
            .unwrap_or(1);
        if busy < t.total_work * cost {
            return fail(format!(
                "task {} busy {}us is less than pure compute {}us",
                t.id,
                busy,
                t.total_work * cost
            ));
        }
    }
    Ok(())
}

/// Counters agree with the logs; the makespan is the latest finish.
pub fn counters_consistent(record: &RunRecord) -> Result<(), AuditError> {
    if record.n_reconfigs as usize != record.icap.len() {
        return fail("reconfiguration counter disagrees with the ICAP ledger".into());
    }
    if record.n_preemptions as usize != record.preemptions.len() {
        return fail("preemption counter disagrees with the log".into());
    }
    let torn = record.preemptions.iter().filter(|p| p.torn).count();
    if record.n_torn_saves as usize != torn {
        return fail("torn-save counter disagrees with the log".into());
    }
    let max_finish = record
        .tasks
        .iter()
        .filter_map(|t| t.finish)
        .max()
        .unwrap_or(crate::time::SimTime::ZERO);
    if record.makespan != max_finish {
        return fail(format!(
            "makespan {} is not the latest finish {max_finish}",
            record.makespan
        ));
    }
    let sum_preempt: u32 = record.tasks.iter().map(|t| t.preemptions).sum();
    if sum_preempt != record.n_preemptions {
        return fail("per-task preemption counts do not sum to the total".into());
    }
    Ok(())
}
