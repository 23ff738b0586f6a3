//! Scheduling policy and timing knobs.

use crate::time::SimTime;

/// Tie-break rule used when several running tasks are equally eligible
/// victims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VictimRule {
    /// Prefer the region whose current segment started most recently (least
    /// sunk work discarded), then the lowest region id.
    #[default]
    MostRecentStart,
}

/// Scheduler policy bundle: priority-level count plus the preemption switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedPolicy {
    pub preemption_enabled: bool,
    /// Number of priority levels; priorities range over `[0, n_priorities)`,
    /// higher value = more urgent.
    pub n_priorities: u8,
    pub victim_rule: VictimRule,
}

impl Default for SchedPolicy {
    fn default() -> Self {
        SchedPolicy {
            preemption_enabled: true,
            n_priorities: 5,
            victim_rule: VictimRule::MostRecentStart,
        }
    }
}

/// Cost-model knobs. Defaults: the reconfiguration times are the measured
/// 0.07 s partial / 0.22 s full values; the context-transfer costs and the
/// save window are model knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingConfig {
    /// Window after a checkpoint write during which an asynchronous stop
    /// tears the save (the resume then falls back to the previous one).
    pub save_window: SimTime,
    /// Host-side cost of copying a stopped kernel's context out of the
    /// region before the region can be reused.
    pub preempt_overhead: SimTime,
    /// Cost of copying a saved context back into the region at the start of
    /// a resumed segment.
    pub restore_overhead: SimTime,
    /// Duration of one partial reconfiguration (ICAP occupancy).
    pub t_partial: SimTime,
    /// Duration of a full-fabric reconfiguration; only used for the
    /// full-reconfiguration throughput bound.
    pub t_full: SimTime,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            save_window: SimTime::from_micros(1),
            preempt_overhead: SimTime::from_micros(100),
            restore_overhead: SimTime::from_micros(100),
            t_partial: SimTime::from_micros(70_000),
            t_full: SimTime::from_micros(220_000),
        }
    }
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    /// Number of reconfigurable regions.
    pub regions: u32,
    pub policy: SchedPolicy,
    pub timing: TimingConfig,
}

impl SimConfig {
    pub fn new(regions: u32) -> SimConfig {
        SimConfig {
            regions,
            policy: SchedPolicy::default(),
            timing: TimingConfig::default(),
        }
    }

    pub fn with_preemption(mut self, on: bool) -> SimConfig {
        self.policy.preemption_enabled = on;
        self
    }
}
