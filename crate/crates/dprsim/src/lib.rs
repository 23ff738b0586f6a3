//! Deterministic discrete-event simulation of an FPGA used as a multi-tasking
//! server: a preemptive, priority-aware FCFS scheduler dispatches
//! checkpointable kernels onto reconfigurable regions (RRs) under partial
//! reconfiguration cost and a single configuration port.
//!
//! The crate is organised in layers:
//!
//! - [`time`], [`kernel`], [`task`], [`region`], [`context`], [`config`]:
//!   the domain types (integer microsecond clock, kernel descriptions with a
//!   uniform-interface rule, task lifecycles, region state, saved contexts).
//! - [`exec`]: progress arithmetic for kernels modelled as nested-loop
//!   iteration spaces with durable checkpoints, preemption and resume.
//! - [`engine`]: the event core — calendar queue, interrupt-or-timeout wait,
//!   trace sink.
//! - [`sched`]: the scheduler main loop (priority queues, victim selection,
//!   reconfiguration as an internal task serialised on one ICAP).
//! - [`workload`], [`metrics`], [`audit`], [`sweep`]: seeded workload
//!   generation, evaluation metrics, invariant checking, and the experiment
//!   sweep harness.
//!
//! Everything is virtual-time and integer-based: the same seed yields
//! byte-identical traces on every platform.
//!
//! ```
//! use dprsim::{sched, workload, metrics};
//!
//! let menu = workload::study_menu();
//! let cfg = workload::WorkloadConfig {
//!     seed: 15,
//!     n_tasks: 30,
//!     window: dprsim::SimTime::from_secs(6),
//!     sizes: vec![(600, 600)],
//!     n_priorities: 5,
//!     menu,
//! };
//! let tasks = workload::generate(&cfg).unwrap();
//! let record = sched::run(
//!     &dprsim::SimConfig::new(1),
//!     tasks,
//!     metrics::RunMeta::labelled("busy", "600", 1, true, 15, 0),
//! )
//! .unwrap();
//! assert_eq!(record.tasks.len(), 30);
//! assert!(metrics::throughput(&record).unwrap() > 0.0);
//! ```

pub mod audit;
pub mod config;
pub mod context;
pub mod engine;
pub mod exec;
pub mod kernel;
pub mod metrics;
pub mod region;
pub mod rng;
pub mod sched;
pub mod task;
pub mod time;
pub mod workload;

pub mod sweep;

pub use config::{SchedPolicy, SimConfig, TimingConfig, VictimRule};
pub use context::{Context, CONTEXT_CAPACITY};
pub use engine::{Engine, EngineError, Event, EventKind, WaitResult};
pub use exec::{ExecError, ExecSegment, LoopDims, SegmentEnd};
pub use kernel::{BitstreamId, KernelId, KernelSpec, Padding, SignatureError};
pub use metrics::{RunMeta, RunRecord};
pub use region::{Region, RegionId, RegionState};
pub use sched::{Scheduler, SimError};
pub use task::{Task, TaskId, TaskState};
pub use time::SimTime;
