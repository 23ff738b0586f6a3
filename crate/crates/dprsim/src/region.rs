//! Reconfigurable region state.

use std::fmt;

use crate::exec::ExecSegment;
use crate::kernel::BitstreamId;
use crate::task::TaskId;
use crate::time::SimTime;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RegionId(pub u32);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RegionState {
    Idle,
    /// Committed to an incoming task and waiting for (or undergoing) its
    /// partial reconfiguration. `occupant` is unset; the task rides in
    /// `pending`.
    Reconfiguring,
    Running,
}

/// One reconfigurable region. A region is available to the scheduler only
/// when `state == Idle` and no launch is pending.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: RegionId,
    pub state: RegionState,
    /// Bitstream currently configured into the fabric, if any.
    pub loaded_bitstream: Option<BitstreamId>,
    /// Task currently executing (only when `Running`).
    pub occupant: Option<TaskId>,
    /// End of the current activity: kernel finish or reconfiguration done.
    pub busy_until: Option<SimTime>,
    /// Open execution segment of the occupant.
    pub segment: Option<ExecSegment>,
    /// Task committed to launch here once reconfiguration completes.
    pub pending: Option<TaskId>,
}

impl Region {
    pub fn new(id: RegionId) -> Region {
        Region {
            id,
            state: RegionState::Idle,
            loaded_bitstream: None,
            occupant: None,
            busy_until: None,
            segment: None,
            pending: None,
        }
    }

    pub fn is_available(&self) -> bool {
        self.state == RegionState::Idle && self.pending.is_none() && self.occupant.is_none()
    }

    /// Structural invariants; checked in debug builds after every mutation.
    pub fn check(&self) {
        match self.state {
            RegionState::Running => {
                debug_assert!(self.occupant.is_some());
                debug_assert!(self.loaded_bitstream.is_some());
                debug_assert!(self.segment.is_some());
            }
            RegionState::Reconfiguring => {
                debug_assert!(self.occupant.is_none());
                debug_assert!(self.pending.is_some());
            }
            RegionState::Idle => {
                debug_assert!(self.occupant.is_none());
                debug_assert!(self.segment.is_none());
            }
        }
    }
}
