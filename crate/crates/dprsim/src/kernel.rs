//! Kernel descriptions and the uniform-interface rule.
//!
//! Every kernel deployed into a reconfigurable region must present the same
//! external interface to the shell, so declared scalar arguments are padded
//! with dummies up to a fixed slot budget. A kernel whose declared counts
//! exceed the budget cannot be deployed at all.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::context::CONTEXT_CAPACITY;
use crate::time::SimTime;

/// Slot budget for integer scalar arguments.
pub const INT_SLOTS: u8 = 8;
/// Slot budget for floating-point scalar arguments.
pub const FLOAT_SLOTS: u8 = 8;
/// Slot budget for tile (pointer/array) arguments.
pub const TILE_SLOTS: u8 = 2;

/// Identity of a kernel routine.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct KernelId(pub u16);

/// Identity of the partial bitstream implementing a kernel. Distinct kernels
/// may not share a bitstream, but one bitstream can serve several argument
/// variants of the same kernel.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BitstreamId(pub u16);

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BitstreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Scalar argument families in the uniform interface.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ArgKind {
    Int,
    Float,
    Tile,
}

impl fmt::Display for ArgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgKind::Int => write!(f, "int"),
            ArgKind::Float => write!(f, "float"),
            ArgKind::Tile => write!(f, "tile"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("{kind} argument count {declared} exceeds the {limit}-slot budget")]
    SlotOverflow {
        kind: ArgKind,
        declared: u8,
        limit: u8,
    },
}

/// Dummy-argument counts completing a declared signature to the uniform
/// interface: `declared + dummy == slots` in every family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub ints: u8,
    pub floats: u8,
    pub tiles: u8,
}

/// One extent of the kernel's nested-loop iteration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Fixed trip count.
    Const(u64),
    /// Trip count read from the task's scalar argument vector at this index.
    Arg(usize),
}

/// One nesting level of the iteration space, outermost first in
/// [`KernelSpec::loops`]. `init` and `incr` describe the surface loop
/// variable; the trip count is the extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopTemplate {
    pub extent: Extent,
    pub init: i64,
    pub incr: i64,
}

/// Static description of a deployable kernel.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub id: KernelId,
    pub name: &'static str,
    pub bitstream: BitstreamId,
    pub n_int_args: u8,
    pub n_float_args: u8,
    pub n_tile_args: u8,
    /// Nested-loop shape, outermost first.
    pub loops: Vec<LoopTemplate>,
    /// Simulated cost of one inner-loop iteration.
    pub per_iter_cost: SimTime,
    /// Durable checkpoint every `checkpoint_stride` inner iterations.
    pub checkpoint_stride: u64,
}

impl KernelSpec {
    /// Checks the declared argument counts against the slot budget and
    /// returns the dummy counts of the padded signature.
    pub fn validate_signature(&self) -> Result<Padding, SignatureError> {
        let check = |kind, declared: u8, limit: u8| {
            if declared > limit {
                Err(SignatureError::SlotOverflow {
                    kind,
                    declared,
                    limit,
                })
            } else {
                Ok(limit - declared)
            }
        };
        Ok(Padding {
            ints: check(ArgKind::Int, self.n_int_args, INT_SLOTS)?,
            floats: check(ArgKind::Float, self.n_float_args, FLOAT_SLOTS)?,
            tiles: check(ArgKind::Tile, self.n_tile_args, TILE_SLOTS)?,
        })
    }

    /// Median Blur: `iters` passes over an H x W image, three checkpointed
    /// loop variables. The per-iteration cost is a model knob.
    pub fn median_blur() -> Arc<KernelSpec> {
        Self::median_blur_with(SimTime::from_micros(2), 1)
    }

    pub fn median_blur_with(per_iter_cost: SimTime, checkpoint_stride: u64) -> Arc<KernelSpec> {
        Arc::new(KernelSpec {
            id: KernelId(0),
            name: "MedianBlur",
            bitstream: BitstreamId(0),
            n_int_args: 3, // H, W, iters
            n_float_args: 0,
            n_tile_args: 2, // input and output arrays
            loops: vec![
                // for_save(k, 0, iters, 1)
                LoopTemplate {
                    extent: Extent::Arg(2),
                    init: 0,
                    incr: 1,
                },
                // for_save(row, 1, H+1, 1)
                LoopTemplate {
                    extent: Extent::Arg(0),
                    init: 1,
                    incr: 1,
                },
                // for_save(col, 1, W+1, 1)
                LoopTemplate {
                    extent: Extent::Arg(1),
                    init: 1,
                    incr: 1,
                },
            ],
            per_iter_cost,
            checkpoint_stride,
        })
    }

    /// Gaussian Blur: single pass, its own bitstream, modelled costlier per
    /// pixel than Median Blur. The per-iteration cost is a model knob.
    pub fn gaussian_blur() -> Arc<KernelSpec> {
        Self::gaussian_blur_with(SimTime::from_micros(3), 1)
    }

    pub fn gaussian_blur_with(per_iter_cost: SimTime, checkpoint_stride: u64) -> Arc<KernelSpec> {
        Arc::new(KernelSpec {
            id: KernelId(1),
            name: "GaussianBlur",
            bitstream: BitstreamId(1),
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
            per_iter_cost,
            checkpoint_stride,
        })
    }
}

/// Asserts structural sanity of a kernel definition: nesting depth must fit
/// the context store and the checkpoint stride must be positive.
pub fn check_kernel(kernel: &KernelSpec) -> Result<(), SignatureError> {
    assert!(
        kernel.loops.len() <= CONTEXT_CAPACITY,
        "kernel {} nests deeper than the context store",
        kernel.name
    );
    assert!(kernel.checkpoint_stride >= 1);
    kernel.validate_signature().map(|_| ())
}
