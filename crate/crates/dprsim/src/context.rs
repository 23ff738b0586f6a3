//! Saved-context record for preempted kernels.

/// Capacity of the per-region context store: how many loop variables a kernel
/// may nominate for checkpointing. Compile-time constant.
pub const CONTEXT_CAPACITY: usize = 16;

/// The saved-variable record held per region and copied to the host when a
/// kernel is stopped.
///
/// `saved[i]` tells a resume operation whether slot `i` was ever durably
/// checkpointed; unsaved slots restore to `init_vars[i]`. `valid == false`
/// records that the asynchronous stop interrupted an in-flight save, in which
/// case the record holds the previously saved values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub vars: [i64; CONTEXT_CAPACITY],
    pub init_vars: [i64; CONTEXT_CAPACITY],
    pub incr_vars: [i64; CONTEXT_CAPACITY],
    pub saved: [bool; CONTEXT_CAPACITY],
    pub valid: bool,
}

impl Context {
    /// A context with nothing saved: every variable restores to its init.
    pub fn empty() -> Context {
        Context {
            vars: [0; CONTEXT_CAPACITY],
            init_vars: [0; CONTEXT_CAPACITY],
            incr_vars: [1; CONTEXT_CAPACITY],
            saved: [false; CONTEXT_CAPACITY],
            valid: true,
        }
    }

    /// True if no variable was ever checkpointed.
    pub fn is_blank(&self) -> bool {
        self.saved.iter().all(|&s| !s)
    }
}
