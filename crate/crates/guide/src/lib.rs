//! Runs every code sample in the book as a doc-test.
//!
//! mdbook renders `book/` but cannot execute its Rust snippets against this
//! workspace, so each chapter is included here as a module's documentation
//! and `cargo test --doc -p guide` compiles and runs all of its code fences.
//! When a test fails, the module name points at the chapter it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[doc = include_str!("../../../book/src/checkpointing.md")]
pub mod checkpointing {}

#[doc = include_str!("../../../book/src/engine.md")]
pub mod engine {}

#[doc = include_str!("../../../book/src/scheduling.md")]
pub mod scheduling {}

#[doc = include_str!("../../../book/src/workloads.md")]
pub mod workloads {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
